"""Figures written next to the CSV/JSON outputs (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_history", "plot_entropy", "plot_spectrum", "plot_dscaling", "plot_bench"]


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_history(history, path, e_ref=None):
    """Energy at every check against sweep count; ``dt`` on a twin axis."""
    sweeps = np.array([h["sweep"] for h in history])
    E = np.array([h["E"] for h in history])
    dts = np.array([h["dt"] for h in history])
    fig, ax = plt.subplots(figsize=(6, 4))
    if e_ref is not None:
        err = np.abs(E - e_ref) / abs(e_ref)
        ax.semilogy(sweeps, np.maximum(err, 1e-16), "o-", ms=3)
        ax.set_ylabel("|E - E_ref| / |E_ref|")
    else:
        ax.plot(sweeps, E - E.min() + 1e-16, "o-", ms=3)
        ax.set_yscale("log")
        ax.set_ylabel("E - min E")
    ax.set_xlabel("sweep")
    ax2 = ax.twinx()
    ax2.semilogy(sweeps, dts, color="tab:orange", lw=1)
    ax2.set_ylabel("dt", color="tab:orange")
    return _save(fig, path)


def plot_entropy(entropy, path, fit=None, L=None):
    j = np.arange(1, len(entropy) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(j, entropy, "o", ms=3, label="S_N(j)")
    if fit is not None and L is not None:
        lo, hi = fit.window
        jj = np.arange(lo, hi + 1)
        x = np.log(L / np.pi * np.sin(np.pi * jj / L))
        ax.plot(jj, fit.params["a"] + fit.params["c"] / 6 * x, "-",
                label=f"c = {fit.params['c']:.3f}")
        ax.legend()
    ax.set_xlabel("bond j")
    ax.set_ylabel("entropy (nats)")
    return _save(fig, path)


def plot_spectrum(spectra: dict, path, fit=None, title=None):
    """Singular values per sector on log-log axes, optional power-law fit."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for q, vals in sorted(spectra.items()):
        vals = np.asarray(vals)
        vals = vals[vals > 0]
        ax.loglog(np.arange(1, vals.size + 1), vals, ".", label=f"sector {q}")
    if fit is not None:
        lo, hi = fit.window
        k = np.arange(lo, hi + 1, dtype=float)
        p = fit.params
        ax.loglog(k, (p["C1"] * k + p["C2"]) ** -p["gamma"], "-",
                  label=f"gamma = {p['gamma']:.2f}")
    ax.set_xlabel("k")
    ax.set_ylabel("sigma_k")
    if title:
        ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_dscaling(rows, path):
    d = [r["d"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(d, [r["tau"] for r in rows], "o-")
    ax.set_xlabel("local dimension d")
    ax.set_ylabel("T_T / T_R")
    ax.axhline(1.0, color="grey", lw=0.8)
    return _save(fig, path)


def plot_bench(summary: dict, path):
    pts = summary["points"]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(pts)), [p["tau"] for p in pts])
    ax.set_xticks(range(len(pts)))
    ax.set_xticklabels([p["label"] for p in pts], rotation=60, ha="right", fontsize=7)
    ax.axhline(1.0, color="grey", lw=0.8)
    ax.set_ylabel("speedup tau")
    return _save(fig, path)
