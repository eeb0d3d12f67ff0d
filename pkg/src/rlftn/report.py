"""Writing run reports, tables and figures; re-analysis of saved reports."""

from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path

import numpy as np

from . import plotting
from .observables import FitResult, calabrese_fit, powerlaw_fit

__all__ = [
    "AnalysisError",
    "load_schema",
    "csv_header",
    "validate",
    "write_json",
    "write_table",
    "write_run_outputs",
    "spectrum_window",
    "analyze_report",
]

SPECTRUM_FLOOR = 1e-13


class AnalysisError(ValueError):
    """The report lacks what the requested analysis needs."""


def load_schema(name: str) -> dict:
    text = resources.files("rlftn").joinpath("schemas", name).read_text()
    return json.loads(text)


def csv_header(table: str) -> list[str]:
    return load_schema("csv_tables.json")[table]


def validate(obj, schema_name: str) -> None:
    """Raise ``jsonschema.ValidationError`` if ``obj`` does not match."""
    import jsonschema

    jsonschema.validate(obj, load_schema(schema_name))


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")
    return path


def write_table(path, header, rows) -> Path:
    """CSV with a header row; ``rows`` are sequences or dicts keyed by header."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([r[k] for k in header] if isinstance(r, dict) else list(r))
    return path


def _spectra_rows(spectra: dict):
    for j, secs in spectra.items():
        for q, vals in secs.items():
            for k, v in enumerate(vals, start=1):
                yield [int(j), int(q), k, repr(float(v))]


def write_run_outputs(report: dict, outdir, figures: bool = True, e_ref=None) -> list[Path]:
    """``report.json`` plus history/entropy/spectra CSVs and PNG figures."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    obs = report["observables"]
    paths = [write_json(out / "report.json", report)]
    paths.append(write_table(
        out / "history.csv", csv_header("history.csv"),
        ([h["sweep"], repr(h["dt"]), repr(h["E"])] for h in report["convergence"]["history"]),
    ))
    paths.append(write_table(
        out / "entropy.csv", csv_header("entropy.csv"),
        ([j, repr(s)] for j, s in enumerate(obs["entropy"], start=1)),
    ))
    paths.append(write_table(out / "spectra.csv", csv_header("spectra.csv"), _spectra_rows(obs["spectra"])))
    if figures:
        paths.append(plotting.plot_history(report["convergence"]["history"], out / "history.png", e_ref))
        paths.append(plotting.plot_entropy(obs["entropy"], out / "entropy.png"))
        j = str(report["model"]["L"] // 2)
        if j in obs["spectra"]:
            paths.append(plotting.plot_spectrum(obs["spectra"][j], out / "spectrum.png",
                                                title=f"bond {j}"))
    return paths


def spectrum_window(vals, floor: float = SPECTRUM_FLOOR) -> np.ndarray:
    """Values of one sector kept for the power-law fit (``k <= chi_s``, above ``floor``)."""
    v = np.sort(np.asarray(vals, dtype=float))[::-1]
    return v[v > floor]


def analyze_report(report: dict, fit: str = "all", bond=None, sector: int = 0,
                   two_d=None, calabrese_window=None) -> dict[str, FitResult]:
    """Recompute the spectral fits from a saved run report.

    ``powerlaw`` uses sector ``sector`` on bond ``bond`` (default: central
    bond); ``two_d`` defaults to True for cylinder models, which pins
    ``C2 = 0``. ``calabrese`` fits the entropy profile.
    """
    if fit not in ("all", "powerlaw", "calabrese", "none"):
        raise AnalysisError(f"unknown fit {fit!r}")
    obs = report.get("observables") or {}
    model = report.get("model") or {}
    L = model.get("L")
    out = {}
    if fit in ("all", "powerlaw"):
        spectra = obs.get("spectra")
        if not spectra:
            raise AnalysisError("report has no spectra; cannot fit the power law")
        j = str(bond if bond is not None else L // 2)
        if j not in spectra or str(sector) not in spectra[j]:
            raise AnalysisError(f"report has no spectrum for bond {j}, sector {sector}")
        vals = spectrum_window(spectra[j][str(sector)])
        if two_d is None:
            two_d = model.get("kind") == "cylinder"
        try:
            out["powerlaw"] = powerlaw_fit(vals, two_d=two_d)
        except ValueError as exc:
            raise AnalysisError(f"power-law fit failed: {exc}") from None
    if fit in ("all", "calabrese"):
        ent = obs.get("entropy")
        if not ent or L is None:
            raise AnalysisError("report has no entropy profile; cannot fit")
        try:
            out["calabrese"] = calabrese_fit(ent, L, calabrese_window)
        except ValueError as exc:
            raise AnalysisError(f"entropy fit failed: {exc}") from None
    return out
