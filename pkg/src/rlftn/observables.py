"""Measurements on a (normalized or not) symmetric MPS and two spectral fits."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .models import bond_hamiltonians
from .mps import SymmetricMPS, _transfer_left, left_environments, right_environments

__all__ = [
    "ObservableReport",
    "FitResult",
    "energy",
    "bond_energies",
    "site_expectation",
    "two_point",
    "magnetization",
    "correlation_profile",
    "corrlen_from_profile",
    "correlation_length",
    "entropy_from_lambda",
    "entropy_profile",
    "powerlaw_fit",
    "calabrese_fit",
    "measure",
]


@dataclass
class ObservableReport:
    E: float
    M: float
    xi: float | None
    entropy: list[float]
    spectra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "E": self.E,
            "M": self.M,
            "xi": self.xi,
            "entropy": list(self.entropy),
            "entropy_log_base": "e",
            "spectra": {
                str(j): {str(q): list(map(float, v)) for q, v in secs.items()}
                for j, secs in self.spectra.items()
            },
        }


@dataclass
class FitResult:
    params: dict
    residual_rms: float
    window: tuple[int, int]

    def to_dict(self) -> dict:
        return {"params": dict(self.params), "residual_rms": self.residual_rms,
                "window": list(self.window)}


def _two_site_value(E, M1, M2, op, F):
    d = M1.shape[1]
    theta = np.tensordot(M1, M2, axes=(2, 0))
    a, _, _, c = theta.shape
    ot = (op @ theta.transpose(1, 2, 0, 3).reshape(d * d, a * c)).reshape(d, d, a, c)
    ot = ot.transpose(2, 0, 1, 3)
    t = np.tensordot(E, ot, axes=(1, 0))
    t = np.tensordot(t, F, axes=(3, 1))
    return np.tensordot(theta.conj(), t, axes=4)


def bond_energies(mps: SymmetricMPS, model) -> np.ndarray:
    """``<h_bond(j)> / <psi|psi>`` for ``j = 1..L-1``."""
    E = left_environments(mps)
    F = right_environments(mps)
    norm = E[-1][0, 0].real
    out = []
    for j, hb in enumerate(bond_hamiltonians(model), start=1):
        v = _two_site_value(E[j - 1], mps.site_tensor(j - 1), mps.site_tensor(j), hb, F[j + 1])
        out.append(v.real / norm)
    return np.array(out)


def energy(mps: SymmetricMPS, model) -> float:
    """``<H>`` from left/right environment contractions of every bond term."""
    return float(np.sum(bond_energies(mps, model)))


def site_expectation(mps: SymmetricMPS, op, envs=None) -> np.ndarray:
    """``<op_j>`` for every site."""
    E, F = envs or (left_environments(mps), right_environments(mps))
    norm = E[-1][0, 0].real
    vals = []
    for j in range(mps.L):
        t = _transfer_left(E[j], mps.site_tensor(j), op)
        vals.append(np.tensordot(t, F[j + 1], axes=([0, 1], [0, 1])).real / norm)
    return np.array(vals)


def two_point(mps: SymmetricMPS, op1, op2=None, envs=None) -> np.ndarray:
    """``C[i, k] = <op1_i op2_k>`` for ``i < k`` (upper triangle; rest zero)."""
    op2 = op1 if op2 is None else op2
    E, F = envs or (left_environments(mps), right_environments(mps))
    L = mps.L
    norm = E[-1][0, 0].real
    C = np.zeros((L, L))
    Ms = [mps.site_tensor(j) for j in range(L)]
    for i in range(L - 1):
        t = _transfer_left(E[i], Ms[i], op1)
        for k in range(i + 1, L):
            closed = _transfer_left(t, Ms[k], op2)
            C[i, k] = np.tensordot(closed, F[k + 1], axes=([0, 1], [0, 1])).real / norm
            if k < L - 1:
                t = _transfer_left(t, Ms[k])
    return C


def magnetization(mps: SymmetricMPS, model, envs=None) -> float:
    """Order parameter ``sqrt(sum_{k != k'} <x_k x_k'> / N)`` over all spins.

    ``x`` is the unit-normalized order operator (``X / S`` on the chain,
    Pauli ``X`` on each cylinder leg); ``N`` counts the ordered pairs.
    """
    envs = envs or (left_environments(mps), right_environments(mps))
    xs = model.unit_x()
    xtot = sum(xs)
    n_spins = len(xs) * mps.L
    C = two_point(mps, xtot, envs=envs)
    total = 2.0 * C.sum()
    if len(xs) > 1:
        same = xtot @ xtot - sum(x @ x for x in xs)
        total += site_expectation(mps, same, envs).sum()
    val = total / (n_spins * (n_spins - 1))
    if val < 0:
        if val < -1e-10:
            warnings.warn(f"negative magnetization radicand {val:.3e} clamped to 0")
        val = 0.0
    return float(np.sqrt(val))


def bulk_window(L: int) -> tuple[int, int]:
    """Sites ``[L//4, L - L//4)``: the central half of the chain."""
    return L // 4, L - L // 4


def correlation_profile(mps: SymmetricMPS, model, window=None, envs=None) -> dict[int, float]:
    """``C_r``: mean of ``<x_j x_{j+r}>`` over pairs inside the bulk window.

    On the cylinder each leg is correlated with itself only, and legs are
    averaged.
    """
    envs = envs or (left_environments(mps), right_environments(mps))
    lo, hi = window or bulk_window(mps.L)
    xs = model.unit_x()
    acc = np.zeros((mps.L, mps.L))
    for x in xs:
        acc += two_point(mps, x, envs=envs)
    acc /= len(xs)
    prof = {}
    for r in range(1, hi - lo):
        vals = [acc[j, j + r] for j in range(lo, hi - r)]
        prof[r] = float(np.mean(vals))
    return prof


def corrlen_from_profile(profile: dict[int, float]) -> float | None:
    """``sqrt(sum_{r>1} (r-1)^2 C_r / sum_{r>1} C_r)``; None if undefined."""
    rs = np.array([r for r in profile if r > 1], dtype=float)
    cs = np.array([profile[int(r)] for r in rs])
    den = cs.sum()
    if rs.size == 0 or den <= 0:
        return None
    num = float(np.sum((rs - 1) ** 2 * cs))
    if num < 0:
        return None
    return float(np.sqrt(num / den))


def correlation_length(mps: SymmetricMPS, model, bulk_window=None, envs=None) -> float | None:
    return corrlen_from_profile(correlation_profile(mps, model, bulk_window, envs))


def entropy_from_lambda(lam) -> float:
    """von Neumann entropy (natural log) of normalized Schmidt values."""
    p = np.abs(np.asarray(lam)) ** 2
    tot = p.sum()
    if tot == 0:
        return 0.0
    p = p[p > 0] / tot
    return float(max(0.0, -np.sum(p * np.log(p))))


def entropy_profile(mps: SymmetricMPS) -> np.ndarray:
    """Entropies across bonds ``j = 1..L-1``."""
    return np.array([entropy_from_lambda(mps.lams[j]) for j in range(1, mps.L)])


def _linfit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return coef[0], coef[1], float(np.sqrt(np.mean(resid**2)))


def powerlaw_fit(sigma, window=None, two_d: bool = False) -> FitResult:
    """Fit ``sigma_k ~ (C1 k + C2)^(-gamma)``, ``k`` counted from 1.

    For a fixed shift ``c = C2 / C1`` the model is linear in ``log(k + c)``,
    so the slope ``-gamma`` and intercept ``-gamma log C1`` come from least
    squares; the shift itself is found by a 1-D search. ``two_d`` pins
    ``C2 = 0``. ``residual_rms`` is measured on ``log sigma``.
    """
    sigma = np.asarray(sigma, dtype=float)
    lo, hi = window or (1, sigma.size)
    k = np.arange(lo, hi + 1, dtype=float)
    s = sigma[lo - 1:hi]
    if s.size < 4:
        raise ValueError(f"power-law fit needs >= 4 points, got {s.size}")
    if np.any(s <= 0):
        raise ValueError("power-law fit needs positive singular values")
    y = np.log(s)

    def fit_at(shift):
        slope, icpt, rms = _linfit(np.log(k + shift), y)
        return slope, icpt, rms

    if two_d:
        shift = 0.0
    else:
        # search t = log(k_min + shift) so the shift stays above -k_min
        def obj(t):
            return fit_at(np.exp(t) - k[0])[2]

        ts = np.linspace(np.log(1e-6), np.log(1e4 * k[-1]), 241)
        vals = [obj(t) for t in ts]
        i = int(np.argmin(vals))
        a, b = ts[max(i - 1, 0)], ts[min(i + 1, ts.size - 1)]
        res = minimize_scalar(obj, bounds=(a, b), method="bounded",
                              options={"xatol": 1e-12, "maxiter": 500})
        t = res.x if res.fun <= vals[i] else ts[i]
        shift = np.exp(t) - k[0]
    slope, icpt, rms = fit_at(shift)
    gamma = -slope
    C1 = float(np.exp(-icpt / gamma)) if gamma != 0 else float("nan")
    return FitResult({"C1": C1, "C2": float(shift * C1), "gamma": float(gamma)},
                     rms, (int(lo), int(hi)))


def calabrese_fit(profile, L: int, window=None) -> FitResult:
    """Fit ``S(j) = a + c/6 log((L/pi) sin(pi j / L))`` over bonds in ``window``.

    ``profile[j-1]`` is the entropy across bond ``j``.
    """
    profile = np.asarray(profile, dtype=float)
    lo, hi = window or (1, L - 1)
    if lo < 1 or hi > L - 1:
        raise ValueError(f"window {(lo, hi)} outside bonds 1..{L - 1}")
    j = np.arange(lo, hi + 1, dtype=float)
    if j.size < 3:
        raise ValueError("Calabrese fit needs >= 3 bonds")
    x = np.log(L / np.pi * np.sin(np.pi * j / L))
    slope, icpt, rms = _linfit(x, profile[lo - 1:hi])
    return FitResult({"a": float(icpt), "c": float(6 * slope)}, rms, (int(lo), int(hi)))


def measure(mps: SymmetricMPS, model, window=None) -> ObservableReport:
    """Energy, order parameter, correlation length, entropies and spectra."""
    envs = (left_environments(mps), right_environments(mps))
    E = energy(mps, model)
    M = magnetization(mps, model, envs)
    xi = corrlen_from_profile(correlation_profile(mps, model, window, envs))
    spectra = {j: mps.sector_spectra(j) for j in range(1, mps.L)}
    return ObservableReport(E, M, xi, entropy_profile(mps).tolist(), spectra)
