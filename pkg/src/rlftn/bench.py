"""Speedup of randomized over deterministic compression.

For two runs with ledgers holding per-iteration compression times ``T`` and
non-compression times ``Tbar``, the environment-normalized speedup is::

    f   = Tbar_R / Tbar_T
    tau = f * T_T / T_R

``f`` corrects for the two runs seeing different machine load.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .blocks import BlockDiagMatrix, SectorRankPolicy, block_factorize
from .factorize import RsvdParams, make_rng
from .models import ChainModel, build_gate, bond_hamiltonians
from .mps import compression_input, random_symmetric_mps
from .tebd import TebdConfig, TimingLedger, run_ground_state

__all__ = [
    "TimingLedger",
    "NOMINAL_UNCERTAINTY",
    "speedup",
    "geometric_mean",
    "GridPoint",
    "PointResult",
    "SpeedupReport",
    "compare_runs",
    "synthetic_blocks",
    "time_factorizations",
    "synthetic_speedup",
    "d_scaling",
]

NOMINAL_UNCERTAINTY = 0.10
CSV_FIELDS = [
    "model", "S_or_W", "L", "h", "chi", "method", "E", "M", "xi",
    "T", "Tbar", "tau", "f", "converged",
]


def speedup(ledger_t: TimingLedger, ledger_r: TimingLedger) -> tuple[float, float]:
    """``(tau, f)`` from a deterministic and a randomized ledger."""
    if ledger_r.compression <= 0:
        raise ValueError("randomized compression time must be > 0")
    if ledger_t.compression <= 0:
        raise ValueError("deterministic compression time must be > 0")
    if ledger_t.other == ledger_r.other == 0:
        f = 1.0  # factorization-only timing, nothing else to normalize by
    elif ledger_t.other <= 0:
        raise ValueError("deterministic non-compression time must be > 0")
    else:
        f = ledger_r.other / ledger_t.other
    return f * ledger_t.compression / ledger_r.compression, f


def geometric_mean(values) -> float:
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise ValueError("geometric mean of an empty set")
    if np.any(v <= 0):
        raise ValueError("geometric mean needs positive values")
    return float(np.exp(np.mean(np.log(v))))


@dataclass(frozen=True)
class GridPoint:
    """One model/field/bond-dimension setting; ``config.method`` is ignored."""

    model: object
    config: TebdConfig

    @property
    def label(self) -> str:
        m = self.model
        extra = f"S={m.S}" if m.kind == "chain" else f"W={m.W}"
        return f"{m.kind}({extra},L={m.L},h={m.h},chi={self.config.chi})"

    @property
    def group(self) -> tuple:
        m = self.model
        return (m.kind, float(m.S) if m.kind == "chain" else m.W, m.L, self.config.chi)


@dataclass
class PointResult:
    point: GridPoint
    runs: dict  # method -> RunResult (first repeat)
    ledgers: dict  # method -> list[TimingLedger]
    taus: list
    fs: list

    @property
    def tau(self) -> float:
        return geometric_mean(self.taus)

    @property
    def f(self) -> float:
        return geometric_mean(self.fs)

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.runs.values())

    def deltas(self) -> dict:
        """Relative differences rsvd vs tsvd of the final observables."""
        t, r = self.runs["tsvd"].observables, self.runs["rsvd"].observables
        dE = abs(r.E - t.E) / abs(t.E) if t.E else abs(r.E - t.E)
        dM = abs(r.M - t.M) / abs(t.M) if t.M else abs(r.M - t.M)
        return {"dE_rel": dE, "dM_rel": dM}

    def csv_rows(self) -> list[dict]:
        m = self.point.model
        rows = []
        for method in ("tsvd", "rsvd"):
            res = self.runs[method]
            led = self.ledgers[method]
            rows.append({
                "model": m.kind,
                "S_or_W": float(m.S) if m.kind == "chain" else m.W,
                "L": m.L,
                "h": m.h,
                "chi": self.point.config.chi,
                "method": method,
                "E": res.observables.E,
                "M": res.observables.M,
                "xi": res.observables.xi,
                "T": float(np.mean([x.compression for x in led])),
                "Tbar": float(np.mean([x.other for x in led])),
                "tau": self.tau,
                "f": self.f,
                "converged": res.converged,
            })
        return rows


@dataclass
class SpeedupReport:
    points: list[PointResult]
    excluded: list[str] = field(default_factory=list)

    def group_means(self) -> dict:
        """Geometric mean of tau over fields, per (model, S/W, L, chi) group."""
        groups: dict = {}
        for p in self.points:
            if p.point.label in self.excluded:
                continue
            groups.setdefault(p.point.group, []).append(p.tau)
        out = {}
        for g, taus in groups.items():
            mean = geometric_mean(taus)
            out[g] = {
                "tau_geomean": mean,
                "tau_min": min(taus),
                "tau_max": max(taus),
                "nominal_band": [mean * (1 - NOMINAL_UNCERTAINTY), mean * (1 + NOMINAL_UNCERTAINTY)],
                "n_fields": len(taus),
            }
        return out

    def to_dict(self) -> dict:
        pts = []
        for p in self.points:
            pts.append({
                "label": p.point.label,
                "tau": p.tau,
                "f": p.f,
                "tau_repeats": p.taus,
                "tau_spread": [min(p.taus), max(p.taus)],
                "converged": p.converged,
                **p.deltas(),
            })
        return {
            "points": pts,
            "groups": [
                {"model": g[0], "S_or_W": g[1], "L": g[2], "chi": g[3], **v}
                for g, v in self.group_means().items()
            ],
            "excluded": list(self.excluded),
            "nominal_uncertainty": NOMINAL_UNCERTAINTY,
        }

    def csv_rows(self) -> list[dict]:
        return [row for p in self.points for row in p.csv_rows()]


def _run_pinned(args):
    model, config = args
    with threadpool_limits(limits=1):
        return run_ground_state(model, config)


def compare_runs(points, repeats: int = 1, jobs: int = 1) -> SpeedupReport:
    """Matched tsvd/rsvd runs for every grid point.

    Both methods use the same master seed, hence the same initial state.
    Every repeat reruns both methods; ``tau`` per point is the geometric mean
    over repeats and the observables come from the first repeat (runs are
    deterministic). Points with an unconverged run are listed in
    ``excluded`` and left out of the group means.
    """
    points = list(points)
    if not points:
        raise ValueError("empty grid")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    tasks = [
        (i, method, r)
        for i in range(len(points))
        for r in range(repeats)
        for method in ("tsvd", "rsvd")
    ]
    args = [(points[i].model, replace(points[i].config, method=m)) for i, m, _ in tasks]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_pinned, args))
    else:
        results = [_run_pinned(a) for a in args]

    out, excluded = [], []
    for i, pt in enumerate(points):
        runs, ledgers = {}, {"tsvd": [], "rsvd": []}
        for (k, m, r), res in zip(tasks, results):
            if k != i:
                continue
            if r == 0:
                runs[m] = res
            ledgers[m].append(res.timing)
        taus, fs = [], []
        for lt, lr in zip(ledgers["tsvd"], ledgers["rsvd"]):
            tau, f = speedup(lt, lr)
            taus.append(tau)
            fs.append(f)
        pr = PointResult(pt, runs, ledgers, taus, fs)
        if not pr.converged:
            excluded.append(pt.label)
        out.append(pr)
    return SpeedupReport(out, excluded)


# -- factorization-only modes ----------------------------------------------------


def synthetic_blocks(n: int, n_sectors: int = 2, decay: float = 1.0, seed=0,
                     dtype=np.complex128) -> BlockDiagMatrix:
    """Block-diagonal test matrix, ``n x n`` in total, with power-law spectra."""
    rng = make_rng(seed)
    size = n // n_sectors
    blocks = []
    for q in range(n_sectors):
        def iso(k):
            g = rng.standard_normal((k, k))
            if np.dtype(dtype).kind == "c":
                g = g + 1j * rng.standard_normal((k, k))
            return np.linalg.qr(g)[0]
        s = np.arange(1, size + 1, dtype=float) ** -decay
        blocks.append((q, ((iso(size) * s) @ iso(size).conj().T).astype(dtype)))
    return BlockDiagMatrix.from_blocks(blocks)


def time_factorizations(A: BlockDiagMatrix, chi: int, repeats: int = 3, seed=0,
                        rsvd_params: RsvdParams | None = None) -> dict:
    """Wall time of ``block_factorize`` with both methods on the same input.

    Returns per-method lists of seconds (one per repeat, single-threaded
    BLAS) and the retained values of each method for a sanity comparison.
    """
    rsvd_params = rsvd_params or RsvdParams(chi)
    policy = SectorRankPolicy("per_sector_estimate", chi)
    times = {"tsvd": [], "rsvd": []}
    vals = {}
    with threadpool_limits(limits=1):
        for r in range(repeats):
            for method in ("tsvd", "rsvd"):
                t0 = time.perf_counter()
                F = block_factorize(A, chi, policy, method, rsvd_params, seed + r)
                times[method].append(time.perf_counter() - t0)
                vals.setdefault(method, F.retained())
    return {"times": times, "retained": vals}


def _ratio(times) -> tuple[float, list[float]]:
    ratios = [t / r for t, r in zip(times["tsvd"], times["rsvd"])]
    return geometric_mean(ratios), ratios


def synthetic_speedup(n: int = 2048, chi: int = 64, repeats: int = 3, seed=0,
                      decay: float = 1.0, dtype=np.complex128) -> dict:
    """Factorization-only speedup on an ``n x n`` two-block matrix (``f = 1``)."""
    A = synthetic_blocks(n, 2, decay, seed, dtype)
    res = time_factorizations(A, chi, repeats, seed)
    tau, ratios = _ratio(res["times"])
    top_t, top_r = res["retained"]["tsvd"], res["retained"]["rsvd"]
    rel = float(np.max(np.abs(top_r - top_t) / top_t))
    return {
        "n": n,
        "chi": chi,
        "tau": tau,
        "f": 1.0,
        "tau_repeats": ratios,
        "T_T": float(np.median(res["times"]["tsvd"])),
        "T_R": float(np.median(res["times"]["rsvd"])),
        "max_rel_diff": rel,
    }


def d_scaling(ds=(8, 16, 32), chi: int = 64, repeats: int = 3, seed=0,
              dt: float = 0.1, h: float = 1.0, dtype=np.complex128, decay: float = 1.0) -> dict:
    """Time block-gate compression matrices of growing local dimension.

    For every ``d`` a spin ``S = (d-1)/2`` chain gate is applied to the
    central bond of a six-site random symmetric MPS at bond dimension ``chi``; the
    resulting ``(chi d) x (d chi)`` parity-blocked matrix is factorized with
    both methods. The slope is a least-squares fit of ``T_T/T_R`` against
    ``d``.
    """
    rows = []
    for d in ds:
        # six sites, so both outer bonds of the central pair reach chi
        model = ChainModel(6, h, S=(d - 1) / 2)
        mps = random_symmetric_mps(model, chi, seed, dtype, decay)
        hb = bond_hamiltonians(model)[2]
        gate = build_gate(hb, dt, "B", charges=(model.parity() < 0).astype(int))
        ci = compression_input(mps, 3, gate)
        res = time_factorizations(ci.blocks, chi, repeats, seed)
        ratio, ratios = _ratio(res["times"])
        rows.append({
            "d": d,
            "chi": chi,
            "n": ci.n_rows,
            "compression_ratio": chi / ci.n_rows,
            "T_T": float(np.median(res["times"]["tsvd"])),
            "T_R": float(np.median(res["times"]["rsvd"])),
            "tau": ratio,
            "tau_repeats": ratios,
        })
    x = np.array([r["d"] for r in rows], dtype=float)
    y = np.array([r["tau"] for r in rows])
    slope = float(np.polyfit(x, y, 1)[0]) if x.size > 1 else math.nan
    increasing = bool(np.all(np.diff(y) > 0))
    return {"rows": rows, "slope": slope, "increasing": increasing}
