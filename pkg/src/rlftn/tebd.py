"""Imaginary-time TEBD ground-state search with a step-reduction schedule.

The step starts at ``dt0`` and every ``check_interval`` sweeps the energy is
measured. When it changed by less than ``delta_e`` since the previous check,
``dt`` is multiplied by ``step_factor``. The run has converged once the
energy moved by less than ``delta_e`` between two consecutive reductions, and
gives up when ``dt`` falls below ``dt_min``.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .factorize import RsvdParams
from .mps import (
    Compressor,
    GateSet,
    SymmetricMPS,
    canonicalize,
    left_environments,
    parity_audit,
    random_product_state,
    sweep,
)
from .observables import ObservableReport, energy, measure

__all__ = [
    "TebdConfig",
    "ConvergenceState",
    "TimingLedger",
    "RunResult",
    "split_seed",
    "resolve_dtype",
    "run_ground_state",
    "result_to_dict",
]


@dataclass(frozen=True)
class TebdConfig:
    chi: int
    delta_e: float = 1e-10
    dt0: float = 0.4
    step_factor: float = 0.7
    check_interval: int = 10
    dt_min: float = 1e-5
    method: str = "tsvd"
    oversample: int | None = None
    power: int = 4
    gate_form: str = "B"
    seed: int = 0
    dtype: str = "auto"
    policy: str = "per_sector_estimate"
    slack: int | None = None
    min_rsvd_dim: int = 32
    debug: bool = False
    max_sweeps: int | None = None

    def __post_init__(self):
        if self.chi < 1:
            raise ValueError(f"chi must be >= 1, got {self.chi}")
        if not self.delta_e > 0:
            raise ValueError(f"delta_e must be > 0, got {self.delta_e}")
        if not 0 < self.step_factor < 1:
            raise ValueError(f"step_factor must lie in (0, 1), got {self.step_factor}")
        if not self.dt0 > 0:
            raise ValueError(f"dt0 must be > 0, got {self.dt0}")
        if self.check_interval < 1:
            raise ValueError(f"check_interval must be >= 1, got {self.check_interval}")
        if self.method not in ("tsvd", "rsvd"):
            raise ValueError(f"method must be tsvd or rsvd, got {self.method!r}")
        if self.gate_form not in ("B", "P"):
            raise ValueError(f"gate_form must be B or P, got {self.gate_form!r}")
        if self.dtype not in ("auto", "real", "complex"):
            raise ValueError(f"dtype must be auto, real or complex, got {self.dtype!r}")
        RsvdParams(self.chi, self.oversample, self.power)


@dataclass
class ConvergenceState:
    dt: float
    history: list = field(default_factory=list)  # (sweep, dt, E)
    reductions: list = field(default_factory=list)  # (sweep, old dt, E)
    e_last: float | None = None
    e_at_reduction: float | None = None
    sweeps: int = 0
    checks: int = 0
    converged: bool = False
    status: str = "running"


@dataclass
class TimingLedger:
    """Per-iteration wall times; one iteration is one Trotter sweep."""

    method: str
    compression: float
    other: float
    iterations: int
    calls: int = 0

    @classmethod
    def from_totals(cls, method, comp_seconds, total_seconds, iterations, calls=0):
        n = max(iterations, 1)
        other = max(total_seconds - comp_seconds, 0.0)
        return cls(method, comp_seconds / n, other / n, iterations, calls)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    config: TebdConfig
    model: object
    mps: SymmetricMPS
    observables: ObservableReport
    state: ConvergenceState
    timing: TimingLedger
    invariants: dict
    seeds: dict

    @property
    def converged(self) -> bool:
        return self.state.converged

    @property
    def energies(self) -> np.ndarray:
        return np.array([e for _, _, e in self.state.history])


def split_seed(master: int) -> dict:
    """Master seed -> ``{"state": ..., "rsvd": ...}`` via SeedSequence spawning.

    Child 0 seeds the initial product state, child 1 the randomized
    compression stream. Runs that differ only in the method therefore start
    from the same state.
    """
    kids = np.random.SeedSequence(int(master)).spawn(2)
    state, rs = (int(k.generate_state(1, np.uint64)[0]) for k in kids)
    return {"master": int(master), "state": state, "rsvd": rs}


def resolve_dtype(model, dtype: str = "auto"):
    """Real arithmetic for the spin-1/2 chain under ``auto``, complex otherwise."""
    if dtype == "real":
        return np.float64
    if dtype == "complex":
        return np.complex128
    if getattr(model, "kind", "") == "chain" and float(model.S) == 0.5:
        return np.float64
    return np.complex128


def _dump_spectra(writer, check, sweeps, dt, mps):
    for j in range(1, mps.L):
        for q, vals in mps.sector_spectra(j).items():
            for k, v in enumerate(vals, start=1):
                writer.writerow([check, sweeps, repr(dt), j, q, k, repr(float(v))])


def run_ground_state(model, config: TebdConfig, spectrum_csv=None, progress=None) -> RunResult:
    """Imaginary-time evolution from a random product state to the ground state.

    Parameters
    ----------
    spectrum_csv
        Optional path; bond spectra are appended at every energy check as
        rows ``check, sweep, dt, bond, sector, k, sigma``.
    progress
        Optional callable receiving the :class:`ConvergenceState` after each
        check.
    """
    seeds = split_seed(config.seed)
    dtype = resolve_dtype(model, config.dtype)
    mps = random_product_state(model, seeds["state"], dtype)
    comp = Compressor(
        config.chi,
        method=config.method,
        rsvd=RsvdParams(config.chi, config.oversample, config.power),
        policy=config.policy,
        slack=config.slack,
        min_rsvd_dim=config.min_rsvd_dim,
        seed=seeds["rsvd"],
        check=config.debug,
    )
    st = ConvergenceState(dt=config.dt0)
    gates = GateSet.build(model, st.dt, config.gate_form)
    worst_audit = 0.0
    max_discard_level = 0.0
    discard_at_final = 0.0

    fh = open(spectrum_csv, "w", newline="") if spectrum_csv else None
    writer = csv.writer(fh) if fh else None
    if writer:
        writer.writerow(["check", "sweep", "dt", "bond", "sector", "k", "sigma"])

    t0 = time.perf_counter()
    try:
        while True:
            for _ in range(config.check_interval):
                w = sweep(mps, gates, comp)
                max_discard_level = max(max_discard_level, w)
                st.sweeps += 1
                if config.debug:
                    worst_audit = max(worst_audit, parity_audit(mps))
            E = energy(mps, model)
            st.checks += 1
            st.history.append((st.sweeps, st.dt, E))
            if writer:
                _dump_spectra(writer, st.checks, st.sweeps, st.dt, mps)
            if progress:
                progress(st)
            if st.e_last is not None and abs(E - st.e_last) < config.delta_e:
                if st.e_at_reduction is not None and abs(st.e_at_reduction - E) < config.delta_e:
                    st.converged, st.status = True, "converged"
                    discard_at_final = max_discard_level
                    break
                st.e_at_reduction = E
                st.reductions.append((st.sweeps, st.dt, E))
                st.dt *= config.step_factor
                discard_at_final = max_discard_level
                max_discard_level = 0.0
                if st.dt < config.dt_min:
                    st.status = "dt_min"
                    break
                gates = GateSet.build(model, st.dt, config.gate_form)
            st.e_last = E
            if config.max_sweeps is not None and st.sweeps >= config.max_sweeps:
                st.status = "max_sweeps"
                discard_at_final = max_discard_level
                break
    finally:
        if fh:
            fh.close()
    total = time.perf_counter() - t0
    timing = TimingLedger.from_totals(config.method, comp.seconds, total, st.sweeps, comp.calls)

    lam_dev = max(abs(float(np.sum(lam**2)) - 1.0) for lam in mps.lams)
    final = canonicalize(mps)
    norm_dev = abs(float(left_environments(final)[-1][0, 0].real) - 1.0)
    energies = [e for _, _, e in st.history]
    tol = 10 * config.delta_e
    rises = [b - a for a, b in zip(energies, energies[1:]) if b > a + tol]
    invariants = {
        "parity_violation": float(worst_audit if config.debug else parity_audit(mps)),
        "final_parity_violation": float(parity_audit(final)),
        "lambda_norm_dev": lam_dev,
        "canonical_norm_dev": norm_dev,
        "max_isometry_dev": comp.max_isometry_dev if config.debug else None,
        "max_lambda_norm_dev": comp.max_norm_dev if config.debug else None,
        "energy_rises": len(rises),
        "max_energy_rise": max(rises, default=0.0),
        "max_discarded_final_dt": discard_at_final,
        "max_bond_dim": final.max_bond_dim,
    }
    obs = measure(final, model)
    return RunResult(config, model, final, obs, st, timing, invariants, seeds)


def result_to_dict(res: RunResult) -> dict:
    """JSON-ready run report."""
    m = res.model
    model = {"kind": m.kind, "L": m.L, "h": m.h}
    model.update({"S": float(m.S)} if m.kind == "chain" else {"W": m.W})
    st = res.state
    return {
        "version": __version__,
        "seed": res.seeds,
        "model": model,
        "config": asdict(res.config),
        "observables": res.observables.to_dict(),
        "timing": res.timing.to_dict(),
        "convergence": {
            "converged": st.converged,
            "status": st.status,
            "sweeps": st.sweeps,
            "checks": st.checks,
            "final_dt": st.dt,
            "history": [{"sweep": s, "dt": dt, "E": e} for s, dt, e in st.history],
            "reductions": [{"sweep": s, "dt": dt, "E": e} for s, dt, e in st.reductions],
        },
        "invariants": res.invariants,
        "bond_dims": res.mps.bond_dims,
    }

