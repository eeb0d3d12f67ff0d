"""Block-diagonal matrices over symmetry sectors and their truncated factorization.

Under an Abelian symmetry the compression input is block diagonal, one block
per charge sector. Each block is factorized on its own to a requested rank
``chi'_s``; the candidate singular values of all sectors are then merged and
only the ``chi`` globally largest are retained, which fixes the achieved
sector ranks ``chi_s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .factorize import (
    FactorizationError,
    RsvdParams,
    TruncatedFactorization,
    rsvd,
    tsvd,
)

__all__ = [
    "Sector",
    "BlockDiagMatrix",
    "SectorRankPolicy",
    "BlockFactorization",
    "default_slack",
    "sector_request",
    "block_factorize",
]

MIN_RSVD_DIM = 32


@dataclass
class Sector:
    """One diagonal block. ``rows``/``cols`` locate it inside the full matrix."""

    charge: int
    block: np.ndarray
    rows: np.ndarray | None = None
    cols: np.ndarray | None = None

    @property
    def shape(self):
        return self.block.shape


@dataclass
class BlockDiagMatrix:
    sectors: list[Sector]
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        if not self.sectors:
            raise ValueError("a block-diagonal matrix needs at least one sector")
        charges = [s.charge for s in self.sectors]
        if len(set(charges)) != len(charges):
            raise ValueError(f"sector labels must be unique, got {charges}")
        if self.shape is None:
            self.shape = (
                sum(s.block.shape[0] for s in self.sectors),
                sum(s.block.shape[1] for s in self.sectors),
            )

    @property
    def n_sectors(self) -> int:
        return len(self.sectors)

    @classmethod
    def from_blocks(cls, blocks) -> "BlockDiagMatrix":
        """Build from ``{charge: block}`` or ``[(charge, block), ...]``."""
        items = blocks.items() if isinstance(blocks, dict) else blocks
        return cls([Sector(int(q), np.asarray(b)) for q, b in items])

    @classmethod
    def from_dense(cls, mat, row_charges, col_charges) -> "BlockDiagMatrix":
        """Split a charge-conserving dense matrix into its sector blocks.

        Only charges present on both sides give a block; entries outside the
        blocks are assumed to vanish.
        """
        row_charges = np.asarray(row_charges)
        col_charges = np.asarray(col_charges)
        sectors = []
        for q in np.intersect1d(row_charges, col_charges):
            r = np.flatnonzero(row_charges == q)
            c = np.flatnonzero(col_charges == q)
            sectors.append(Sector(int(q), mat[np.ix_(r, c)], r, c))
        if not sectors:
            sectors.append(Sector(0, np.zeros((0, 0), mat.dtype), np.zeros(0, int), np.zeros(0, int)))
        return cls(sectors, tuple(mat.shape))

    def to_dense(self) -> np.ndarray:
        dtype = np.result_type(*[s.block.dtype for s in self.sectors])
        out = np.zeros(self.shape, dtype=dtype)
        r0 = c0 = 0
        for s in self.sectors:
            m, n = s.block.shape
            rows = s.rows if s.rows is not None else np.arange(r0, r0 + m)
            cols = s.cols if s.cols is not None else np.arange(c0, c0 + n)
            out[np.ix_(rows, cols)] = s.block
            r0, c0 = r0 + m, c0 + n
        return out

    def spectrum(self) -> dict[int, np.ndarray]:
        """Full singular value spectrum of every block."""
        return {
            s.charge: np.linalg.svd(s.block, compute_uv=False) if s.block.size else np.zeros(0)
            for s in self.sectors
        }


def default_slack(chi: int, n_sectors: int) -> int:
    return max(2, math.ceil(0.05 * chi / n_sectors))


@dataclass(frozen=True)
class SectorRankPolicy:
    """How many singular values to request per sector before post-selection.

    ``per_sector_estimate``: ``ceil(chi / N) + slack``.
    ``maximal``: ``chi`` in every sector.
    ``slack=None`` means :func:`default_slack`.
    """

    kind: str = "per_sector_estimate"
    chi: int = 1
    slack: int | None = None

    def __post_init__(self):
        if self.kind not in ("per_sector_estimate", "maximal"):
            raise ValueError(f"unknown sector policy {self.kind!r}")
        if self.chi < 1:
            raise ValueError(f"chi must be >= 1, got {self.chi}")
        if self.slack is not None and self.slack < 0:
            raise ValueError(f"slack must be >= 0, got {self.slack}")


def sector_request(policy: SectorRankPolicy, n_sectors: int, block_dims) -> list[int]:
    """Per-sector rank requests ``chi'_s``, clipped to each block's dimension.

    ``block_dims`` holds an int (the block's smaller dimension) or an
    ``(m, n)`` shape per sector.
    """
    if n_sectors < 1:
        raise ValueError("need at least one sector")
    dims = [min(d) if isinstance(d, (tuple, list)) else int(d) for d in block_dims]
    if policy.kind == "maximal":
        return [min(policy.chi, d) for d in dims]
    slack = policy.slack if policy.slack is not None else default_slack(policy.chi, n_sectors)
    want = math.ceil(policy.chi / n_sectors) + slack
    return [min(want, d) for d in dims]


@dataclass
class BlockFactorization:
    """Per-sector factors after global post-selection.

    ``candidates`` keeps every singular value each sector produced before
    post-selection (useful for spectrum dumps).
    """

    sectors: list[tuple[int, TruncatedFactorization]]
    candidates: dict[int, np.ndarray] = field(default_factory=dict)
    discarded_weight: float = 0.0
    discarded_exact: bool = True

    @property
    def ranks(self) -> dict[int, int]:
        return {q: f.rank for q, f in self.sectors}

    @property
    def total_rank(self) -> int:
        return sum(f.rank for _, f in self.sectors)

    def retained(self) -> np.ndarray:
        """All retained singular values, sorted descending."""
        vals = [f.sigma for _, f in self.sectors]
        return np.sort(np.concatenate(vals))[::-1] if vals else np.zeros(0)


def _empty_factor(m, n, dtype):
    return TruncatedFactorization(
        np.zeros((m, 0), dtype), np.zeros(0), np.zeros((0, n), dtype), 0.0, True
    )


def _substream_seeds(seed, n):
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def block_factorize(
    A: BlockDiagMatrix,
    chi: int,
    policy: SectorRankPolicy | None = None,
    method: str = "tsvd",
    rsvd_params: RsvdParams | None = None,
    seed: int = 0,
    min_rsvd_dim: int = MIN_RSVD_DIM,
    cutoff: float = 0.0,
) -> BlockFactorization:
    """Factorize every sector and keep the ``chi`` globally largest values.

    Parameters
    ----------
    policy
        Rank requests for the randomized route. The deterministic route
        computes full spectra anyway and always requests ``min(chi, dim)``.
    rsvd_params
        Supplies the power ``q`` and the oversampling ratio ``ell / rank``
        (default ``q = 4``, ratio 2). Per sector ``ell_s`` is the ratio times
        ``chi'_s``, clipped to the block dimension.
    seed
        Master seed; sector ``i`` receives the ``i``-th spawned substream.
    min_rsvd_dim
        Blocks whose smaller dimension is below this go through ``tsvd``.
    cutoff
        Candidates ``<= cutoff`` are never retained.
    """
    if chi < 1:
        raise ValueError(f"chi must be >= 1, got {chi}")
    if method not in ("tsvd", "rsvd"):
        raise ValueError(f"unknown method {method!r}")
    if policy is None:
        policy = SectorRankPolicy("per_sector_estimate", chi)
    if method == "tsvd":
        policy = SectorRankPolicy("maximal", chi)
    if rsvd_params is None:
        rsvd_params = RsvdParams(rank=1, oversample=2, power=4)
    ratio = rsvd_params.oversample / rsvd_params.rank

    N = A.n_sectors
    requests = sector_request(policy, N, [s.block.shape for s in A.sectors])
    seeds = _substream_seeds(seed, N) if method == "rsvd" else [0] * N

    factors = []
    for sec, req, sd in zip(A.sectors, requests, seeds):
        m, n = sec.block.shape
        if req < 1 or min(m, n) == 0:
            factors.append(_empty_factor(m, n, sec.block.dtype))
            continue
        try:
            if method == "rsvd" and min(m, n) >= min_rsvd_dim:
                ell = min(max(req, math.ceil(ratio * req)), min(m, n))
                f = rsvd(sec.block, RsvdParams(req, ell, rsvd_params.power, sd))
            else:
                f = tsvd(sec.block, req)
        except FactorizationError as exc:
            exc.diagnostics["sector"] = sec.charge
            raise
        factors.append(f)

    # Global post-selection. Ties: ascending charge, then in-sector index.
    sig = np.concatenate([f.sigma for f in factors])
    charge = np.concatenate([np.full(f.rank, s.charge) for s, f in zip(A.sectors, factors)])
    index = np.concatenate([np.arange(f.rank) for f in factors])
    pos = np.concatenate([np.full(f.rank, i) for i, f in enumerate(factors)])
    order = np.lexsort((index, charge, -sig))
    order = order[sig[order] > cutoff][:chi]
    keep = np.bincount(pos[order], minlength=N)

    out = []
    dropped = 0.0
    exact = True
    for sec, f, k in zip(A.sectors, factors, keep):
        dropped += f.discarded_weight + float(np.sum(f.sigma[k:] ** 2))
        exact = exact and f.discarded_exact
        out.append(
            (
                sec.charge,
                TruncatedFactorization(
                    f.left[:, :k], f.sigma[:k], f.right_adj[:k, :], 0.0, f.discarded_exact
                ),
            )
        )
    candidates = {sec.charge: f.sigma.copy() for sec, f in zip(A.sectors, factors)}
    return BlockFactorization(out, candidates, dropped, exact)
