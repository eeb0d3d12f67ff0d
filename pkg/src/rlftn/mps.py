"""Parity-symmetric MPS in Vidal form and the TEBD two-site update.

Storage: ``gammas[j]`` has shape ``(chi_j, d, chi_{j+1})`` for sites
``j = 0..L-1``; ``lams[j]`` holds the singular values on bond ``j`` (between
sites ``j-1`` and ``j``) with trivial ``lams[0] = lams[L] = [1]``. Every bond
index carries a Z2 charge in ``bond_charges[j]``, and a tensor entry
``gammas[j][a, s, b]`` may be nonzero only if
``bond_charges[j][a] + phys_charges[s] == bond_charges[j+1][b]`` (mod 2).
Bond indices are grouped by charge, even first.

Tensors are held densely with the forbidden entries exactly zero. All
factorizations act on the individual charge blocks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .blocks import BlockDiagMatrix, SectorRankPolicy, block_factorize
from .factorize import RsvdParams, make_rng

__all__ = [
    "SymmetricMPS",
    "Compressor",
    "NumericalError",
    "random_product_state",
    "product_state",
    "apply_gate_and_compress",
    "compression_input",
    "CompressionInput",
    "random_symmetric_mps",
    "GateSet",
    "sweep",
    "canonicalize",
    "parity_audit",
    "left_environments",
    "right_environments",
]


class NumericalError(RuntimeError):
    """Fatal numerical breakdown inside a TEBD update."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


@dataclass
class SymmetricMPS:
    gammas: list[np.ndarray]
    lams: list[np.ndarray]
    bond_charges: list[np.ndarray]
    phys_charges: np.ndarray

    @property
    def L(self) -> int:
        return len(self.gammas)

    @property
    def d(self) -> int:
        return self.gammas[0].shape[1]

    @property
    def dtype(self):
        return self.gammas[0].dtype

    @property
    def bond_dims(self) -> list[int]:
        return [lam.size for lam in self.lams]

    @property
    def max_bond_dim(self) -> int:
        return max(self.bond_dims)

    def copy(self) -> "SymmetricMPS":
        return SymmetricMPS(
            [g.copy() for g in self.gammas],
            [lam.copy() for lam in self.lams],
            [q.copy() for q in self.bond_charges],
            self.phys_charges.copy(),
        )

    def site_tensor(self, j: int) -> np.ndarray:
        """``Gamma_j lambda_{j+1}``; the product over j is the wavefunction."""
        return self.gammas[j] * self.lams[j + 1][None, None, :]

    def to_dense(self) -> np.ndarray:
        """Full state vector (basis order: site 0 most significant)."""
        psi = self.site_tensor(0)[0]
        for j in range(1, self.L):
            psi = np.tensordot(psi, self.site_tensor(j), axes=(-1, 0))
        return psi.reshape(-1)

    def sector_spectra(self, j: int) -> dict[int, np.ndarray]:
        """Singular values on bond ``j`` split by charge, each descending."""
        lam, q = self.lams[j], self.bond_charges[j]
        return {int(c): np.sort(lam[q == c])[::-1] for c in np.unique(q)}


@dataclass
class Compressor:
    """How two-site tensors are truncated, plus timing and invariant tallies.

    ``rel_cutoff`` drops singular values below that fraction of the largest
    one; ``lam_floor`` regularizes the division by neighbouring ``lambda``.
    With ``check=True`` the isometry of every new factor and the weight
    normalization of every new bond are measured.
    """

    chi: int
    method: str = "tsvd"
    rsvd: RsvdParams | None = None
    policy: str = "per_sector_estimate"
    slack: int | None = None
    rel_cutoff: float = 1e-14
    lam_floor: float = 1e-12
    min_rsvd_dim: int = 32
    seed: int = 0
    check: bool = False
    seconds: float = 0.0
    calls: int = 0
    max_isometry_dev: float = 0.0
    max_norm_dev: float = 0.0
    _rng: np.random.Generator | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.chi < 1:
            raise ValueError(f"chi must be >= 1, got {self.chi}")
        if self.method not in ("tsvd", "rsvd"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.rsvd is None:
            self.rsvd = RsvdParams(rank=self.chi)
        self._rng = make_rng(self.seed)

    def factorize(self, A: BlockDiagMatrix):
        seed = int(self._rng.integers(0, 2**63)) if self.method == "rsvd" else 0
        policy = SectorRankPolicy(self.policy, self.chi, self.slack)
        t0 = time.perf_counter()
        F = block_factorize(
            A, self.chi, policy, self.method, self.rsvd, seed, self.min_rsvd_dim
        )
        self.seconds += time.perf_counter() - t0
        self.calls += 1
        return F


def product_state(model, vectors, dtype=np.float64) -> SymmetricMPS:
    """Product state from one local vector per site, each of definite parity."""
    charges = (model.parity() < 0).astype(int)
    gammas, bq = [], [np.zeros(1, int)]
    for v in vectors:
        v = np.asarray(v, dtype=dtype)
        v = v / np.linalg.norm(v)
        qs = np.unique(charges[np.abs(v) > 0])
        if qs.size != 1:
            raise ValueError("each local vector must lie in one parity sector")
        gammas.append(v.reshape(1, -1, 1))
        bq.append(np.array([(bq[-1][0] + qs[0]) % 2]))
    lams = [np.ones(1) for _ in range(len(vectors) + 1)]
    return SymmetricMPS(gammas, lams, bq, charges)


def random_product_state(model, seed=0, dtype=np.float64) -> SymmetricMPS:
    """Random bond-dimension-one product state with even total parity.

    Site sectors are drawn at random (the last one fixes the total parity) and
    each site gets a random unit vector inside its sector.
    """
    rng = make_rng(seed)
    charges = (model.parity() < 0).astype(int)
    L, d = model.n_sites, model.d
    sectors = list(rng.integers(0, 2, size=L - 1))
    sectors.append(sum(sectors) % 2)
    complex_ = np.dtype(dtype).kind == "c"
    vectors = []
    for q in sectors:
        v = np.zeros(d, dtype=dtype)
        idx = np.flatnonzero(charges == q)
        w = rng.standard_normal(idx.size)
        if complex_:
            w = w + 1j * rng.standard_normal(idx.size)
        v[idx] = w
        vectors.append(v)
    return product_state(model, vectors, dtype)


def random_symmetric_mps(model, chi: int, seed=0, dtype=np.complex128, decay: float = 1.0) -> SymmetricMPS:
    """Even-parity MPS with random tensors and bond dimension up to ``chi``.

    Each bond is split as evenly as possible between the two charges (capped
    by the dimension the open ends allow). Singular values fall off as
    ``k**-decay``. Not canonical; meant for benchmarks and cross-checks.
    """
    rng = make_rng(seed)
    charges = (model.parity() < 0).astype(int)
    L, d = model.n_sites, model.d
    complex_ = np.dtype(dtype).kind == "c"
    dims = [1] + [min(chi, d ** j, d ** (L - j)) for j in range(1, L)] + [1]
    bq = [np.zeros(1, int)]
    for j in range(1, L):
        n = dims[j]
        bq.append(np.array([0] * ((n + 1) // 2) + [1] * (n // 2)))
    bq.append(np.zeros(1, int))
    lams = [np.ones(1)]
    for j in range(1, L):
        lam = np.arange(1, dims[j] + 1, dtype=float) ** -decay
        lam = rng.permutation(lam)
        lams.append(lam / np.linalg.norm(lam))
    lams.append(np.ones(1))
    gammas = []
    for j in range(L):
        shape = (dims[j], d, dims[j + 1])
        g = rng.standard_normal(shape)
        if complex_:
            g = g + 1j * rng.standard_normal(shape)
        ok = (bq[j][:, None, None] + charges[None, :, None] + bq[j + 1][None, None, :]) % 2 == 0
        gammas.append((g * ok).astype(dtype))
    return SymmetricMPS(gammas, lams, bq, charges)


def _charge_grid(qa, qb):
    return ((qa[:, None] + qb[None, :]) % 2).ravel()


def _assemble(F, n_rows, n_cols, row_idx, col_idx, left_maps, dtype):
    """Dense factors with the new bond grouped by charge (ascending)."""
    sigma, charges, lefts, rights = [], [], [], []
    for (q, f), rows, cols, lmap in zip(F.sectors, row_idx, col_idx, left_maps):
        if f.rank == 0:
            continue
        sigma.append(f.sigma)
        charges.append(np.full(f.rank, q))
        lefts.append((rows, f.left if lmap is None else lmap @ f.left))
        rights.append((cols, f.right_adj))
    if not sigma:
        return None
    sigma = np.concatenate(sigma)
    charges = np.concatenate(charges)
    n = sigma.size
    U = np.zeros((n_rows, n), dtype=dtype)
    Vh = np.zeros((n, n_cols), dtype=dtype)
    k = 0
    for (rows, left), (cols, right) in zip(lefts, rights):
        r = left.shape[1]
        U[rows, k:k + r] = left
        Vh[k:k + r, cols] = right
        k += r
    return sigma, charges, U, Vh


def _trim(F, rel_cutoff):
    smax = max((f.sigma[0] for _, f in F.sectors if f.rank), default=0.0)
    if smax <= 0.0:
        return
    cut = rel_cutoff * smax
    extra = 0.0
    for i, (q, f) in enumerate(F.sectors):
        g = f.trimmed(cut)
        extra += g.discarded_weight - f.discarded_weight
        F.sectors[i] = (q, g)
    F.discarded_weight += extra


@dataclass
class CompressionInput:
    """Block-diagonal matrix handed to the factorization for one bond update.

    ``row_idx``/``col_idx`` place each sector inside the ``(chi_l d) x
    (d chi_r)`` two-site matrix; ``left_maps`` are the QR isometries of the
    Kronecker route (``None`` for block gates).
    """

    blocks: BlockDiagMatrix
    row_idx: list
    col_idx: list
    left_maps: list
    n_rows: int
    n_cols: int
    dtype: np.dtype


def compression_input(mps: SymmetricMPS, j: int, gate) -> CompressionInput:
    """Contract ``lambda Gamma lambda Gamma lambda`` on bond ``j`` with ``gate``.

    Block gates give a ``(chi d) x (d chi)`` matrix split by total parity.
    Kronecker gates contract each factor onto its own site first: the left
    part ``X`` is ``(chi d) x (chi K)`` and the right part ``Y`` is
    ``(chi K) x (d chi)``, the K index fused with the bond charge. A QR of
    every parity block of ``X`` leaves ``R Y`` to be compressed.
    """
    L = mps.L
    if not 1 <= j <= L - 1:
        raise ValueError(f"bond j={j} outside [1, {L - 1}]")
    d = mps.d
    p = mps.phys_charges
    lamL, lamM, lamR = mps.lams[j - 1], mps.lams[j], mps.lams[j + 1]
    qL, qM, qR = mps.bond_charges[j - 1], mps.bond_charges[j], mps.bond_charges[j + 1]
    G1, G2 = mps.gammas[j - 1], mps.gammas[j]
    chiL, chiR = lamL.size, lamR.size

    A = lamL[:, None, None] * G1 * lamM[None, None, :]
    B = G2 * lamR[None, None, :]
    dtype = np.result_type(A.dtype, gate.block.dtype)
    row_q = _charge_grid(qL, p)
    col_q = _charge_grid(p, qR)
    n_rows, n_cols = chiL * d, d * chiR

    if gate.form == "B":
        theta = np.tensordot(A, B, axes=(2, 0))
        th = theta.transpose(1, 2, 0, 3).reshape(d * d, chiL * chiR)
        th = gate.block @ th
        mat = th.reshape(d, d, chiL, chiR).transpose(2, 0, 1, 3).reshape(n_rows, n_cols)
        blocks = BlockDiagMatrix.from_dense(mat, row_q, col_q)
        row_idx = [s.rows for s in blocks.sectors]
        col_idx = [s.cols for s in blocks.sectors]
        left_maps = [None] * blocks.n_sectors
    else:
        uL = np.stack([t[0] for t in gate.terms])
        uR = np.stack([t[1] for t in gate.terms])
        ck = np.asarray(gate.term_charges)
        X = np.tensordot(uL, A, axes=(2, 1)).transpose(2, 1, 3, 0).reshape(n_rows, -1)
        Y = np.tensordot(uR, B, axes=(2, 1)).transpose(2, 0, 1, 3).reshape(-1, n_cols)
        mid_q = _charge_grid(qM, ck)
        sectors, row_idx, col_idx, left_maps = [], [], [], []
        for q in np.intersect1d(np.intersect1d(row_q, mid_q), col_q):
            rows = np.flatnonzero(row_q == q)
            mid = np.flatnonzero(mid_q == q)
            cols = np.flatnonzero(col_q == q)
            Q, R = sla.qr(X[np.ix_(rows, mid)], mode="economic", check_finite=False)
            sectors.append((int(q), R @ Y[np.ix_(mid, cols)]))
            row_idx.append(rows)
            col_idx.append(cols)
            left_maps.append(Q)
        if not sectors:
            raise NumericalError("no charge sector survives the gate", {"bond": j})
        blocks = BlockDiagMatrix.from_blocks(sectors)
    return CompressionInput(blocks, row_idx, col_idx, left_maps, n_rows, n_cols, dtype)


def apply_gate_and_compress(mps: SymmetricMPS, j: int, gate, comp: Compressor):
    """Apply ``gate`` to sites ``j-1, j`` and truncate bond ``j`` back to ``chi``.

    Updates ``mps`` in place.

    Returns
    -------
    (mps, discarded_weight, seconds)
        ``discarded_weight`` is relative to the two-site weight; ``seconds``
        covers only the factorization call.
    """
    ci = compression_input(mps, j, gate)
    d = mps.d
    lamL, lamR = mps.lams[j - 1], mps.lams[j + 1]
    chiL, chiR = lamL.size, lamR.size

    t_before = comp.seconds
    F = comp.factorize(ci.blocks)
    if comp.rel_cutoff > 0:
        _trim(F, comp.rel_cutoff)
    out = _assemble(F, ci.n_rows, ci.n_cols, ci.row_idx, ci.col_idx, ci.left_maps, ci.dtype)
    if out is None:
        raise NumericalError(
            "all retained singular values vanished",
            {"bond": j, "chi_left": chiL, "chi_right": chiR, "method": comp.method},
        )
    sigma, charges, U, Vh = out
    weight = float(np.sum(sigma**2))
    lam = sigma / np.sqrt(weight)

    if comp.check:
        r = U.shape[1]
        dev = max(
            np.abs(U.conj().T @ U - np.eye(r)).max(),
            np.abs(Vh @ Vh.conj().T - np.eye(r)).max(),
        )
        comp.max_isometry_dev = max(comp.max_isometry_dev, float(dev))
        comp.max_norm_dev = max(comp.max_norm_dev, abs(float(np.sum(lam**2)) - 1.0))

    invL = 1.0 / np.maximum(lamL, comp.lam_floor)
    invR = 1.0 / np.maximum(lamR, comp.lam_floor)
    r = sigma.size
    mps.gammas[j - 1] = U.reshape(chiL, d, r) * invL[:, None, None]
    mps.gammas[j] = Vh.reshape(r, d, chiR) * invR[None, None, :]
    mps.lams[j] = lam
    mps.bond_charges[j] = charges
    discarded = F.discarded_weight / (weight + F.discarded_weight)
    return mps, float(discarded), comp.seconds - t_before


@dataclass
class GateSet:
    """Gates for one second-order Trotter step at time step ``dt``.

    ``half[j]`` is ``exp(-dt/2 h_j)`` (used on even bonds) and ``full[j]`` is
    ``exp(-dt h_j)`` (odd bonds); ``j`` runs over bonds ``1..L-1``.
    """

    dt: float
    half: dict
    full: dict

    @classmethod
    def build(cls, model, dt, form="B", schmidt_tol=1e-14):
        from .models import bond_hamiltonians, build_gate

        charges = (model.parity() < 0).astype(int)
        half, full, cache = {}, {}, {}
        for j, hb in enumerate(bond_hamiltonians(model), start=1):
            key = hb.tobytes()
            if key not in cache:
                cache[key] = (
                    build_gate(hb, dt / 2, form, schmidt_tol, charges),
                    build_gate(hb, dt, form, schmidt_tol, charges),
                )
            if j % 2 == 0:
                half[j] = cache[key][0]
            else:
                full[j] = cache[key][1]
        return cls(float(dt), half, full)


def sweep(mps: SymmetricMPS, gates: GateSet, comp: Compressor) -> float:
    """One second-order Trotter step: even bonds dt/2, odd bonds dt, even bonds dt/2.

    Updates ``mps`` in place and returns the largest relative discarded
    weight of any compression in the step.
    """
    worst = 0.0
    plan = [(j, gates.half[j]) for j in sorted(gates.half)]
    plan = plan + [(j, gates.full[j]) for j in sorted(gates.full)] + plan
    for j, g in plan:
        _, w, _ = apply_gate_and_compress(mps, j, g, comp)
        worst = max(worst, w)
    return worst


def parity_audit(mps: SymmetricMPS) -> float:
    """Largest magnitude among charge-violating tensor entries (0 when clean)."""
    worst = 0.0
    p = mps.phys_charges
    for j, g in enumerate(mps.gammas):
        ql, qr = mps.bond_charges[j], mps.bond_charges[j + 1]
        bad = (ql[:, None, None] + p[None, :, None] + qr[None, None, :]) % 2 != 0
        if bad.any():
            worst = max(worst, float(np.abs(g[bad]).max()))
    if mps.bond_charges[0].tolist() != [0] or mps.bond_charges[-1].tolist() != [0]:
        worst = np.inf
    return worst


# -- environments -------------------------------------------------------------


def _transfer_left(E, M, op=None):
    # E[a_bra, a_ket] -> E'[c_bra, c_ket]
    Mk = M if op is None else np.tensordot(op, M, axes=(1, 1)).transpose(1, 0, 2)
    t = np.tensordot(E, Mk, axes=(1, 0))  # (a_bra, s, c_ket)
    return np.tensordot(M.conj(), t, axes=([0, 1], [0, 1]))


def _transfer_right(F, M, op=None):
    # F[c_bra, c_ket] -> F'[a_bra, a_ket]
    Mk = M if op is None else np.tensordot(op, M, axes=(1, 1)).transpose(1, 0, 2)
    t = np.tensordot(Mk, F, axes=(2, 1))  # (a_ket, s, c_bra)
    return np.tensordot(M.conj(), t, axes=([1, 2], [1, 2]))


def left_environments(mps: SymmetricMPS) -> list[np.ndarray]:
    """``E[j]`` contracts sites ``0..j-1``; ``E[L]`` is the squared norm."""
    E = [np.ones((1, 1), dtype=mps.dtype)]
    for j in range(mps.L):
        E.append(_transfer_left(E[-1], mps.site_tensor(j)))
    return E


def right_environments(mps: SymmetricMPS) -> list[np.ndarray]:
    """``F[j]`` contracts sites ``j..L-1``; ``F[L]`` is trivial."""
    F = [None] * (mps.L + 1)
    F[mps.L] = np.ones((1, 1), dtype=mps.dtype)
    for j in range(mps.L - 1, -1, -1):
        F[j] = _transfer_right(F[j + 1], mps.site_tensor(j))
    return F


# -- canonical form -----------------------------------------------------------


def _block_qr(mat, row_q, col_q):
    out = []
    for q in np.intersect1d(row_q, col_q):
        rows = np.flatnonzero(row_q == q)
        cols = np.flatnonzero(col_q == q)
        Q, R = sla.qr(mat[np.ix_(rows, cols)], mode="economic", check_finite=False)
        out.append((int(q), rows, cols, Q, R))
    return out


def canonicalize(mps: SymmetricMPS, rel_cutoff: float = 1e-14, lam_floor: float = 1e-12) -> SymmetricMPS:
    """Exact Vidal canonical form of the same (normalized) state.

    A left-to-right blockwise QR sweep is followed by a right-to-left
    blockwise SVD sweep; singular values below ``rel_cutoff`` times the
    largest on a bond are dropped.
    """
    L, d, p = mps.L, mps.d, mps.phys_charges
    dtype = mps.dtype
    Ms = [mps.site_tensor(j) for j in range(L)]
    bq = [q.copy() for q in mps.bond_charges]

    for j in range(L - 1):
        chil, _, chir = Ms[j].shape
        mat = Ms[j].reshape(chil * d, chir)
        parts = _block_qr(mat, _charge_grid(bq[j], p), bq[j + 1])
        n = sum(Q.shape[1] for *_, Q, _ in parts)
        Qf = np.zeros((chil * d, n), dtype=dtype)
        Rf = np.zeros((n, chir), dtype=dtype)
        charges, k = [], 0
        for q, rows, cols, Q, R in parts:
            r = Q.shape[1]
            Qf[rows, k:k + r] = Q
            Rf[k:k + r, cols] = R
            charges.append(np.full(r, q))
            k += r
        Ms[j] = Qf.reshape(chil, d, n)
        Ms[j + 1] = np.tensordot(Rf, Ms[j + 1], axes=(1, 0))
        bq[j + 1] = np.concatenate(charges) if charges else np.zeros(0, int)

    norm = np.linalg.norm(Ms[L - 1])
    if norm == 0:
        raise NumericalError("state has zero norm")
    Ms[L - 1] = Ms[L - 1] / norm

    lams = [np.ones(1)] + [None] * (L - 1) + [np.ones(1)]
    gammas = [None] * L
    for j in range(L - 1, 0, -1):
        chil, _, chir = Ms[j].shape
        mat = Ms[j].reshape(chil, d * chir)
        col_q = _charge_grid(p, bq[j + 1])
        parts = []
        for q in np.intersect1d(bq[j], col_q):
            rows = np.flatnonzero(bq[j] == q)
            cols = np.flatnonzero(col_q == q)
            U, s, Vh = sla.svd(mat[np.ix_(rows, cols)], full_matrices=False, check_finite=False)
            parts.append((int(q), rows, cols, U, s, Vh))
        smax = max(s[0] for *_, s, _ in parts if s.size)
        us_blocks, vh_blocks, sig, charges = [], [], [], []
        for q, rows, cols, U, s, Vh in parts:
            k = int(np.count_nonzero(s > rel_cutoff * smax))
            us_blocks.append((rows, U[:, :k] * s[:k]))
            vh_blocks.append((cols, Vh[:k]))
            sig.append(s[:k])
            charges.append(np.full(k, q))
        sig = np.concatenate(sig)
        n = sig.size
        US = np.zeros((chil, n), dtype=dtype)
        V = np.zeros((n, d * chir), dtype=dtype)
        k = 0
        for (rows, us), (cols, vh) in zip(us_blocks, vh_blocks):
            r = us.shape[1]
            US[rows, k:k + r] = us
            V[k:k + r, cols] = vh
            k += r
        lam = sig / np.linalg.norm(sig)
        inv = 1.0 / np.maximum(lams[j + 1], lam_floor)
        gammas[j] = V.reshape(n, d, chir) * inv[None, None, :]
        lams[j] = lam
        bq[j] = np.concatenate(charges)
        Ms[j - 1] = np.tensordot(Ms[j - 1], US, axes=(2, 0)) / np.linalg.norm(sig)
    inv = 1.0 / np.maximum(lams[1], lam_floor)
    gammas[0] = Ms[0] * inv[None, None, :]
    return SymmetricMPS(gammas, lams, bq, p.copy())
