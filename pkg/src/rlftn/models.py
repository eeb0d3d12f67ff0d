"""Transverse-field Ising models and their two-site imaginary-time gates.

Chain (spin S, open boundaries)::

    H = -1/S^2 sum_j X_j X_{j+1} + h/S sum_j Z_j

Cylinder (spin-1/2 Pauli operators, W legs around, L rings along)::

    H = -sum_{i,j} X_{i,j} X_{i,j+1} - sum_{i,j} X_{i,j} X_{i+1,j} + h sum_{i,j} Z_{i,j}

with ``i`` periodic. Each ring is one effective site of dimension ``2**W``,
turning the cylinder into an open chain of length L.

Local bases are ordered by ascending ``m``; the cylinder basis is the
lexicographic product of its W legs (leg 0 most significant).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np
import scipy.linalg as sla

__all__ = [
    "SpinAlgebra",
    "spin_operators",
    "pauli_operators",
    "ChainModel",
    "CylinderModel",
    "TwoSiteGate",
    "bond_hamiltonians",
    "build_gate",
    "parity_structure",
    "dense_hamiltonian",
    "bond_weights",
]


@dataclass(frozen=True)
class SpinAlgebra:
    S: float
    X: np.ndarray
    Z: np.ndarray
    P: np.ndarray

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def charges(self) -> np.ndarray:
        """Parity charge per basis state: 0 even, 1 odd."""
        return (np.diag(self.P) < 0).astype(int)


def _as_spin(S) -> Fraction:
    two_s = Fraction(S).limit_denominator(2) * 2
    if two_s.denominator != 1 or two_s < 1 or abs(float(two_s) / 2 - float(S)) > 1e-12:
        raise ValueError(f"spin S must be a positive half-integer, got {S!r}")
    return two_s / 2


def spin_operators(S) -> SpinAlgebra:
    """Spin-S operators in the ascending-m basis.

    ``X`` uses the angular-momentum ladder elements
    ``<m+1|X|m> = sqrt(S(S+1) - m(m+1)) / 2``; parity is ``(-1)^(m+S)``.
    """
    S = _as_spin(S)
    d = int(2 * S + 1)
    m = np.array([float(-S + k) for k in range(d)])
    s = float(S)
    off = np.sqrt(s * (s + 1) - m[:-1] * (m[:-1] + 1)) / 2
    X = np.diag(off, 1) + np.diag(off, -1)
    Z = np.diag(m)
    P = np.diag([(-1.0) ** k for k in range(d)])  # m + S = k
    return SpinAlgebra(s, X, Z, P)


def pauli_operators() -> SpinAlgebra:
    """Pauli matrices (``2 *`` the spin-1/2 operators), ascending-m basis."""
    half = spin_operators(0.5)
    return SpinAlgebra(0.5, 2 * half.X, 2 * half.Z, half.P)


def _kron_all(ops):
    return reduce(np.kron, ops)


@dataclass(frozen=True)
class ChainModel:
    L: int
    h: float
    S: float = 0.5

    def __post_init__(self):
        if self.L < 2:
            raise ValueError(f"chain length L must be >= 2, got {self.L}")
        _as_spin(self.S)

    kind = "chain"

    @property
    def spin(self) -> SpinAlgebra:
        return spin_operators(self.S)

    @property
    def d(self) -> int:
        return int(round(2 * self.S + 1))

    @property
    def n_sites(self) -> int:
        return self.L

    def local_terms(self):
        """``(one_site, [(left_op, right_op), ...])`` defining the bond coupling."""
        sp = self.spin
        return (self.h / self.S) * sp.Z, [(-sp.X / self.S**2, sp.X)]

    def unit_x(self) -> list[np.ndarray]:
        """Order-parameter operators normalized to eigenvalues in [-1, 1]."""
        return [self.spin.X / self.S]

    def parity(self) -> np.ndarray:
        return np.diag(self.spin.P).copy()


@dataclass(frozen=True)
class CylinderModel:
    L: int
    W: int
    h: float

    def __post_init__(self):
        if self.L < 2:
            raise ValueError(f"cylinder length L must be >= 2, got {self.L}")
        if self.W < 2:
            raise ValueError(f"circumference W must be >= 2, got {self.W}")

    kind = "cylinder"

    @property
    def d(self) -> int:
        return 2**self.W

    @property
    def n_sites(self) -> int:
        return self.L

    def leg_op(self, op, i) -> np.ndarray:
        """``op`` acting on leg ``i`` of one ring."""
        eye = np.eye(2)
        return _kron_all([op if k == i else eye for k in range(self.W)])

    def ring_hamiltonian(self) -> np.ndarray:
        pa = pauli_operators()
        H = np.zeros((self.d, self.d))
        for i in range(self.W):
            H -= self.leg_op(pa.X, i) @ self.leg_op(pa.X, (i + 1) % self.W)
            H += self.h * self.leg_op(pa.Z, i)
        return H

    def local_terms(self):
        pa = pauli_operators()
        xs = [self.leg_op(pa.X, i) for i in range(self.W)]
        return self.ring_hamiltonian(), [(-x, x) for x in xs]

    def unit_x(self) -> list[np.ndarray]:
        pa = pauli_operators()
        return [self.leg_op(pa.X, i) for i in range(self.W)]

    def parity(self) -> np.ndarray:
        p = np.diag(pauli_operators().P)
        return _kron_all([p] * self.W)


def bond_weights(L: int, j: int) -> tuple[float, float]:
    """One-site weights on bond ``j`` (1..L-1, sites ``j-1`` and ``j``).

    Bulk sites give half their one-site term to each adjacent bond; the two
    chain ends give their full term to their only bond.
    """
    left = 1.0 if j == 1 else 0.5
    right = 1.0 if j == L - 1 else 0.5
    return left, right


def bond_hamiltonians(model) -> list[np.ndarray]:
    """Two-site terms ``h_bond(j)`` for ``j = 1..L-1``; they sum to ``H``."""
    onsite, couplings = model.local_terms()
    d = model.d
    eye = np.eye(d)
    coupling = sum(np.kron(a, b) for a, b in couplings)
    out = []
    for j in range(1, model.L):
        wl, wr = bond_weights(model.L, j)
        out.append(coupling + wl * np.kron(onsite, eye) + wr * np.kron(eye, onsite))
    return out


def dense_hamiltonian(model) -> np.ndarray:
    """Full Hamiltonian built site by site from Kronecker products.

    Exponential in size; only used as a brute-force reference.
    """
    onsite, couplings = model.local_terms()
    d, L = model.d, model.L
    eye = np.eye(d)

    def embed(ops):
        mats = [eye] * L
        for site, op in ops.items():
            mats[site] = op
        return _kron_all(mats)

    H = sum(embed({j: onsite}) for j in range(L))
    for j in range(L - 1):
        for a, b in couplings:
            H = H + embed({j: a, j + 1: b})
    return H


def parity_structure(model) -> dict:
    """Local parity charges and the sector dimensions ``(d_plus, d_minus)``."""
    p = model.parity()
    charges = (p < 0).astype(int)
    return {
        "charges": charges,
        "d_plus": int(np.sum(charges == 0)),
        "d_minus": int(np.sum(charges == 1)),
    }


@dataclass
class TwoSiteGate:
    """``exp(-dt * h_bond)`` as a d^2 x d^2 block and as Kronecker terms.

    ``terms[k] = (u_left, u_right)`` with ``sum_k kron(u_left, u_right)``
    equal to ``block``; ``term_charges[k]`` is the parity each factor adds.
    ``form`` selects which representation the TEBD update uses.
    """

    form: str
    dt: float
    block: np.ndarray
    terms: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    term_charges: list[int] = field(default_factory=list)

    @property
    def d(self) -> int:
        return int(round(np.sqrt(self.block.shape[0])))

    @property
    def K(self) -> int:
        return len(self.terms)

    @property
    def tensor(self) -> np.ndarray:
        """Four-index view ``[s1', s2', s1, s2]``."""
        d = self.d
        return self.block.reshape(d, d, d, d)


def _operator_charges(charges):
    """Parity that an elementary operator |a><b| adds: charge[a] - charge[b]."""
    return (charges[:, None] - charges[None, :]) % 2


def build_gate(h_bond, dt: float, form: str = "B", schmidt_tol: float = 1e-14,
               charges=None) -> TwoSiteGate:
    """Imaginary-time gate ``exp(-dt h_bond)``.

    The Kronecker form is the operator Schmidt decomposition of the block
    across the two sites, taken separately in the even and odd operator
    sectors so every factor has definite parity. Terms whose Schmidt weight
    is below ``schmidt_tol`` times the largest one are dropped.
    """
    if form not in ("B", "P"):
        raise ValueError(f"gate form must be 'B' or 'P', got {form!r}")
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    h_bond = np.asarray(h_bond)
    if not np.allclose(h_bond, h_bond.conj().T, atol=1e-12 * max(1.0, np.abs(h_bond).max())):
        raise ValueError("h_bond is not Hermitian")
    d = int(round(np.sqrt(h_bond.shape[0])))
    if d * d != h_bond.shape[0]:
        raise ValueError(f"h_bond dimension {h_bond.shape[0]} is not a square")
    w, v = sla.eigh(h_bond)
    block = (v * np.exp(-dt * w)) @ v.conj().T
    if not np.iscomplexobj(h_bond):
        block = block.real
    if charges is None:
        charges = np.zeros(d, dtype=int)
    charges = np.asarray(charges)

    # G[(s1' s2'), (s1 s2)] -> M[(s1' s1), (s2' s2)]
    M = block.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    opq = _operator_charges(charges).ravel()
    found = []
    for q in (0, 1):
        idx = np.flatnonzero(opq == q)
        if idx.size == 0:
            continue
        sub = M[np.ix_(idx, idx)]
        U, s, Vh = np.linalg.svd(sub, full_matrices=False)
        for k in range(s.size):
            found.append((s[k], q, idx, U[:, k], Vh[k]))
    smax = max(f[0] for f in found)
    terms, term_charges = [], []
    for s, q, idx, u, vh in sorted(found, key=lambda f: -f[0]):
        if s <= schmidt_tol * smax:
            continue
        left = np.zeros(d * d, dtype=M.dtype)
        right = np.zeros(d * d, dtype=M.dtype)
        left[idx] = np.sqrt(s) * u
        right[idx] = np.sqrt(s) * vh
        terms.append((left.reshape(d, d), right.reshape(d, d)))
        term_charges.append(q)
    return TwoSiteGate(form, float(dt), block, terms, term_charges)
