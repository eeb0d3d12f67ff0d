"""Reference ground-state energies used to check the tensor-network results.

The open spin-1/2 chain ``H = -J sum X_j X_{j+1} - g sum Z_j`` (Pauli
matrices) maps to free fermions. Its single-particle energies are twice the
singular values of the L x L upper bidiagonal matrix with ``g`` on the
diagonal and ``J`` above it, so ``E0 = -sum_k s_k``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def free_fermion_energy(L: int, g: float, J: float = 1.0) -> float:
    """Ground-state energy of the open transverse-field Ising chain."""
    M = np.diag(np.full(L, float(g))) + np.diag(np.full(L - 1, float(J)), 1)
    return -float(np.sum(np.linalg.svd(M, compute_uv=False)))


def chain_free_fermion_energy(L: int, h: float) -> float:
    """Spin-1/2 chain in the ``-1/S^2 XX + h/S Z`` convention (Pauli form)."""
    return free_fermion_energy(L, h, 1.0)


def sparse_hamiltonian(model) -> sp.csr_matrix:
    """Sparse Hamiltonian from Kronecker products of the model's local terms."""
    onsite, couplings = model.local_terms()
    d, L = model.d, model.L
    eye = sp.identity(d, format="csr")

    def embed(ops):
        out = None
        for k in range(L):
            m = sp.csr_matrix(ops[k]) if k in ops else eye
            out = m if out is None else sp.kron(out, m, format="csr")
        return out

    H = sum(embed({j: onsite}) for j in range(L))
    for j in range(L - 1):
        for a, b in couplings:
            H = H + embed({j: a, j + 1: b})
    return H.tocsr()


def ed_ground_state(model, dense_limit: int = 1024):
    """``(E0, psi)`` by exact diagonalization; small systems only."""
    H = sparse_hamiltonian(model)
    if H.shape[0] <= dense_limit:
        w, v = np.linalg.eigh(H.toarray())
        return float(w[0]), v[:, 0]
    w, v = spla.eigsh(H, k=1, which="SA", tol=1e-13)
    return float(w[0]), v[:, 0]


def dense_expectation(psi, op_by_site: dict, d: int, L: int) -> complex:
    """``<psi| prod_k op_k |psi> / <psi|psi>`` for a dense state vector."""
    t = np.asarray(psi).reshape([d] * L)
    out = t
    for site, op in op_by_site.items():
        out = np.moveaxis(np.tensordot(op, out, axes=(1, site)), 0, site)
    return complex(np.vdot(t, out) / np.vdot(t, t))


__all__ = [
    "free_fermion_energy",
    "chain_free_fermion_energy",
    "sparse_hamiltonian",
    "ed_ground_state",
    "dense_expectation",
]
