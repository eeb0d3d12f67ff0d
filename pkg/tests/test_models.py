import numpy as np
import pytest
from fractions import Fraction

from rlftn.exact import chain_free_fermion_energy, ed_ground_state, sparse_hamiltonian
from rlftn.models import (
    ChainModel,
    CylinderModel,
    bond_hamiltonians,
    bond_weights,
    build_gate,
    dense_hamiltonian,
    parity_structure,
    spin_operators,
)


@pytest.mark.parametrize("S", [0.5, 1, 1.5, 2, 5])
def test_spin_algebra(S):
    sp = spin_operators(S)
    X, Z = sp.X, sp.Z
    Y = -1j * (Z @ X - X @ Z)
    np.testing.assert_allclose(np.linalg.eigvalsh(X), np.diag(Z), atol=1e-12)
    np.testing.assert_allclose(X @ Y - Y @ X, 1j * Z, atol=1e-12)
    cas = X @ X + Y @ Y + Z @ Z
    np.testing.assert_allclose(cas, S * (S + 1) * np.eye(sp.d), atol=1e-10)
    np.testing.assert_allclose(sp.P @ X, -X @ sp.P, atol=1e-12)
    assert np.allclose(sp.P @ sp.P, np.eye(sp.d))


def test_spin_rejects_non_half_integer():
    with pytest.raises(ValueError):
        spin_operators(0.3)
    with pytest.raises(ValueError):
        spin_operators(0)
    assert spin_operators(Fraction(3, 2)).d == 4


def test_bond_weights():
    assert bond_weights(4, 1) == (1.0, 0.5)
    assert bond_weights(4, 2) == (0.5, 0.5)
    assert bond_weights(4, 3) == (0.5, 1.0)
    assert bond_weights(2, 1) == (1.0, 1.0)


@pytest.mark.parametrize("model", [
    ChainModel(5, 0.7),
    ChainModel(4, 1.3, S=1),
    ChainModel(3, 0.4, S=1.5),
    CylinderModel(3, 2, 2.0),
    CylinderModel(2, 3, 1.1),
])
def test_bond_terms_sum_to_hamiltonian(model):
    H = dense_hamiltonian(model)
    d, L = model.d, model.L
    total = np.zeros_like(H)
    for j, hb in enumerate(bond_hamiltonians(model), start=1):
        total += np.kron(np.kron(np.eye(d ** (j - 1)), hb), np.eye(d ** (L - j - 1)))
    np.testing.assert_allclose(total, H, atol=1e-12)
    np.testing.assert_allclose(sparse_hamiltonian(model).toarray(), H, atol=1e-12)


@pytest.mark.parametrize("model", [ChainModel(4, 0.9, S=1), CylinderModel(2, 3, 1.5)])
def test_hamiltonian_commutes_with_parity(model):
    H = dense_hamiltonian(model)
    P = np.diag(model.parity())
    Ptot = P
    for _ in range(model.L - 1):
        Ptot = np.kron(Ptot, P)
    np.testing.assert_allclose(H @ Ptot, Ptot @ H, atol=1e-12)


def test_two_site_chain_energy():
    assert ed_ground_state(ChainModel(2, 1.0))[0] == pytest.approx(-np.sqrt(5), abs=1e-12)


@pytest.mark.parametrize("L,h", [(6, 1.0), (8, 0.5), (7, 2.0)])
def test_free_fermion_oracle_matches_ed(L, h):
    assert ed_ground_state(ChainModel(L, h))[0] == pytest.approx(chain_free_fermion_energy(L, h), abs=1e-10)


def test_cylinder_w2_counts_ring_bond_twice():
    # W=2: the two legs are joined by both ring bonds
    m = CylinderModel(2, 2, 0.0)
    w = np.linalg.eigvalsh(m.ring_hamiltonian())
    assert w[0] == pytest.approx(-2.0)


def test_parity_structure():
    ps = parity_structure(ChainModel(3, 1.0, S=1))
    assert (ps["d_plus"], ps["d_minus"]) == (2, 1)
    ps = parity_structure(CylinderModel(2, 4, 1.0))
    assert (ps["d_plus"], ps["d_minus"]) == (8, 8)
    assert ps["charges"][0] == 0


def test_invalid_models():
    with pytest.raises(ValueError):
        ChainModel(1, 1.0)
    with pytest.raises(ValueError):
        CylinderModel(4, 1, 1.0)


@pytest.mark.parametrize("model", [ChainModel(3, 0.8), ChainModel(3, 1.2, S=2), CylinderModel(3, 3, 2.0)])
@pytest.mark.parametrize("form", ["B", "P"])
def test_gate_block_and_kronecker_terms_agree(model, form):
    charges = (model.parity() < 0).astype(int)
    hb = bond_hamiltonians(model)[0]
    g = build_gate(hb, 0.3, form, charges=charges)
    w, v = np.linalg.eigh(hb)
    np.testing.assert_allclose(g.block, (v * np.exp(-0.3 * w)) @ v.T, atol=1e-12)
    rebuilt = sum(np.kron(a, b) for a, b in g.terms)
    np.testing.assert_allclose(rebuilt, g.block, atol=1e-12)
    for (a, b), q in zip(g.terms, g.term_charges):
        op_q = (charges[:, None] + charges[None, :]) % 2
        assert np.all(a[op_q != q] == 0) and np.all(b[op_q != q] == 0)
    assert g.K <= g.d ** 2


def test_gate_identity_at_zero_dt():
    m = ChainModel(3, 1.0, S=1)
    g = build_gate(bond_hamiltonians(m)[0], 0.0, "P", charges=(m.parity() < 0).astype(int))
    np.testing.assert_allclose(g.block, np.eye(9), atol=1e-14)
    assert g.K == 1


def test_gate_validation():
    with pytest.raises(ValueError):
        build_gate(np.eye(4), 0.1, "Q")
    with pytest.raises(ValueError):
        build_gate(np.eye(4), -0.1)
    with pytest.raises(ValueError):
        build_gate(np.triu(np.ones((4, 4))), 0.1)
