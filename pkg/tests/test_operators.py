import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from conftest import random_hermitian
from rydeff import basis
from rydeff.errors import DimensionError, InvalidSpecError
from rydeff.model import DephasingParams, EitParams, LatticeSpec, build_chain_interactions
from rydeff.operators import (MAX_SITES_THREE_LEVEL, NUMBER, Liouvillian,
                              build_three_level_liouvillian, build_two_level_liouvillian,
                              random_density_matrix, site_operator)


def chain(n, V=10.0, **kw):
    return build_chain_interactions(LatticeSpec(n, nn_strength_V=V, **kw))


def test_field_on_all_down_is_detuning():
    assert basis.interaction_field_h([0, 0, 0], 1, chain(3), -3.5) == -3.5


def test_field_one_neighbour_up():
    assert basis.interaction_field_h([0, 1, 0], 0, chain(3), 0.0) == pytest.approx(10.0)


def test_field_next_nearest_tail():
    h = basis.interaction_field_h([0, 0, 1, 0], 0, chain(4), -10.0)
    assert h == pytest.approx(-9.84375)


def test_field_site_out_of_range():
    with pytest.raises(InvalidSpecError):
        basis.interaction_field_h([0, 0], 2, chain(2), 0.0)


def test_pair_field_examples():
    V = chain(2)
    assert basis.pair_field_h([0, 0], 0, 1, 1, 1, V, 0.0) == pytest.approx(10.0)
    V3 = chain(3)
    assert basis.pair_field_h([0, 0, 0], 0, 1, 0, 1, V3, 0.0) == basis.pair_field_h(
        [0, 0, 0], 0, 1, 1, 0, V3, 0.0)
    d = (basis.pair_field_h([0, 0, 1], 0, 1, 0, 1, V3, 0.0)
         - basis.pair_field_h([0, 0, 1], 0, 1, 1, 0, V3, 0.0))
    assert d == pytest.approx(0.0)
    with pytest.raises(InvalidSpecError):
        basis.pair_field_h([0, 0, 0], 1, 1, 1, 1, V3, 0.0)


def test_field_matches_energy_difference_exhaustively():
    for n in (2, 3, 4):
        V = chain(n, 7.0)
        E = basis.diagonal_energies(V, 1.3)
        for c in range(2 ** n):
            cfg = basis.decode(c, n)
            for k in range(n):
                lo = c & ~basis.flip_mask(n, k)
                hi = c | basis.flip_mask(n, k)
                assert basis.interaction_field_h(cfg, k, V, 1.3) == pytest.approx(E[hi] - E[lo])


def test_single_spin_dephasing_of_coherence():
    L = build_two_level_liouvillian(DephasingParams(1.0, 0.0, 10.0), chain(1))
    S = L.superoperator().toarray()
    # switch the drive off by subtracting its commutator
    H = site_operator(np.array([[0, 1.0], [1.0, 0]]), 0, 1).toarray()
    S = S + 1j * (np.kron(H, np.eye(2)) - np.kron(np.eye(2), H.T))
    rho0 = np.array([[0.3, 0.2 + 0.1j], [0.2 - 0.1j, 0.7]])
    rho = (sla.expm(0.37 * S) @ rho0.reshape(-1)).reshape(2, 2)
    assert rho[0, 1] == pytest.approx(rho0[0, 1] * np.exp(-10 * 0.37 / 2))
    assert rho[0, 0] == pytest.approx(0.3)


def test_two_site_independent_decay():
    with pytest.warns(UserWarning):
        p = DephasingParams(1e-9, 0.0, 0.0, 0.7)
    L = build_two_level_liouvillian(p, chain(2, 0.0))
    rho0 = np.zeros((4, 4))
    rho0[3, 3] = 1.0
    rho = (sla.expm(1.1 * L.superoperator().toarray()) @ rho0.reshape(-1)).reshape(4, 4)
    assert rho[3, 3].real == pytest.approx(np.exp(-2 * 0.7 * 1.1), rel=1e-6)


def test_three_level_bare_decay():
    L = build_three_level_liouvillian(EitParams(0.0, 0.0, 0.0, 5.0), chain(1))
    rho0 = np.zeros((3, 3))
    rho0[basis.MID3, basis.MID3] = 1.0
    rho = (sla.expm(0.2 * L.superoperator().toarray()) @ rho0.reshape(-1)).reshape(3, 3)
    assert rho[basis.MID3, basis.MID3].real == pytest.approx(np.exp(-1.0))
    assert rho[basis.DOWN3, basis.DOWN3].real == pytest.approx(1 - np.exp(-1.0))


def test_single_site_dissipator_entrywise(rng):
    G = 3.0
    L = build_three_level_liouvillian(EitParams(0.0, 0.0, 0.0, G), chain(1))
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    out = L.apply(A)
    a = A
    expect = G * np.array([[0, -a[0, 1] / 2, 0],
                           [-a[1, 0] / 2, -a[1, 1], -a[1, 2] / 2],
                           [0, -a[2, 1] / 2, a[1, 1]]])
    assert np.allclose(out, expect)


def test_dimension_guard():
    with pytest.raises(DimensionError):
        build_three_level_liouvillian(EitParams(), chain(MAX_SITES_THREE_LEVEL + 1))


def models():
    return [
        build_two_level_liouvillian(DephasingParams(1.0, -2.0, 10.0), chain(3)),
        build_two_level_liouvillian(DephasingParams(1.0, 1.0, 10.0, 0.5), chain(3, 4.0, boundary="open")),
        build_three_level_liouvillian(EitParams(1.0, 2.0, 0.5, 30.0), chain(2, 5.0)),
    ]


@pytest.mark.parametrize("L", models(), ids=["deph", "deph+decay", "eit"])
def test_trace_and_hermiticity_preserved(L, rng):
    for _ in range(20):
        rho = random_hermitian(L.dim, rng)
        out = L.apply(rho)
        assert abs(np.trace(out)) < 1e-10 * np.linalg.norm(rho)
        assert np.abs(L.apply(rho.conj().T) - out.conj().T).max() < 1e-10 * np.linalg.norm(rho)
        assert np.allclose(L.apply_hermitian(rho), out, atol=1e-12)


@pytest.mark.parametrize("L", models(), ids=["deph", "deph+decay", "eit"])
def test_apply_matches_superoperator(L, rng):
    rho = rng.normal(size=(L.dim, L.dim)) + 1j * rng.normal(size=(L.dim, L.dim))
    S = L.superoperator()
    assert np.allclose(L.apply(rho).reshape(-1), S @ rho.reshape(-1), atol=1e-12)


def _commutator_norm(A, B):
    return np.abs(A @ B - B @ A).max()


def test_classical_hamiltonian_commutes_with_dephasing():
    n = 3
    V = chain(n, 6.0)
    d = 2 ** n
    H0 = np.diag(basis.diagonal_energies(V, 1.5)).astype(complex)
    ham = Liouvillian(H0, [], n_sites=n).superoperator().toarray()
    deph = Liouvillian(np.zeros((d, d)), [np.sqrt(10.0) * site_operator(NUMBER, k, n)
                                          for k in range(n)], n_sites=n).superoperator().toarray()
    assert _commutator_norm(ham, deph) < 1e-10


def test_three_level_classical_part_commutes_with_decay():
    n = 2
    V = chain(n, 6.0)
    d = 3 ** n
    H0 = np.diag(basis.diagonal_energies(V, 0.7, 3)).astype(complex)
    ham = Liouvillian(H0, [], levels=3, n_sites=n).superoperator().toarray()
    full = build_three_level_liouvillian(EitParams(0.0, 0.0, 0.0, 7.0), build_chain_interactions(
        LatticeSpec(n, nn_strength_V=0.0)))
    dec = full.superoperator().toarray()
    assert _commutator_norm(ham, dec) < 1e-10


@given(dim=st.sampled_from([2, 3, 4, 8, 9]), seed=st.integers(0, 2 ** 31))
def test_random_density_matrix_valid(dim, seed):
    rho = random_density_matrix(dim, seed)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.allclose(rho, rho.conj().T)
    assert np.linalg.eigvalsh(rho).min() > -1e-12
