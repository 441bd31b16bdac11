import numpy as np
import pytest
from hypothesis import given, strategies as st

from rydeff.errors import InvalidSpecError
from rydeff.model import (DephasingParams, EitParams, InteractionMatrix, LatticeSpec,
                          build_chain_interactions)


def test_periodic_three_sites_all_pairs_at_distance_one():
    V = build_chain_interactions(LatticeSpec(3, nn_strength_V=10.0)).values
    off = V[~np.eye(3, dtype=bool)]
    assert np.allclose(off, 10.0)


def test_periodic_four_sites_next_nearest_coupling():
    V = build_chain_interactions(LatticeSpec(4, nn_strength_V=10.0))
    assert V[0, 2] == pytest.approx(10.0 / 2 ** 6)


def test_open_pair_with_cubic_tail():
    V = build_chain_interactions(LatticeSpec(2, exponent_p=3, nn_strength_V=8.0, boundary="open"))
    assert V[0, 1] == pytest.approx(8.0)


def test_range_cutoff_keeps_nearest_neighbours_only():
    V = build_chain_interactions(LatticeSpec(6, nn_strength_V=3.0, range_cutoff=1)).values
    assert V[0, 1] == V[0, 5] == 3.0
    assert V[0, 2] == V[0, 3] == 0.0


def test_invalid_specs_raise():
    with pytest.raises(InvalidSpecError):
        LatticeSpec(0)
    with pytest.raises(InvalidSpecError):
        LatticeSpec(3, boundary="twisted")
    with pytest.raises(InvalidSpecError):
        InteractionMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(InvalidSpecError):
        DephasingParams(rabi_omega=0.0)
    with pytest.raises(InvalidSpecError):
        EitParams(decay_Gamma=0.0)


def test_regime_warnings():
    with pytest.warns(UserWarning):
        DephasingParams(rabi_omega=1.0, dephasing_gamma=2.0)
    with pytest.warns(UserWarning):
        EitParams(omega_p=20.0, decay_Gamma=100.0)


def test_neighbours_open_and_periodic():
    assert LatticeSpec(5).neighbours(0) == [1, 4]
    assert LatticeSpec(5, boundary="open").neighbours(0) == [1]
    assert LatticeSpec(2).neighbours(0) == [1]


@given(n=st.integers(1, 9), p=st.sampled_from([3, 6]), V=st.floats(0, 50),
       boundary=st.sampled_from(["periodic", "open"]))
def test_interactions_symmetric_with_zero_diagonal(n, p, V, boundary):
    M = build_chain_interactions(LatticeSpec(n, p, V, boundary)).values
    assert np.array_equal(M, M.T)
    assert np.all(np.diag(M) == 0)


@given(n=st.integers(2, 9), V=st.floats(0.1, 50), cutoff=st.one_of(st.none(), st.integers(1, 4)))
def test_periodic_chain_translation_invariant(n, V, cutoff):
    M = build_chain_interactions(LatticeSpec(n, nn_strength_V=V, range_cutoff=cutoff)).values
    shift = np.roll(np.arange(n), 1)
    assert np.allclose(M[np.ix_(shift, shift)], M)
