import numpy as np
import pytest
from hypothesis import given, strategies as st

from rydeff import nz
from rydeff.errors import DimensionError, IncompatibleObservableError, InvalidSpecError
from rydeff.model import DephasingParams, EitParams, LatticeSpec, build_chain_interactions
from rydeff.observables import (ObservableSpec, diagonal_values, evaluate, is_reduced_admissible,
                                site_observable_matrix)
from rydeff.operators import NUMBER, SIGMA_X, random_density_matrix

NAMES = ["mean_density", "fluctuations", "g2_1", "g2_2"]


def pure(vec):
    return np.outer(vec, vec.conj())


def test_all_down_values():
    rho = np.zeros((16, 16))
    rho[0, 0] = 1.0
    for name in NAMES:
        assert evaluate(name, rho) == 0.0


def test_maximally_mixed_values():
    for n in (3, 4, 5):
        rho = np.eye(2 ** n) / 2 ** n
        assert evaluate("mean_density", rho) == pytest.approx(0.5)
        assert evaluate("g2_1", rho) == pytest.approx(0.25)
        assert evaluate("fluctuations", rho) == pytest.approx(0.25 / n)


def test_sigma_x_on_plus_states():
    plus = np.ones(2) / np.sqrt(2)
    vec = plus
    for _ in range(3):
        vec = np.kron(vec, plus)
    assert evaluate("sigma_x", pure(vec)) == pytest.approx(1.0)
    three = np.zeros(3)
    three[[0, 2]] = 1 / np.sqrt(2)           # up and down of the three-level atom
    assert evaluate("sigma_x", pure(np.kron(three, three)), levels=3) == pytest.approx(1.0)


def test_sigma_x_needs_coherences():
    with pytest.raises(IncompatibleObservableError):
        evaluate("sigma_x", np.ones(4) / 4)


def test_name_parsing():
    assert ObservableSpec.parse("g2_3").distance == 3
    assert ObservableSpec.parse("g2_3").name == "g2_3"
    with pytest.raises(InvalidSpecError):
        ObservableSpec.parse("g3_1")
    with pytest.raises(InvalidSpecError):
        ObservableSpec("g2", distance=0)
    with pytest.raises(DimensionError):
        evaluate("mean_density", np.ones(6) / 6)


def test_custom_diagonal():
    spec = ObservableSpec("custom_diagonal", diagonal=np.arange(4.0), label="index")
    assert spec.name == "index"
    assert evaluate(spec, np.array([0.0, 0.0, 0.5, 0.5])) == pytest.approx(2.5)


@given(seed=st.integers(0, 2 ** 31), n=st.sampled_from([2, 3, 4]))
def test_diagonal_matrix_matches_probability_vector(seed, n):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(2 ** n))
    for name in NAMES:
        assert evaluate(name, np.diag(p)) == pytest.approx(evaluate(name, p), abs=1e-12)


@given(seed=st.integers(0, 2 ** 31), n=st.sampled_from([4, 5, 6]))
def test_g2_ring_symmetry(seed, n):
    p = np.random.default_rng(seed).dirichlet(np.ones(2 ** n))
    for d in range(1, n):
        a = evaluate(ObservableSpec("g2", distance=d), p)
        b = evaluate(ObservableSpec("g2", distance=n - d), p)
        assert a == pytest.approx(b, abs=1e-12)


def test_values_are_real(rng):
    rho = random_density_matrix(8, rng)
    for name in NAMES + ["sigma_x"]:
        assert isinstance(evaluate(name, rho), float)


def test_open_chain_pair_average():
    vals = diagonal_values(ObservableSpec("g2", distance=1), 3, boundary="open")
    # configuration up-up-down: one adjacent pair out of two bonds
    assert vals[0b110] == pytest.approx(0.5)


def test_reduced_admissibility():
    I = build_chain_interactions(LatticeSpec(1))
    deph = nz.dephasing_split(DephasingParams(1.0, 0.0, 10.0), I)
    assert is_reduced_admissible(site_observable_matrix(NUMBER, 0, 1), deph.P)
    assert not is_reduced_admissible(site_observable_matrix(SIGMA_X, 0, 1), deph.P)
    eit = nz.eit_split(EitParams(1.0, 1.0, 0.0, 50.0), I)
    sx3 = np.zeros((3, 3))
    sx3[0, 2] = sx3[2, 0] = 1.0
    assert is_reduced_admissible(sx3, eit.P)
    with pytest.raises(DimensionError):
        is_reduced_admissible(np.eye(3), deph.P)
