import numpy as np
import pytest
from hypothesis import given, strategies as st

from rydeff import eit, nz
from rydeff.errors import DimensionError, InvalidSpecError, InvalidStateError
from rydeff.evolution import TimeGrid, integrate, steady_state, trace_distance
from rydeff.model import EitParams, LatticeSpec, build_chain_interactions
from rydeff.observables import is_reduced_admissible
from rydeff.operators import (NUMBER, SIGMA_X, SIGMA_Y, build_three_level_liouvillian,
                              random_density_matrix, site_operator)


def chain(n, V=10.0, **kw):
    return build_chain_interactions(LatticeSpec(n, nn_strength_V=V, **kw))


def up_state(n):
    rho = np.zeros((2 ** n, 2 ** n), dtype=complex)
    rho[-1, -1] = 1.0
    return rho


def test_coupling_only_decay():
    p = EitParams(0.0, 1.0, 0.0, 100.0)
    L = eit.build_reduced_liouvillian(p, chain(1, 0.0), "second_order")
    grid = TimeGrid.uniform(50.0, 11)
    r = integrate(L, up_state(1), grid, observables=["mean_density"])
    assert np.abs(r["mean_density"] - np.exp(-0.04 * grid.sample_times)).max() < 1e-8


def test_probe_only_freezes_populations(rng):
    p = EitParams(1.0, 0.0, 0.0, 100.0)
    L = eit.build_reduced_liouvillian(p, chain(2, 5.0), "second_order")
    rho0 = random_density_matrix(4, rng)
    r = integrate(L, rho0, TimeGrid([30.0]), store_states=True)
    rho = r.states[0]
    assert np.allclose(np.diag(rho), np.diag(rho0), atol=1e-10)
    # coherences between different ground/Rydberg words decay
    assert abs(rho[0, 3]) < abs(rho0[0, 3])


def test_single_atom_steady_state_matches_full_model():
    p = EitParams(1.0, 1.0, 0.0, 100.0)
    I = chain(1, 0.0)
    full = eit.project_and_reduce(steady_state(build_three_level_liouvillian(p, I)))
    red = steady_state(eit.build_reduced_liouvillian(p, I, "second_order"))
    assert trace_distance(full, red) < 0.01


def test_projection_examples():
    # three-level digits: 0 = up, 1 = intermediate, 2 = down
    mid = np.zeros((3, 3))
    mid[1, 1] = 1.0
    assert np.allclose(eit.project_and_reduce(mid), [[1, 0], [0, 0]])
    rho = np.zeros((9, 9))
    rho[0, 0], rho[8, 8] = 0.25, 0.75         # up-up and down-down
    out = eit.project_and_reduce(rho)
    assert np.allclose(np.diag(out), [0.75, 0, 0, 0.25])
    with pytest.raises(DimensionError):
        eit.project_and_reduce(np.eye(4))


@given(seed=st.integers(0, 2 ** 31), n=st.sampled_from([1, 2, 3]))
def test_projection_preserves_trace_and_hermiticity(seed, n):
    rho = random_density_matrix(3 ** n, np.random.default_rng(seed))
    mu = eit.project_and_reduce(rho)
    assert np.trace(mu).real == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(mu, mu.conj().T)
    assert np.linalg.eigvalsh(mu).min() > -1e-12
    assert np.allclose(eit.project_and_reduce(eit.embed_reduced(mu)), mu)


def test_allowed_configurations():
    assert sorted(eit.allowed_configurations(3).tolist()) == [0, 1, 2, 4]
    assert len(eit.allowed_configurations(4)) == 7
    assert len(eit.allowed_configurations(4, "open")) == 8


def test_exclusion_projector(rng):
    g = eit.ground_state(3)
    out, removed = eit.exclusion_projector(g, 3)
    assert np.array_equal(out, g) and removed == 0
    rho = np.eye(8) / 8
    out, removed = eit.exclusion_projector(rho, 3)
    assert removed == pytest.approx(0.5)
    vec = np.ones(8) / np.sqrt(8)
    _, removed = eit.exclusion_projector(vec, 3)
    assert removed == pytest.approx(0.5)


def test_exclusion_dynamics_does_not_leak():
    p = EitParams(10.0, 1.0, 0.0, 100.0)
    I = chain(5, 100.0)
    L = eit.build_reduced_liouvillian(p, I, "nn_exclusion")
    grid = TimeGrid.uniform(20.0, 21)
    r = integrate(L, eit.ground_state(5), grid, store_states=True)
    forbidden = np.setdiff1d(np.arange(32), eit.allowed_configurations(5))
    for rho in r.states:
        assert np.abs(np.diag(rho)[forbidden]).max() < 1e-8
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
        assert np.allclose(rho, rho.conj().T)
    with pytest.raises(InvalidStateError):
        integrate(L, up_state(5), grid)


def test_variants_converge_as_decay_grows(rng):
    I = chain(3, 5.0)
    mu = random_density_matrix(8, rng)
    diffs = []
    for G in (100.0, 200.0, 400.0):
        p = EitParams(1.0, 1.0, 0.5, G)
        a = eit.build_reduced_liouvillian(p, I, "second_order").apply(mu)
        b = eit.build_reduced_liouvillian(p, I, "nonperturbative").apply(mu)
        diffs.append(np.abs(a - b).sum())
    assert diffs[1] <= 0.5 * diffs[0]
    assert diffs[2] <= 0.5 * diffs[1]


@pytest.mark.parametrize("variant", eit.VARIANTS)
def test_variants_preserve_trace_and_hermiticity(variant, rng):
    L = eit.build_reduced_liouvillian(EitParams(2.0, 1.0, 0.3, 50.0), chain(4, 20.0), variant)
    mu = eit.ground_state(4) if variant == "nn_exclusion" else random_density_matrix(16, rng)
    d = L.apply(mu)
    assert abs(np.trace(d)) < 1e-12
    assert np.allclose(d, d.conj().T)


def test_unknown_variant():
    with pytest.raises(InvalidSpecError):
        eit.build_reduced_liouvillian(EitParams(1.0, 1.0, 0.0, 50.0), chain(2), "exact")


def _three(op2):
    # lift a (down, up) operator to the (up, mid, down) ordering
    idx = [2, 0]
    out = np.zeros((3, 3), dtype=complex)
    out[np.ix_(idx, idx)] = op2
    return out


@pytest.mark.parametrize("op", [NUMBER, SIGMA_X, SIGMA_Y])
def test_reduced_observable_rule(op, rng):
    s = nz.eit_split(EitParams(1.0, 1.0, 0.0, 50.0), chain(2, 3.0, boundary="open"))
    for k in range(2):
        O3 = site_operator(_three(op), k, 2, 3).toarray()
        O2 = site_operator(op, k, 2).toarray()
        assert is_reduced_admissible(O3, s.P)
        rho = (s.P @ random_density_matrix(9, rng).reshape(-1)).reshape(9, 9)
        assert np.trace(O3 @ rho) == pytest.approx(np.trace(O2 @ eit.project_and_reduce(rho)),
                                                   abs=1e-12)
