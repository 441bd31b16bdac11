import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rydeff import basis, nz, rates
from rydeff.errors import InvalidSpecError, UnsupportedError
from rydeff.evolution import TimeGrid
from rydeff.model import DephasingParams, LatticeSpec, build_chain_interactions
from rydeff.operators import SIGMA_X, site_operator

P0 = DephasingParams(1.0, 0.0, 10.0)


def chain(n, V=10.0, **kw):
    return build_chain_interactions(LatticeSpec(n, nn_strength_V=V, **kw))


def test_rate2_examples():
    I = chain(3)
    assert rates.rate2([0, 0, 0], 1, P0, I) == pytest.approx(0.4, rel=1e-14)
    assert rates.rate2([1, 0, 0], 1, P0, I) == pytest.approx(0.08, rel=1e-6)
    anti = DephasingParams(1.0, -10.0, 10.0)
    assert rates.rate2([1, 0, 0], 1, anti, I) == pytest.approx(0.4, rel=1e-5)


def test_rate2_independent_of_own_occupation():
    I = chain(4, 7.0)
    for c in range(16):
        occ = list(basis.decode(c, 4, 2))
        for k in range(4):
            flipped = occ.copy()
            flipped[k] ^= 1
            assert rates.rate2(occ, k, P0, I) == rates.rate2(flipped, k, P0, I)


def test_rate4_beta_examples():
    I = chain(1, 0.0)
    assert rates.rate4_beta([0], 0, P0, I) == pytest.approx(0.064, rel=1e-14)
    assert rates.rate4_beta([0], 0, DephasingParams(1.0, 5.0, 10.0), I) == pytest.approx(0.0, abs=1e-17)
    assert rates.rate4_beta([0], 0, DephasingParams(1.0, 10.0, 10.0), I) == pytest.approx(-0.001536,
                                                                                           rel=1e-12)


@pytest.mark.parametrize("delta", [0.0, 3.0, -7.0])
def test_noninteracting_single_rate_reduces_to_beta(delta):
    p = DephasingParams(1.0, delta, 10.0)
    I = chain(3, 0.0)
    for c in range(8):
        occ = basis.decode(c, 3, 2)
        for k in range(3):
            expected = rates.rate2(occ, k, p, I) + rates.rate4_beta(occ, k, p, I)
            assert rates.rate4_single(occ, k, p, I) == pytest.approx(expected, rel=1e-12)
            assert rates.rate4_single(occ, k, p, I) == pytest.approx(
                rates.rate4_single([0, 0, 0], k, p, I), rel=1e-12)
            for m in range(k + 1, 3):
                assert rates.rate4_double(occ, k, m, p, I) == pytest.approx(0.0, abs=1e-15)


def _oracle(p, I, order):
    s = nz.dephasing_split(p, I)
    t = nz.effective_terms(s.L0, s.L1, s.P)
    G = t["L2"] + (t["L4"] if order == 4 else 0)
    return nz.diagonal_block(G, s.dim).real


def test_scalar_rates_match_oracle_entries():
    I = chain(2)
    O = _oracle(P0, I, 4)
    single = rates.rate4_single([0, 0], 0, P0, I)
    double = rates.rate4_double([0, 0], 0, 1, P0, I)
    # site 0 is the most significant digit
    assert single == pytest.approx(O[2, 0], rel=1e-8)
    assert double == pytest.approx(O[3, 0], rel=1e-8)
    assert rates.rate4_double([0, 0], 1, 0, P0, I) == double
    with pytest.raises(InvalidSpecError):
        rates.rate4_double([0, 0], 1, 1, P0, I)


@pytest.mark.parametrize("order", [2, 4])
def test_generator_matches_oracle_n2(order):
    G = rates.build_generator(P0, chain(2), order).toarray()
    O = _oracle(P0, chain(2), order)
    assert np.abs(G - O).max() / np.abs(O).max() < 1e-8


@settings(max_examples=10)
@given(g=st.floats(5.0, 30.0), V=st.floats(0.0, 15.0), d=st.floats(-12.0, 12.0),
       n=st.sampled_from([1, 2, 3]))
def test_order2_generator_matches_oracle_random(g, V, d, n):
    p = DephasingParams(1.0, d, g)
    I = chain(n, V)
    G = rates.build_generator(p, I, 2).toarray()
    O = _oracle(p, I, 2)
    assert np.abs(G - O).max() / np.abs(O).max() < 1e-8


def test_order2_generator_structure():
    gen = rates.build_generator(DephasingParams(1.0, 2.0, 10.0), chain(4, 6.0), 2)
    off = gen.off_diagonal.toarray()
    assert off.min() >= 0
    assert gen.column_sum_error() < 1e-12
    assert not gen.has_negative_rates
    one = rates.build_generator(P0, chain(1, 0.0), 2).toarray()
    assert np.allclose(one, [[-0.4, 0.4], [0.4, -0.4]])


def test_order4_flags_negative_rates():
    # the double-flip rate turns negative somewhere in the scanned window
    found = False
    for V in np.linspace(2, 30, 8):
        for d in np.linspace(-30, 30, 13):
            gen = rates.build_generator(DephasingParams(1.0, d, 10.0), chain(4, V), 4)
            assert gen.column_sum_error() < 1e-12
            found |= gen.has_negative_rates
    assert found


def test_decay_extension():
    p = DephasingParams(1.0, 0.0, 10.0, 0.5)
    I = chain(2)
    with_decay = rates.build_generator(p, I, 2, with_decay=True).toarray()
    plain = rates.build_generator(p, I, 2).toarray()
    diff = with_decay - plain
    # only the up -> down channels gain 0.5
    assert diff[0, 2] == pytest.approx(0.5) and diff[2, 0] == pytest.approx(0.0)
    assert np.abs(with_decay.sum(axis=0)).max() < 1e-12
    with pytest.raises(UnsupportedError):
        rates.build_generator(p, I, 4, with_decay=True)
    with pytest.raises(InvalidSpecError):
        rates.build_generator(p, I, 3)


def test_dephasing_required():
    with pytest.warns(UserWarning):
        p = DephasingParams(1.0, 0.0, 0.0)
    with pytest.raises(InvalidSpecError):
        rates.rate2([0], 0, p, chain(1, 0.0))


def test_sigma_x_conjugation_is_occupation_substitution():
    n = 3
    I = chain(n, 6.0)
    p = DephasingParams(1.0, -2.0, 10.0)
    configs = [list(basis.decode(c, n, 2)) for c in range(2 ** n)]
    for m in range(n):
        F = np.diag([rates.rate4_single(c, m, p, I) for c in configs])
        for k in range(n):
            X = site_operator(SIGMA_X, k, n).toarray()
            explicit = np.diag(X @ F @ X)
            substituted = []
            for c in configs:
                c2 = c.copy()
                c2[k] = 1 - c2[k]
                substituted.append(rates.rate4_single(c2, m, p, I))
            assert np.allclose(explicit, substituted, rtol=1e-14, atol=0)


def test_zero_generator_keeps_vector():
    gen = rates.build_generator(P0, chain(2), 2)
    gen.matrix = gen.matrix * 0
    v0 = np.array([0.1, 0.2, 0.3, 0.4])
    r = rates.integrate_rate_equation(gen, v0, TimeGrid.uniform(5.0, 3), store_states=True)
    assert np.allclose(r.states[-1], v0)


@pytest.mark.parametrize("method", ["expm", "rk"])
def test_single_spin_relaxation(method):
    gen = rates.build_generator(P0, chain(1, 0.0), 2)
    grid = TimeGrid.uniform(4.0, 9)
    r = rates.integrate_rate_equation(gen, rates.all_down(1), grid, method=method)
    expected = 0.5 * (1 - np.exp(-0.8 * grid.sample_times))
    assert np.abs(r["mean_density"] - expected).max() < 1e-9
    assert r.meta["max_norm_drift"] < 1e-10


def test_initial_slope_equals_mean_rate():
    n = 5
    gen = rates.build_generator(P0, chain(n), 2)
    h = 1e-6
    r = rates.integrate_rate_equation(gen, rates.all_down(n), TimeGrid([h]))
    slope = r["mean_density"][0] / h
    expected = np.mean([rates.rate2([0] * n, k, P0, chain(n)) for k in range(n)])
    assert expected == pytest.approx(0.4)
    assert slope == pytest.approx(expected, rel=1e-5)


def test_integrate_rejects_bad_vectors():
    gen = rates.build_generator(P0, chain(1, 0.0), 2)
    with pytest.raises(InvalidSpecError):
        rates.integrate_rate_equation(gen, np.array([0.5, 0.6]), TimeGrid([1.0]))
    with pytest.raises(InvalidSpecError):
        rates.integrate_rate_equation(gen, np.array([1.0]), TimeGrid([1.0]))


def test_fourth_order_correction_shrinks_with_dephasing():
    ratios = []
    for g in (10.0, 20.0):
        p = DephasingParams(1.0, 0.0, g)
        G2 = rates.build_generator(p, chain(4), 2).toarray()
        G4 = rates.build_generator(p, chain(4), 4).toarray()
        ratios.append(np.abs(G4 - G2).sum() / np.abs(G2).sum())
    assert ratios[0] < 0.5
    assert ratios[1] < ratios[0]


def test_positivity_scan_small():
    spec = LatticeSpec(4, nn_strength_V=0.0)
    pm = rates.scan_positivity(P0, spec, (0.0, 30.0), (-30.0, 30.0), (7, 9))
    assert pm.positive[0].all()
    assert not pm.positive.all()
    assert pm.V_values[0] == 0.0 and pm.V_values[-1] == 30.0
    assert 0.0 < pm.negative_fraction < 1.0
    with pytest.raises(InvalidSpecError):
        rates.scan_positivity(P0, spec, (0, 1), (0, 1), 1)


def test_positivity_map_csv_round_trip(tmp_path):
    spec = LatticeSpec(3, nn_strength_V=0.0)
    pm = rates.scan_positivity(P0, spec, (0.0, 20.0), (-20.0, 20.0), (3, 5))
    pm.to_csv(tmp_path / "p.csv")
    back = rates.PositivityMap.from_csv(tmp_path / "p.csv")
    assert np.array_equal(back.positive, pm.positive)
    assert np.allclose(back.V_values, pm.V_values)
