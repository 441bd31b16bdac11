import numpy as np
import pytest
from scipy import stats

from rydeff import kmc, rates
from rydeff.errors import InvalidSpecError, UnsupportedError
from rydeff.evolution import TimeGrid
from rydeff.model import DephasingParams, EitParams, LatticeSpec, build_chain_interactions

P0 = DephasingParams(1.0, 0.0, 10.0)


def test_first_event_is_exponential():
    I = build_chain_interactions(LatticeSpec(3, nn_strength_V=10.0))
    r = kmc.kmc_ensemble(P0, I, [0, 0, 0], TimeGrid([0.0, 100.0]), 10_000, base_seed=0)
    assert stats.kstest(r.meta["first_event_times"], stats.expon(scale=1 / 1.2).cdf).pvalue > 0.01


def test_ensemble_matches_rate_equation():
    I = build_chain_interactions(LatticeSpec(4, nn_strength_V=10.0))
    grid = TimeGrid.uniform(5.0, 11)
    r = kmc.kmc_ensemble(P0, I, [0] * 4, grid, 10_000, base_seed=11)
    e = rates.integrate_rate_equation(rates.build_generator(P0, I, 2), rates.all_down(4), grid)
    dev = np.abs(r["mean_density"] - e["mean_density"])[1:]
    assert np.all(dev <= 3 * r.errors["mean_density"][1:])


def test_configuration_distribution_chi2():
    I = build_chain_interactions(LatticeSpec(3, nn_strength_V=6.0))
    grid = TimeGrid([2.0])
    r = kmc.kmc_ensemble(P0, I, [0] * 3, grid, 20_000, base_seed=3, record_configs=True)
    e = rates.integrate_rate_equation(rates.build_generator(P0, I, 2), rates.all_down(3), grid,
                                      store_states=True)
    counts = np.bincount(r.meta["config_codes"][:, 0], minlength=8)
    expected = e.states[0] / e.states[0].sum() * counts.sum()
    assert stats.chisquare(counts, expected).pvalue > 1e-3


def test_long_time_distribution_is_uniform():
    I = build_chain_interactions(LatticeSpec(3, nn_strength_V=10.0))
    r = kmc.kmc_ensemble(P0, I, [0] * 3, TimeGrid([60.0]), 8000, base_seed=5, record_configs=True)
    counts = np.bincount(r.meta["config_codes"][:, 0], minlength=8)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_decay_only_limit_empties_lattice():
    p = DephasingParams(1e-3, 0.0, 10.0, 1.0)
    I = build_chain_interactions(LatticeSpec(4, nn_strength_V=10.0))
    r = kmc.kmc_ensemble(p, I, [1] * 4, TimeGrid([30.0]), 200, base_seed=0)
    assert r["mean_density"][0] < 1e-3


def test_event_count_matches_integrated_rate():
    I = build_chain_interactions(LatticeSpec(6, nn_strength_V=10.0))
    r = kmc.kmc_ensemble(P0, I, [0] * 6, TimeGrid([0.0, 20.0]), 2000, base_seed=1)
    assert r.meta["mean_events"] == pytest.approx(r.meta["mean_integrated_rate"], rel=0.02)


def test_cutoff_rate_error_at_large_n():
    spec = LatticeSpec(100, exponent_p=6, nn_strength_V=10.0)
    config = np.random.default_rng(0).integers(0, 2, 100)
    full = kmc.full_rates(P0, spec, config, cutoff=50)
    short = kmc.full_rates(P0, spec, config, cutoff=10)
    assert np.abs(short / full - 1).max() < 1e-5
    auto = kmc.full_rates(P0, spec, config, cutoff=kmc.default_cutoff(P0, spec))
    assert np.abs(auto / full - 1).max() < 1e-5


def test_incremental_update_matches_full_recompute():
    spec = LatticeSpec(30, exponent_p=6, nn_strength_V=10.0)
    rng = np.random.default_rng(2)
    config = rng.integers(0, 2, 30)
    st = kmc.initial_state(P0, spec, config, cutoff=15)
    for site in rng.integers(0, 30, 200):
        kmc.rate_update_neighbourhood(st, site)
    ref = kmc.full_rates(P0, spec, st.config, cutoff=15)
    assert np.allclose(st.rates, ref, rtol=1e-12, atol=0)
    assert st.total_rate == pytest.approx(ref.sum(), rel=1e-9)
    assert st.events == 200


def test_isolated_flip_is_local():
    spec = LatticeSpec(60, nn_strength_V=10.0)
    st = kmc.initial_state(P0, spec, np.zeros(60, dtype=int))
    before = st.rates.copy()
    kmc.rate_update_neighbourhood(st, 30)
    far = np.r_[0:30 - st._model.cutoff, 31 + st._model.cutoff:60]
    assert np.array_equal(st.rates[far], before[far])


def test_single_run_reproducible():
    spec = LatticeSpec(20, nn_strength_V=10.0)
    a = kmc.gillespie_run(P0, spec, [0] * 20, 5.0, seed=4, sample_times=[1.0, 5.0])
    b = kmc.gillespie_run(P0, spec, [0] * 20, 5.0, seed=4, sample_times=[1.0, 5.0])
    assert np.array_equal(a["mean_density"], b["mean_density"])
    assert a.meta["n_events"] == b.meta["n_events"] > 0


def test_input_validation():
    spec = LatticeSpec(3, nn_strength_V=10.0)
    with pytest.raises(InvalidSpecError):
        kmc.gillespie_run(P0, spec, [0, 2, 0], 1.0, 0)
    with pytest.raises(InvalidSpecError):
        kmc.gillespie_run(P0, spec, [0, 0, 0], 1.0, 0, sample_times=[2.0])
    with pytest.raises(InvalidSpecError):
        kmc.kmc_ensemble(P0, spec, [0, 0, 0], TimeGrid([1.0]), 1)
    with pytest.raises(UnsupportedError):
        kmc.gillespie_run(EitParams(1.0, 1.0, 0.0, 100.0), spec, [0, 0, 0], 1.0, 0)
