"""Kinetic Monte Carlo (Gillespie direct method) for the second-order rate equation.

Each site carries its current flip rate ``Gamma_k = Omega^2 gamma / ((gamma/2)^2 + h_k^2)``
(plus ``Gamma_ryd`` when excited) in a binary indexed tree, so that event
selection and the update after a flip cost ``O(log N)`` per touched site.
Only the local fields within ``cutoff`` sites of a flipped atom change;
fields and the tree are rebuilt from scratch every ``RESYNC_EVENTS`` events.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import InvalidSpecError, NumericalError, UnsupportedError
from .evolution import TimeGrid, TrajectoryRecord
from .model import DephasingParams, InteractionMatrix, LatticeSpec

RESYNC_EVENTS = 1_000_000
CUTOFF_EPS = 1e-6
MAX_CONFIG_SITES = 20
DEFAULT_OBSERVABLES = ("mean_density", "fluctuations", "g2_1", "g2_2")


# neighbour tables ------------------------------------------------------------

def default_cutoff(params: DephasingParams, lattice: LatticeSpec, eps: float = CUTOFF_EPS) -> int:
    """Smallest distance whose coupling is below ``eps * gamma / 2``."""
    V = abs(lattice.nn_strength_V)
    max_d = lattice.n_sites // 2 if lattice.boundary == "periodic" else lattice.n_sites - 1
    if lattice.range_cutoff is not None:
        max_d = min(max_d, lattice.range_cutoff)
    if V == 0:
        return max(1, min(1, max_d))
    threshold = eps * params.dephasing_gamma / 2
    d = int(np.ceil((V / threshold) ** (1.0 / lattice.exponent_p)))
    while d > 1 and V / (d - 1) ** lattice.exponent_p <= threshold:
        d -= 1
    return max(1, min(d, max_d))


def _lattice_tables(lattice: LatticeSpec, cutoff: int):
    n = lattice.n_sites
    offsets = []
    for d in range(1, cutoff + 1):
        c = lattice.nn_strength_V / d ** lattice.exponent_p
        offsets += [(d, c), (-d, c)]
    nbr = np.full((n, len(offsets)), -1, dtype=np.int64)
    cpl = np.zeros((n, len(offsets)))
    for k in range(n):
        seen = set()
        for j, (off, c) in enumerate(offsets):
            m = k + off
            if lattice.boundary == "periodic":
                m %= n
            elif not 0 <= m < n:
                continue
            if m == k or m in seen:
                continue
            seen.add(m)
            nbr[k, j], cpl[k, j] = m, c
    return nbr, cpl


def _matrix_tables(inter: InteractionMatrix, cutoff: int | None):
    V = inter.values
    n = V.shape[0]
    rows = []
    for k in range(n):
        ms = []
        for m in range(n):
            if m == k or V[k, m] == 0:
                continue
            dist = inter.lattice.distance(k, m) if inter.lattice is not None else abs(k - m)
            if cutoff is None or dist <= cutoff:
                ms.append(m)
        rows.append(ms)
    width = max((len(r) for r in rows), default=0) or 1
    nbr = np.full((n, width), -1, dtype=np.int64)
    cpl = np.zeros((n, width))
    for k, ms in enumerate(rows):
        nbr[k, :len(ms)] = ms
        cpl[k, :len(ms)] = V[k, ms]
    return nbr, cpl


def neighbour_tables(params: DephasingParams, interactions, cutoff: int | None = None):
    """Padded neighbour indices (``-1`` = none) and couplings per site, plus the cutoff used.

    ``interactions`` is either an :class:`InteractionMatrix` or, for large
    chains, a :class:`LatticeSpec` (no dense matrix is formed).
    """
    if isinstance(interactions, LatticeSpec):
        lattice = interactions
        if cutoff is None:
            cutoff = default_cutoff(params, lattice)
        if lattice.range_cutoff is not None:
            cutoff = min(cutoff, lattice.range_cutoff)
        nbr, cpl = _lattice_tables(lattice, cutoff)
        return nbr, cpl, cutoff
    if isinstance(interactions, InteractionMatrix):
        if cutoff is None and interactions.lattice is not None:
            cutoff = default_cutoff(params, interactions.lattice)
        nbr, cpl = _matrix_tables(interactions, cutoff)
        return nbr, cpl, cutoff
    raise InvalidSpecError("interactions must be an InteractionMatrix or a LatticeSpec")


# numba kernels ---------------------------------------------------------------

@numba.njit(cache=True)
def _splitmix32(seed):
    z = (np.uint64(seed) + np.uint64(0x9E3779B97F4A7C15))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return np.int64(z >> np.uint64(33))


@numba.njit(cache=True)
def _tree_add(tree, i, delta):
    i += 1
    while i < tree.size:
        tree[i] += delta
        i += i & (-i)


@numba.njit(cache=True)
def _tree_build(tree, rates):
    tree[:] = 0.0
    for i in range(rates.size):
        tree[i + 1] += rates[i]
        j = (i + 1) + ((i + 1) & (-(i + 1)))
        if j < tree.size:
            tree[j] += tree[i + 1]


@numba.njit(cache=True)
def _tree_find(tree, u):
    """Smallest index whose prefix sum exceeds ``u``."""
    pos = 0
    step = 1
    while step * 2 < tree.size:
        step *= 2
    while step > 0:
        nxt = pos + step
        if nxt < tree.size and tree[nxt] <= u:
            pos = nxt
            u -= tree[nxt]
        step //= 2
    return min(pos, tree.size - 2)


@numba.njit(cache=True)
def _site_rate(h, occupied, omega2_gamma, half_gamma2, gamma_r):
    r = omega2_gamma / (half_gamma2 + h * h)
    if occupied:
        r += gamma_r
    return r


@numba.njit(cache=True)
def _all_fields(config, nbr, cpl, detuning, fields):
    n = config.size
    for k in range(n):
        h = detuning
        for j in range(nbr.shape[1]):
            m = nbr[k, j]
            if m >= 0 and config[m]:
                h += cpl[k, j]
        fields[k] = h


@numba.njit(cache=True)
def _resync(config, nbr, cpl, detuning, fields, rates, tree, omega2_gamma, half_gamma2, gamma_r):
    _all_fields(config, nbr, cpl, detuning, fields)
    for k in range(config.size):
        rates[k] = _site_rate(fields[k], config[k], omega2_gamma, half_gamma2, gamma_r)
    _tree_build(tree, rates)


@numba.njit(cache=True)
def _flip(config, site, nbr, cpl, fields, rates, tree, omega2_gamma, half_gamma2, gamma_r):
    """Flip ``site`` and refresh every rate inside its interaction neighbourhood.

    Returns ``False`` if a negative rate is produced.
    """
    sign = -1.0 if config[site] else 1.0
    config[site] = 1 - config[site]
    ok = True
    new = _site_rate(fields[site], config[site], omega2_gamma, half_gamma2, gamma_r)
    _tree_add(tree, site, new - rates[site])
    rates[site] = new
    for j in range(nbr.shape[1]):
        m = nbr[site, j]
        if m < 0:
            continue
        # symmetric couplings: site acts on m with the same strength
        fields[m] += sign * cpl[site, j]
        new = _site_rate(fields[m], config[m], omega2_gamma, half_gamma2, gamma_r)
        if new < 0:
            ok = False
        _tree_add(tree, m, new - rates[m])
        rates[m] = new
    return ok


@numba.njit(cache=True)
def _run(config0, nbr, cpl, detuning, omega2_gamma, half_gamma2, gamma_r, samples, seed,
         resync_every, record_configs, codes, config_out, sample_row):
    """One Gillespie run; fills ``config_out`` (samples x N) or ``codes`` (samples)."""
    np.random.seed(_splitmix32(seed))
    n = config0.size
    config = config0.copy()
    fields = np.empty(n)
    rates = np.empty(n)
    tree = np.zeros(n + 1)
    _resync(config, nbr, cpl, detuning, fields, rates, tree, omega2_gamma, half_gamma2, gamma_r)
    t = 0.0
    events = 0
    since = 0
    rate_time = 0.0
    first = -1.0
    status = 0
    for s in range(samples.size):
        target = samples[s]
        while True:
            total = tree_total(tree, n)
            if total <= 0.0:
                t = target
                break
            wait = -np.log(1.0 - np.random.random()) / total
            if t + wait > target:
                rate_time += (target - t) * total
                t = target
                break
            rate_time += wait * total
            t += wait
            if first < 0:
                first = t
            site = _tree_find(tree, np.random.random() * total)
            if not _flip(config, site, nbr, cpl, fields, rates, tree, omega2_gamma,
                         half_gamma2, gamma_r):
                status = 1
            events += 1
            since += 1
            if since >= resync_every:
                _resync(config, nbr, cpl, detuning, fields, rates, tree, omega2_gamma,
                        half_gamma2, gamma_r)
                since = 0
        if record_configs:
            code = 0
            for k in range(n):
                code = code * 2 + config[k]
            codes[s] = code
        config_out[sample_row + s, :] = config
    return events, rate_time, first, status


@numba.njit(cache=True)
def tree_total(tree, n):
    """Sum of all ``n`` leaves of the tree."""
    total = 0.0
    i = n
    while i > 0:
        total += tree[i]
        i -= i & (-i)
    return total


# python API ------------------------------------------------------------------

@dataclass
class KmcState:
    """Configuration with its local fields, per-site rates and rate tree."""

    config: np.ndarray
    fields: np.ndarray
    rates: np.ndarray
    tree: np.ndarray
    time: float = 0.0
    seed: int = 0
    events: int = 0

    @property
    def total_rate(self) -> float:
        return float(tree_total(self.tree, self.config.size))


class _Model:
    def __init__(self, params: DephasingParams, interactions, cutoff=None):
        if not isinstance(params, DephasingParams):
            raise UnsupportedError("kinetic Monte Carlo runs the dephasing-model rate equation")
        if params.dephasing_gamma <= 0:
            raise InvalidSpecError("kinetic Monte Carlo needs gamma > 0")
        self.params = params
        self.nbr, self.cpl, self.cutoff = neighbour_tables(params, interactions, cutoff)
        self.n_sites = self.nbr.shape[0]
        g = params.dephasing_gamma
        self.omega2_gamma = params.rabi_omega ** 2 * g
        self.half_gamma2 = (g / 2) ** 2
        self.gamma_r = params.decay_gamma_ryd
        self.boundary = (interactions.boundary if isinstance(interactions, LatticeSpec)
                         else getattr(interactions.lattice, "boundary", "open"))

    def config(self, config0):
        c = np.asarray(config0, dtype=np.int64).reshape(-1)
        if c.size != self.n_sites or np.any((c != 0) & (c != 1)):
            raise InvalidSpecError(f"config0 must be {self.n_sites} binary digits")
        return c


def initial_state(params: DephasingParams, interactions, config0, seed: int = 0,
                  cutoff: int | None = None) -> KmcState:
    """Build the rate tree for ``config0``."""
    m = _Model(params, interactions, cutoff)
    c = m.config(config0)
    n = c.size
    st = KmcState(c.copy(), np.empty(n), np.empty(n), np.zeros(n + 1), seed=seed)
    _resync(st.config, m.nbr, m.cpl, params.detuning, st.fields, st.rates, st.tree,
            m.omega2_gamma, m.half_gamma2, m.gamma_r)
    st._model = m
    return st


def rate_update_neighbourhood(state: KmcState, flipped_site: int,
                              cutoff_distance: int | None = None) -> KmcState:
    """Flip one site and refresh the rates inside its interaction neighbourhood.

    ``cutoff_distance`` rebuilds the neighbour table at that range (``None``
    keeps the one the state was created with).
    """
    m = state._model
    if cutoff_distance is not None and cutoff_distance != m.cutoff:
        raise InvalidSpecError("cutoff is fixed when the state is created")
    ok = _flip(state.config, int(flipped_site), m.nbr, m.cpl, state.fields, state.rates,
               state.tree, m.omega2_gamma, m.half_gamma2, m.gamma_r)
    if not ok:
        raise NumericalError("negative rate after a flip")
    state.events += 1
    return state


def full_rates(params: DephasingParams, interactions, config, cutoff: int | None = None) -> np.ndarray:
    """Per-site rates recomputed from scratch (reference for the incremental update)."""
    return initial_state(params, interactions, config, cutoff=cutoff).rates.copy()


def _observable_rows(names, configs, boundary):
    """Per-sample diagonal observables of classical configurations (samples x N)."""
    occ = configs.astype(float)
    n = occ.shape[1]
    dens = occ.mean(axis=1)
    out = {"__n": dens, "__n2": dens ** 2}
    for name in names:
        if name == "mean_density" or name == "fluctuations":
            continue
        if name.startswith("g2_"):
            d = int(name[3:])
            if boundary == "periodic":
                out[name] = (occ * np.roll(occ, -d, axis=1)).sum(axis=1) / n
            else:
                out[name] = ((occ[:, :-d] * occ[:, d:]).sum(axis=1) / (n - d)) if d < n \
                    else np.zeros(occ.shape[0])
        else:
            raise InvalidSpecError(f"observable {name!r} is not available for classical runs")
    return out


def _run_many(model, c0, grid, seeds, record_configs):
    samples = np.asarray(grid.sample_times, dtype=float) - grid.t_start
    n_s, n = samples.size, model.n_sites
    configs = np.empty((len(seeds) * n_s, n), dtype=np.int64)
    codes = np.zeros((len(seeds), n_s), dtype=np.int64)
    stats = np.zeros((len(seeds), 3))
    for r, seed in enumerate(seeds):
        ev, rt, first, status = _run(c0, model.nbr, model.cpl, model.params.detuning,
                                     model.omega2_gamma, model.half_gamma2, model.gamma_r,
                                     samples, int(seed), RESYNC_EVENTS, record_configs,
                                     codes[r], configs, r * n_s)
        if status:
            raise NumericalError("negative rate encountered in a kinetic Monte Carlo run")
        stats[r] = (ev, rt, first)
    return configs.reshape(len(seeds), n_s, n), codes, stats


def gillespie_run(params: DephasingParams, interactions, config0, t_max: float, seed: int,
                  sample_times=None, cutoff: int | None = None,
                  observables=DEFAULT_OBSERVABLES) -> TrajectoryRecord:
    """A single Gillespie trajectory sampled at ``sample_times`` (default ``[0, t_max]``)."""
    model = _Model(params, interactions, cutoff)
    c0 = model.config(config0)
    if sample_times is None:
        sample_times = [0.0, t_max]
    grid = TimeGrid(np.asarray(sample_times, dtype=float))
    if grid.t_end > t_max + 1e-12:
        raise InvalidSpecError("sample times beyond t_max")
    rec = model.n_sites <= MAX_CONFIG_SITES
    configs, codes, stats = _run_many(model, c0, grid, [seed], rec)
    rows = _observable_rows(observables, configs[0], model.boundary)
    values = {}
    for name in observables:
        if name == "mean_density":
            values[name] = rows["__n"]
        elif name == "fluctuations":
            values[name] = np.zeros(len(grid))   # a classical configuration has no spread
        else:
            values[name] = rows[name]
    meta = {"seed": seed, "n_events": int(stats[0, 0]), "integrated_rate": stats[0, 1],
            "first_event_time": stats[0, 2], "cutoff": model.cutoff,
            "final_config": configs[0, -1].copy()}
    if rec:
        meta["config_codes"] = codes[0]
    return TrajectoryRecord(grid.sample_times, values, meta=meta)


def kmc_ensemble(params: DephasingParams, interactions, config0, grid: TimeGrid, n_runs: int,
                 base_seed: int = 0, cutoff: int | None = None,
                 observables=DEFAULT_OBSERVABLES, record_configs: bool = False) -> TrajectoryRecord:
    """Ensemble mean and standard error over runs seeded ``base_seed + j``.

    With ``record_configs`` the sampled configuration indices (runs x samples)
    are returned in ``meta["config_codes"]`` (small lattices only).
    """
    if n_runs < 2:
        raise InvalidSpecError("at least two runs are needed for error bars")
    model = _Model(params, interactions, cutoff)
    c0 = model.config(config0)
    if record_configs and model.n_sites > MAX_CONFIG_SITES:
        raise UnsupportedError(f"configuration histograms need N <= {MAX_CONFIG_SITES}")
    seeds = [base_seed + j for j in range(n_runs)]
    configs, codes, stats = _run_many(model, c0, grid, seeds, record_configs)
    flat = configs.reshape(-1, model.n_sites)
    rows = {k: v.reshape(n_runs, -1) for k, v in _observable_rows(observables, flat, model.boundary).items()}
    values, errors = {}, {}
    root = np.sqrt(n_runs)
    for name in observables:
        if name == "fluctuations":
            a, b = rows["__n2"], rows["__n"]
            mb = b.mean(axis=0)
            values[name] = a.mean(axis=0) - mb ** 2
            errors[name] = (a - 2 * mb * b).std(axis=0, ddof=1) / root
        else:
            x = rows["__n"] if name == "mean_density" else rows[name]
            values[name] = x.mean(axis=0)
            errors[name] = x.std(axis=0, ddof=1) / root
    meta = {"n_runs": n_runs, "base_seed": base_seed, "cutoff": model.cutoff,
            "mean_events": float(stats[:, 0].mean()),
            "mean_integrated_rate": float(stats[:, 1].mean()),
            "first_event_times": stats[:, 2]}
    if record_configs:
        meta["config_codes"] = codes
    return TrajectoryRecord(grid.sample_times, values, errors, meta=meta)
