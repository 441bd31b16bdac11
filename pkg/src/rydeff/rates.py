"""Classical rate equations for the strongly dephased two-level gas.

Second order: every spin flips with the kinetically constrained rate

    Gamma_k = Omega^2 gamma / ((gamma/2)^2 + h_k^2),  h_k = Delta + sum_q V_kq n_q.

Fourth order adds corrections to the single-flip rates and correlated
double flips built from the complex coefficients ``Gamma_1^k``,
``Gamma_2^{km}``, ``Gamma_3^{km}``.  Coefficients are diagonal in the
configuration basis and are evaluated on occupation tables of shape
``(n_configs, N)``; a single configuration is a table with one row.
Conjugating a coefficient by ``sigma^x_k`` is the substitution
``n_k -> 1 - n_k`` (:func:`flip_occupations`).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import basis
from .errors import InvalidSpecError, UnsupportedError
from .evolution import TimeGrid, TrajectoryRecord, solve_ode
from .model import DephasingParams, InteractionMatrix, LatticeSpec, build_chain_interactions
from . import observables as obs

NEGATIVE_GUARD = 1e-12
MAX_SITES_ORDER4 = 14
MAX_SITES_GENERATOR = 20


def _require_dephasing(params: DephasingParams):
    if params.dephasing_gamma <= 0:
        raise InvalidSpecError("effective rate equations need dephasing_gamma > 0")


def _occ(config, n_sites=None):
    occ = np.atleast_2d(np.asarray(config, dtype=float))
    if n_sites is not None and occ.shape[1] != n_sites:
        raise InvalidSpecError("configuration length does not match interactions")
    if np.any((occ != 0) & (occ != 1)):
        raise InvalidSpecError("two-level configurations are words over {0, 1}")
    return occ


def flip_occupations(occ, k):
    """Occupation table with site ``k`` flipped (sigma^x_k conjugation)."""
    out = np.array(occ, dtype=float, copy=True)
    out[:, k] = 1.0 - out[:, k]
    return out


def fields(occ, V, detuning):
    """``h_k(1) = Delta + sum_{q != k} V_kq n_q`` for every row and site."""
    return detuning + occ @ V


# complex coefficients -------------------------------------------------------

def gamma1(occ, k, V, detuning, gamma):
    return 1.0 / (gamma / 2 + 1j * fields(occ, V, detuning)[:, k])


def _pair_fields(occ, k, m, V, detuning):
    h = fields(occ, V, detuning)
    hk_bar = h[:, k] - V[k, m] * occ[:, m]   # Delta + sum_{q != k,m} V_kq n_q
    hm_bar = h[:, m] - V[m, k] * occ[:, k]
    return hk_bar + hm_bar + V[k, m], hm_bar - hk_bar


def gamma2(occ, k, m, V, detuning, gamma):
    h11, _ = _pair_fields(occ, k, m, V, detuning)
    return 1.0 / (gamma + 1j * h11)


def gamma3(occ, k, m, V, detuning, gamma):
    _, diff = _pair_fields(occ, k, m, V, detuning)
    return 1.0 / (gamma + 1j * diff)


def pair_coefficients(occ, k, m, V, detuning, gamma):
    """The four ``(R_i^{km}, R'_i^{km})`` pairs evaluated on each row of ``occ``."""
    g1k = gamma1(occ, k, V, detuning, gamma)
    g1m = gamma1(occ, m, V, detuning, gamma)
    g2 = gamma2(occ, k, m, V, detuning, gamma)
    g3 = gamma3(occ, k, m, V, detuning, gamma)
    mix = np.conj(g1k) * (np.conj(g2) + g3)
    h = fields(occ, V, detuning)
    hk2, hm2 = h[:, k] ** 2, h[:, m] ** 2
    g2_ = gamma * gamma
    R = (np.ones(occ.shape[0]), g1k.real, -g1k.imag,
         -32 * (g2_ - 4 * hm2) / (g2_ + 4 * hm2) ** 2)
    Rp = (2 * np.real((np.conj(g1m) * np.conj(g2) + g1m * g3) * np.conj(g1k)),
          2 * mix.real, -2 * mix.imag,
          gamma / (g2_ + 4 * hk2))
    return R, Rp


# scalar rates ---------------------------------------------------------------

def rate2(config, k, params: DephasingParams, interactions: InteractionMatrix):
    """Second-order flip rate of site ``k`` (independent of ``n_k``)."""
    _require_dephasing(params)
    V = interactions.values
    occ = _occ(config, V.shape[0])
    _check_site(k, V.shape[0])
    h = fields(occ, V, params.detuning)[:, k]
    g = params.dephasing_gamma
    out = params.rabi_omega ** 2 * g / ((g / 2) ** 2 + h ** 2)
    return float(out[0]) if out.size == 1 else out


def rate4_beta(config, k, params: DephasingParams, interactions: InteractionMatrix):
    """Fourth-order correction to the single-flip rate, including ``Omega^4``."""
    _require_dephasing(params)
    V = interactions.values
    occ = _occ(config, V.shape[0])
    _check_site(k, V.shape[0])
    h2 = fields(occ, V, params.detuning)[:, k] ** 2
    g = params.dephasing_gamma
    out = 64 * params.rabi_omega ** 4 * g * (g * g - 4 * h2) / (g * g + 4 * h2) ** 3
    return float(out[0]) if out.size == 1 else out


def _check_site(k, n):
    if not 0 <= k < n:
        raise InvalidSpecError(f"site {k} out of range")


def rate4_single(config, k, params: DephasingParams, interactions: InteractionMatrix):
    """Full fourth-order rate for flipping site ``k`` alone."""
    _require_dephasing(params)
    V = interactions.values
    n = V.shape[0]
    occ = _occ(config, n)
    _check_site(k, n)
    g, d = params.dephasing_gamma, params.detuning
    occ_k = flip_occupations(occ, k)
    corr = np.zeros(occ.shape[0])
    for m in range(n):
        if m == k:
            continue
        R_km, Rp_km = pair_coefficients(occ, k, m, V, d, g)
        R_km_f, Rp_km_f = pair_coefficients(occ_k, k, m, V, d, g)
        R_mk, Rp_mk = pair_coefficients(occ, m, k, V, d, g)
        R_mk_f, _ = pair_coefficients(occ_k, m, k, V, d, g)
        for i in (0, 3):
            corr += R_km_f[i] * Rp_km_f[i] + R_mk[i] * Rp_mk[i]
        for i in (1, 2):
            corr += R_mk_f[i] * Rp_mk[i] + R_km[i] * Rp_km[i]
    out = (rate2(occ, k, params, interactions) + rate4_beta(occ, k, params, interactions)
           - params.rabi_omega ** 4 * corr)
    return float(out[0]) if np.size(out) == 1 else out


def rate4_double(config, k, m, params: DephasingParams, interactions: InteractionMatrix):
    """Fourth-order rate for flipping sites ``k`` and ``m`` together (symmetric in k, m)."""
    _require_dephasing(params)
    if k == m:
        raise InvalidSpecError("double flips need two distinct sites")
    V = interactions.values
    n = V.shape[0]
    occ = _occ(config, n)
    _check_site(k, n)
    _check_site(m, n)
    g, d = params.dephasing_gamma, params.detuning
    total = np.zeros(occ.shape[0])
    for a, b in ((k, m), (m, k)):
        R, Rp = pair_coefficients(occ, a, b, V, d, g)
        R_fa, Rp_fa = pair_coefficients(flip_occupations(occ, a), a, b, V, d, g)
        R_fb, _ = pair_coefficients(flip_occupations(occ, b), a, b, V, d, g)
        for i in (0, 3):
            total += R_fa[i] * Rp_fa[i]
        for i in (1, 2):
            total += R_fb[i] * Rp[i]
    out = params.rabi_omega ** 4 * total
    return float(out[0]) if out.size == 1 else out


# generator assembly ---------------------------------------------------------

@dataclass
class ClassicalGenerator:
    """Sparse rate matrix ``M`` with ``dv/dt = M v`` and zero column sums."""

    matrix: sp.csr_matrix
    order: int
    with_decay: bool
    n_sites: int

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def off_diagonal(self):
        off = self.matrix - sp.diags(self.matrix.diagonal())
        return sp.csr_matrix(off)

    @property
    def has_negative_rates(self) -> bool:
        off = self.off_diagonal
        return bool(off.nnz and off.data.min() < -NEGATIVE_GUARD)

    def column_sum_error(self) -> float:
        return float(np.abs(np.asarray(self.matrix.sum(axis=0))).max())

    def toarray(self):
        return self.matrix.toarray()


def single_flip_table(params, interactions, order=2):
    """Arrays ``(single[c, k], double[c, k, m])`` of rates out of every configuration.

    ``double`` is ``None`` at second order.  Fourth-order entries come from
    expanding ``R Z_m[R' Z_k mu]`` on diagonal ``mu``; the diagonal terms are
    dropped and restored by the column-sum rule.
    """
    _require_dephasing(params)
    V = interactions.values
    n = V.shape[0]
    occ = basis.rydberg_occupations(n, 2)
    c = np.arange(2 ** n)
    g, d, om = params.dephasing_gamma, params.detuning, params.rabi_omega
    h = fields(occ, V, d)
    single = om ** 2 * g / ((g / 2) ** 2 + h ** 2)
    if order == 2:
        return single, None
    if n > MAX_SITES_ORDER4:
        raise UnsupportedError(f"fourth-order generators are limited to N <= {MAX_SITES_ORDER4}")
    single = single + 64 * om ** 4 * g * (g * g - 4 * h * h) / (g * g + 4 * h * h) ** 3
    double = np.zeros((2 ** n, n, n))
    om4 = om ** 4
    for k in range(n):
        fk = c ^ basis.flip_mask(n, k)
        for m in range(n):
            if m == k:
                continue
            fm = c ^ basis.flip_mask(n, m)
            R, Rp = pair_coefficients(occ, k, m, V, d, g)
            RR = sum(r * rp for r, rp in zip(R, Rp))
            # source s -> target f_k f_m s with weight R(f_k f_m s) R'(f_k s)
            fkm = fk[fm]
            double[:, k, m] += om4 * sum(r[fkm] * rp[fk] for r, rp in zip(R, Rp))
            # source s -> f_m s with weight -R(f_m s) R'(s)
            single[:, m] -= om4 * sum(r[fm] * rp for r, rp in zip(R, Rp))
            # source s -> f_k s with weight -R(f_k s) R'(f_k s)
            single[:, k] -= om4 * RR[fk]
    double = double + double.transpose(0, 2, 1)
    return single, double


def build_generator(params: DephasingParams, interactions: InteractionMatrix, order: int = 2,
                    with_decay: bool = False) -> ClassicalGenerator:
    """Rate matrix of the effective classical dynamics at order 2 or 4."""
    if order not in (2, 4):
        raise InvalidSpecError("order must be 2 or 4")
    if order == 4 and with_decay:
        raise UnsupportedError("radiative decay is only available with the second-order rates")
    n = interactions.n_sites
    if n > MAX_SITES_GENERATOR:
        raise UnsupportedError(f"generator assembly is limited to N <= {MAX_SITES_GENERATOR}")
    dim = 2 ** n
    c = np.arange(dim)
    occ = basis.rydberg_occupations(n, 2)
    single, double = single_flip_table(params, interactions, order)
    if with_decay and params.decay_gamma_ryd > 0:
        single = single + params.decay_gamma_ryd * occ
    rows, cols, vals = [], [], []
    for k in range(n):
        rows.append(c ^ basis.flip_mask(n, k))
        cols.append(c)
        vals.append(single[:, k])
    if double is not None:
        for k in range(n):
            for m in range(k + 1, n):
                rows.append(c ^ basis.flip_mask(n, k) ^ basis.flip_mask(n, m))
                cols.append(c)
                vals.append(double[:, k, m])
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    off = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
    diag = -np.asarray(off.sum(axis=0)).ravel()
    M = sp.csr_matrix(off + sp.diags(diag))
    return ClassicalGenerator(M, order, bool(with_decay), n)


def integrate_rate_equation(generator: ClassicalGenerator, v0, grid: TimeGrid,
                            observables=("mean_density",), method: str = "auto",
                            store_states: bool = False, rel_tol=1e-10, abs_tol=1e-13,
                            boundary: str = "periodic") -> TrajectoryRecord:
    """Propagate a probability vector; negative entries are kept, not clipped."""
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (generator.dim,):
        raise InvalidSpecError("initial vector has the wrong length")
    if np.any(v0 < 0) or abs(v0.sum() - 1) > 1e-10:
        raise InvalidSpecError("initial vector must be a probability vector")
    if method == "auto":
        method = "expm" if generator.n_sites <= 10 else "rk"
    times = grid.sample_times
    if method == "expm":
        states = []
        v, t = v0, grid.t_start
        for ts in times:
            if ts > t:
                v = spla.expm_multiply(generator.matrix * (ts - t), v)
                t = ts
            states.append(np.array(v))
    elif method == "rk":
        M = generator.matrix
        states, _ = solve_ode(lambda y: M @ y, v0, grid.t_start, times, rel_tol, abs_tol,
                              first_step=1e-3 / max(1.0, np.abs(M.diagonal()).max()))
    else:
        raise InvalidSpecError(f"unknown method {method!r}")
    specs = [obs.ObservableSpec.parse(o) if isinstance(o, str) else o for o in observables]
    values = {s.name: np.array([obs.evaluate(s, v, levels=2, boundary=boundary) for v in states])
              for s in specs}
    meta = {"min_entry": float(min(v.min() for v in states)),
            "max_norm_drift": float(max(abs(v.sum() - 1) for v in states)),
            "has_negative_rates": generator.has_negative_rates,
            "method": method}
    return TrajectoryRecord(times, values, states=states if store_states else None, meta=meta)


def all_down(n_sites: int) -> np.ndarray:
    v = np.zeros(2 ** n_sites)
    v[0] = 1.0
    return v


# positivity scan ------------------------------------------------------------

@dataclass
class PositivityMap:
    V_values: np.ndarray
    delta_values: np.ndarray
    positive: np.ndarray          # shape (len(V_values), len(delta_values))
    n_sites: int
    gamma: float

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["V", "Delta", "all_rates_nonnegative"])
            for i, v in enumerate(self.V_values):
                for j, dl in enumerate(self.delta_values):
                    w.writerow(["%.17g" % v, "%.17g" % dl, int(self.positive[i, j])])

    @classmethod
    def from_csv(cls, path, n_sites=0, gamma=float("nan")):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        Vs = np.unique(data[:, 0])
        Ds = np.unique(data[:, 1])
        pos = np.zeros((Vs.size, Ds.size), dtype=bool)
        pos[np.searchsorted(Vs, data[:, 0]), np.searchsorted(Ds, data[:, 1])] = data[:, 2] > 0
        return cls(Vs, Ds, pos, n_sites, gamma)

    @property
    def negative_fraction(self) -> float:
        return float(1.0 - self.positive.mean())


def min_rate(params: DephasingParams, interactions: InteractionMatrix) -> float:
    """Smallest single- or double-flip rate at fourth order over all configurations."""
    single, double = single_flip_table(params, interactions, order=4)
    n = interactions.n_sites
    iu = np.triu_indices(n, 1)
    lo = single.min()
    if n > 1:
        lo = min(lo, double[:, iu[0], iu[1]].min())
    return float(lo)


def _with_V(spec: LatticeSpec, V: float) -> LatticeSpec:
    return LatticeSpec(spec.n_sites, spec.exponent_p, float(V), spec.boundary, spec.range_cutoff)


def positivity_at(params: DephasingParams, spec_template: LatticeSpec, V: float,
                  delta: float) -> bool:
    p = DephasingParams(params.rabi_omega, float(delta), params.dephasing_gamma, 0.0)
    inter = build_chain_interactions(_with_V(spec_template, V))
    return min_rate(p, inter) >= -NEGATIVE_GUARD


def scan_positivity(params: DephasingParams, spec_template: LatticeSpec, V_range, delta_range,
                    resolution) -> PositivityMap:
    """Flag every (V, Delta) grid cell whose fourth-order rates are all non-negative."""
    if np.isscalar(resolution):
        resolution = (int(resolution), int(resolution))
    nV, nD = resolution
    if nV < 2 or nD < 2:
        raise InvalidSpecError("resolution must be >= 2 along each axis")
    Vs = np.linspace(V_range[0], V_range[1], nV)
    Ds = np.linspace(delta_range[0], delta_range[1], nD)
    pos = np.zeros((nV, nD), dtype=bool)
    for i, v in enumerate(Vs):
        for j, dl in enumerate(Ds):
            pos[i, j] = positivity_at(params, spec_template, v, dl)
    return PositivityMap(Vs, Ds, pos, spec_template.n_sites, params.dephasing_gamma)


def negative_extent_along_ray(params, spec_template, s_values, sign=+1) -> float:
    """Largest ``s`` on the ray ``(V, Delta) = (s, sign * s)`` with a negative rate (nan if none)."""
    neg = [s for s in s_values if s > 0 and not positivity_at(params, spec_template, s, sign * s)]
    return float(max(neg)) if neg else float("nan")
