"""Quantum-jump Monte Carlo for the two-level gas with dephasing and decay.

The non-Hermitian Hamiltonian ``H_eff = H - (i/2) sum_j L_j^+ L_j`` has a
diagonal part ``E - (i/2)(gamma + Gamma_ryd) n_tot`` and the off-diagonal
drive ``Omega sum_k sigma^x_k``.  The diagonal part is integrated exactly in
an interaction picture and the drive by a classical RK4 stage sequence
(Lawson scheme).  Jump times follow the waiting-time method: a jump fires
when the squared norm of the unnormalised state crosses a uniform random
threshold, located by Illinois regula falsi inside the step.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from . import basis
from .errors import InvalidSpecError, InvalidStateError, StiffnessError
from .evolution import TimeGrid, TrajectoryRecord
from .model import DephasingParams, InteractionMatrix
from .observables import ObservableSpec, diagonal_values
from .operators import MAX_SITES_TWO_LEVEL, NUMBER, SIGMA_MINUS, site_operator, two_level_hamiltonian

DEFAULT_OBSERVABLES = ("mean_density", "fluctuations", "g2_1", "g2_2")

# per-step phase accuracy of the interaction-picture drive
_PHASE_PER_STEP = 1.5
_MAX_STEP = 0.05
# absolute accuracy of the squared norm at a located jump
JUMP_NORM_TOL = 1e-12


@dataclass
class JumpUnravelling:
    """Unravelling of the two-level master equation into pure-state trajectories."""

    params: DephasingParams
    interactions: InteractionMatrix
    boundary: str = "periodic"

    def __post_init__(self):
        n = self.interactions.n_sites
        basis.check_dimension(n, 2, MAX_SITES_TWO_LEVEL, "quantum-jump unravelling")
        self.n_sites = n
        self.dim = 2 ** n
        self.energies = basis.diagonal_energies(self.interactions, self.params.detuning, 2)
        self.occupations = basis.rydberg_occupations(n, 2)
        self.masks = np.array([basis.flip_mask(n, k) for k in range(n)], dtype=np.int64)
        kappa = self.params.dephasing_gamma + self.params.decay_gamma_ryd
        self.diag_generator = -1j * self.energies - 0.5 * kappa * self.occupations.sum(axis=1)
        if self.interactions.lattice is not None:
            self.boundary = self.interactions.lattice.boundary

    @property
    def jumps(self) -> list[sp.csr_matrix]:
        n = self.n_sites
        out = []
        if self.params.dephasing_gamma > 0:
            out += [np.sqrt(self.params.dephasing_gamma) * site_operator(NUMBER, k, n)
                    for k in range(n)]
        if self.params.decay_gamma_ryd > 0:
            out += [np.sqrt(self.params.decay_gamma_ryd) * site_operator(SIGMA_MINUS, k, n)
                    for k in range(n)]
        return out

    @property
    def h_eff(self) -> sp.csr_matrix:
        H = two_level_hamiltonian(self.params, self.interactions).astype(complex)
        K = sum((L.conj().T @ L for L in self.jumps), sp.csr_matrix(H.shape, dtype=complex))
        return sp.csr_matrix(H - 0.5j * K)

    def default_step(self) -> float:
        """Largest step resolving the fastest interaction-picture phase."""
        fields = np.abs(basis.local_fields(self.interactions, self.params.detuning))
        kappa = self.params.dephasing_gamma + self.params.decay_gamma_ryd
        fastest = max(float(fields.max(initial=0.0)), 0.5 * kappa, self.params.rabi_omega)
        return min(_MAX_STEP, _PHASE_PER_STEP / fastest) if fastest > 0 else _MAX_STEP


# numba kernels ---------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _drive(psi, omega, masks, out):
    d = psi.size
    out[:] = 0
    for m in masks:
        # flipping bit m swaps adjacent blocks of length m
        for start in range(0, d, 2 * m):
            for c in range(start, start + m):
                out[c] += psi[c + m]
                out[c + m] += psi[c]
    for c in range(d):
        out[c] *= -1j * omega


@numba.njit(cache=True, nogil=True)
def _lawson_step(psi, h, A, omega, masks, out, work, cache):
    """One Lawson RK4 step; ``cache`` holds (h, exp(A h/2), exp(A h)) for reuse."""
    if cache[0, 0].real != h:
        for c in range(psi.size):
            e = np.exp(0.5 * h * A[c])
            cache[1, c] = e
            cache[2, c] = e * e
        cache[0, 0] = h
    e_half = cache[1]
    e_full = cache[2]
    k1, k2, k3, k4, tmp = work[0], work[1], work[2], work[3], work[4]
    _drive(psi, omega, masks, k1)
    for c in range(psi.size):
        tmp[c] = e_half[c] * (psi[c] + 0.5 * h * k1[c])
    _drive(tmp, omega, masks, k2)
    for c in range(psi.size):
        tmp[c] = e_half[c] * psi[c] + 0.5 * h * k2[c]
    _drive(tmp, omega, masks, k3)
    for c in range(psi.size):
        tmp[c] = e_full[c] * psi[c] + h * e_half[c] * k3[c]
    _drive(tmp, omega, masks, k4)
    for c in range(psi.size):
        out[c] = (e_full[c] * (psi[c] + h / 6 * k1[c]) + h / 3 * e_half[c] * (k2[c] + k3[c])
                  + h / 6 * k4[c])


@numba.njit(cache=True, nogil=True)
def _norm2(psi):
    s = 0.0
    for c in range(psi.size):
        s += psi[c].real ** 2 + psi[c].imag ** 2
    return s


@numba.njit(cache=True, nogil=True)
def _frame_norm2(s, h, gram, kappa):
    """Squared norm at ``s*h`` from a cubic Hermite interpolant in the interaction frame.

    ``gram[n]`` holds the real Gram matrix of the four Hermite data vectors
    restricted to configurations with ``n`` excitations.
    """
    w = np.empty(4)
    w[0] = 2 * s ** 3 - 3 * s ** 2 + 1
    w[1] = (s ** 3 - 2 * s ** 2 + s) * h
    w[2] = -2 * s ** 3 + 3 * s ** 2
    w[3] = (s ** 3 - s ** 2) * h
    q = np.exp(-kappa * s * h)
    tot = 0.0
    for n in range(gram.shape[0] - 1, -1, -1):
        lev = 0.0
        for i in range(4):
            for j in range(4):
                lev += w[i] * w[j] * gram[n, i, j]
        tot = tot * q + lev
    return tot


@numba.njit(cache=True, nogil=True)
def _locate_jump(psi, h, target, n0, ntot, kappa, A, e_full, omega, masks, out, work):
    """Time in (0, h) where the squared norm of the propagated ``psi`` crosses ``target``.

    On entry ``out`` holds the state after the full step, ``e_full`` the
    diagonal propagator of that step and ``work[0]`` the drive applied to ``psi``.  The interaction-frame amplitudes vary slowly compared with
    the decay, so a cubic Hermite interpolant of them serves as dense output; on
    return ``out`` holds the interpolated state at the crossing.
    """
    d = psi.size
    _drive(out, omega, masks, work[1])
    gram = np.zeros((ntot.max() + 1, 4, 4))
    x = np.empty(4, np.complex128)
    for c in range(d):
        inv = 1.0 / e_full[c]
        work[2, c] = out[c] * inv
        work[3, c] = work[1, c] * inv
        x[0] = psi[c]
        x[1] = work[0, c]
        x[2] = work[2, c]
        x[3] = work[3, c]
        g = gram[ntot[c]]
        for i in range(4):
            for j in range(i, 4):
                g[i, j] += x[i].real * x[j].real + x[i].imag * x[j].imag
    for n in range(gram.shape[0]):
        for i in range(4):
            for j in range(i):
                gram[n, i, j] = gram[n, j, i]
    a, fa = 0.0, n0 - target
    b, fb = 1.0, _frame_norm2(1.0, h, gram, kappa) - target
    s = a - fa * (b - a) / (fb - fa)
    side = 0
    for _ in range(100):
        f = _frame_norm2(s, h, gram, kappa) - target
        if abs(f) <= JUMP_NORM_TOL or b - a <= 1e-14:
            break
        if f > 0:
            a, fa = s, f
            if side == 1:
                fb *= 0.5
            side = 1
        else:
            b, fb = s, f
            if side == -1:
                fa *= 0.5
            side = -1
        s = (a * fb - b * fa) / (fb - fa)
    w0 = 2 * s ** 3 - 3 * s ** 2 + 1
    w1 = (s ** 3 - 2 * s ** 2 + s) * h
    w2 = -2 * s ** 3 + 3 * s ** 2
    w3 = (s ** 3 - s ** 2) * h
    for c in range(d):
        out[c] = np.exp(A[c] * s * h) * (w0 * psi[c] + w1 * work[0, c] + w2 * work[2, c]
                                         + w3 * work[3, c])
    return s * h


@numba.njit(cache=True, nogil=True)
def _trajectory(psi0, A, omega, masks, occ, gamma, gamma_r, t0, samples, h_max, seed,
                diag_obs, keep, states):
    """Run one trajectory; returns (diag values, sigma_x, n_jumps, status)."""
    np.random.seed(seed)
    n_s = samples.size
    n_sites = masks.size
    d = psi0.size
    values = np.zeros((n_s, diag_obs.shape[0]))
    sx = np.zeros(n_s)
    psi = psi0.copy()
    new = np.empty(d, np.complex128)
    work = np.empty((5, d), np.complex128)
    cache = np.zeros((3, d), np.complex128)
    cache[0, 0] = -1.0
    jcache = np.zeros((3, d), np.complex128)
    jcache[0, 0] = -1.0
    ntot = np.zeros(d, np.int64)
    for c in range(d):
        for k in range(n_sites):
            ntot[c] += occ[c, k]
    prob = np.empty(d)
    t = t0
    threshold = np.random.random()
    jumps = 0
    kept = 0
    for s in range(n_s):
        target_t = samples[s]
        while target_t - t > 1e-13 * max(1.0, abs(target_t)):
            h = min(h_max, target_t - t)
            n0 = _norm2(psi)
            used = cache if h == h_max else jcache
            _lawson_step(psi, h, A, omega, masks, new, work, used)
            n1 = _norm2(new)
            refine = 0
            while not (n1 > 0.0 and n1 <= n0 * (1.0 + 1e-8)) and refine < 30:
                h *= 0.5
                refine += 1
                used = jcache
                _lawson_step(psi, h, A, omega, masks, new, work, used)
                n1 = _norm2(new)
            if refine == 30:
                return values, sx, jumps, t
            if n1 > threshold:
                psi[:] = new
                t += h
                continue
            tau = _locate_jump(psi, h, threshold, n0, ntot, gamma + gamma_r, A, used[2], omega,
                               masks, new, work)
            t += tau
            # channel weights ||L_j psi||^2
            total = 0.0
            weights = np.zeros(2 * n_sites)
            for k in range(n_sites):
                pk = 0.0
                for c in range(d):
                    if occ[c, k]:
                        pk += new[c].real ** 2 + new[c].imag ** 2
                weights[k] = gamma * pk
                weights[n_sites + k] = gamma_r * pk
                total += (gamma + gamma_r) * pk
            u = np.random.random() * total
            j = 0
            acc = weights[0]
            while acc < u and j < 2 * n_sites - 1:
                j += 1
                acc += weights[j]
            k = j % n_sites
            psi[:] = 0
            if j < n_sites:
                for c in range(d):
                    if occ[c, k]:
                        psi[c] = new[c]
            else:
                for c in range(d):
                    if occ[c, k]:
                        psi[c ^ masks[k]] = new[c]
            psi /= np.sqrt(_norm2(psi))
            jumps += 1
            threshold = np.random.random()
        nrm = np.sqrt(_norm2(psi))
        for c in range(d):
            prob[c] = (psi[c].real ** 2 + psi[c].imag ** 2) / (nrm * nrm)
        for o in range(diag_obs.shape[0]):
            values[s, o] = np.dot(diag_obs[o], prob)
        acc_x = 0.0
        for c in range(d):
            for m in masks:
                v = np.conj(psi[c]) * psi[c ^ m]
                acc_x += v.real
        sx[s] = acc_x / (nrm * nrm) / n_sites
        if keep[s]:
            states[kept] = psi / nrm
            kept += 1
    return values, sx, jumps, -1.0


# driver ----------------------------------------------------------------------

def _seed32(seed: int) -> int:
    return int(np.random.SeedSequence(int(seed)).generate_state(1)[0])


def _prepare(unravelling, psi0, grid):
    psi0 = np.asarray(psi0, dtype=complex).reshape(-1)
    if psi0.size != unravelling.dim:
        raise InvalidStateError(f"state has dimension {psi0.size}, expected {unravelling.dim}")
    if abs(np.linalg.norm(psi0) - 1) > 1e-10:
        raise InvalidStateError("initial state must be normalised")
    return psi0


def _diag_table(unravelling, names):
    """Diagonal observables per configuration; fluctuations need n and n^2."""
    n = unravelling.n_sites
    dens = unravelling.occupations.mean(axis=1)
    rows = {"__n": dens, "__n2": dens ** 2}
    for name in names:
        spec = ObservableSpec.parse(name) if isinstance(name, str) else name
        if spec.kind in ("density_fluctuations", "sigma_x_mean"):
            continue
        rows[spec.name] = diagonal_values(spec, n, 2, unravelling.boundary)
    keys = list(rows)
    return keys, np.array([rows[k] for k in keys])


def _run(unravelling, psi0, grid, seed, table, step, keep):
    keep_mask = np.zeros(len(grid), dtype=np.bool_)
    keep_mask[list(keep)] = True
    states = np.zeros((len(keep), unravelling.dim), dtype=complex)
    p = unravelling.params
    values, sx, jumps, fail = _trajectory(
        psi0, unravelling.diag_generator.astype(complex), float(p.rabi_omega),
        unravelling.masks, unravelling.occupations.astype(np.bool_),
        float(p.dephasing_gamma), float(p.decay_gamma_ryd), float(grid.t_start),
        np.asarray(grid.sample_times, dtype=float), float(step), _seed32(seed),
        table, keep_mask, states)
    if fail >= 0:
        raise StiffnessError("norm underflow could not be resolved by step refinement",
                             smallest_step=step * 2.0 ** -30, time=float(fail))
    return values, sx, jumps, states


def _names(observables):
    names = []
    for o in observables:
        spec = ObservableSpec.parse(o) if isinstance(o, str) else o
        names.append(spec)
    return names


def sample_trajectory(unravelling: JumpUnravelling, psi0, grid: TimeGrid, seed: int,
                      observables=DEFAULT_OBSERVABLES, step: float | None = None) -> TrajectoryRecord:
    """One quantum trajectory with per-sample expectation values in the normalised state."""
    psi0 = _prepare(unravelling, psi0, grid)
    specs = _names(observables)
    keys, table = _diag_table(unravelling, specs)
    step = step or unravelling.default_step()
    values, sx, jumps, _ = _run(unravelling, psi0, grid, seed, table, step, ())
    col = dict(zip(keys, values.T))
    out = {}
    for spec in specs:
        if spec.kind == "density_fluctuations":
            out[spec.name] = col["__n2"] - col["__n"] ** 2
        elif spec.kind == "sigma_x_mean":
            out[spec.name] = sx
        else:
            out[spec.name] = col[spec.name]
    return TrajectoryRecord(grid.sample_times, out, meta={"seed": seed, "n_jumps": int(jumps)})


def average_trajectories(unravelling: JumpUnravelling, psi0, grid: TimeGrid, n_traj: int,
                         base_seed: int = 0, observables=DEFAULT_OBSERVABLES,
                         step: float | None = None, density_at=(), workers: int = 1) -> TrajectoryRecord:
    """Ensemble mean and standard error over ``n_traj`` trajectories seeded ``base_seed + j``.

    ``fluctuations`` is the variance of the intensive density in the averaged
    state, ``E[n^2] - E[n]^2``; its error uses the delta method.  Sample
    indices listed in ``density_at`` also get the averaged density matrix in
    ``meta["density_matrices"]``, keyed by sample time.
    """
    if n_traj < 2:
        raise InvalidSpecError("at least two trajectories are needed for error bars")
    psi0 = _prepare(unravelling, psi0, grid)
    specs = _names(observables)
    keys, table = _diag_table(unravelling, specs)
    step = step or unravelling.default_step()
    keep = tuple(int(i) for i in density_at)

    def one(j):
        return _run(unravelling, psi0, grid, base_seed + j, table, step, keep)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(n_traj)))
    else:
        results = [one(j) for j in range(n_traj)]

    # aggregate in index order so the result does not depend on scheduling
    diag = np.stack([r[0] for r in results])          # (n_traj, n_samples, n_keys)
    sx = np.stack([r[1] for r in results])
    n_jumps = np.array([r[2] for r in results])
    mean = diag.mean(axis=0)
    se = diag.std(axis=0, ddof=1) / np.sqrt(n_traj)
    col = dict(zip(keys, range(len(keys))))
    values, errors = {}, {}
    for spec in specs:
        name = spec.name
        if spec.kind == "density_fluctuations":
            a, b = diag[:, :, col["__n2"]], diag[:, :, col["__n"]]
            mb = b.mean(axis=0)
            values[name] = a.mean(axis=0) - mb ** 2
            # delta method for f(E[a], E[b]) = E[a] - E[b]^2
            g = a - 2 * mb[None, :] * b
            errors[name] = g.std(axis=0, ddof=1) / np.sqrt(n_traj)
        elif spec.kind == "sigma_x_mean":
            values[name] = sx.mean(axis=0)
            errors[name] = sx.std(axis=0, ddof=1) / np.sqrt(n_traj)
        else:
            values[name] = mean[:, col[name]]
            errors[name] = se[:, col[name]]
    meta = {"n_traj": n_traj, "base_seed": base_seed, "step": step,
            "mean_jumps": float(n_jumps.mean())}
    if keep:
        rhos = {}
        for pos, idx in enumerate(keep):
            acc = np.zeros((unravelling.dim, unravelling.dim), dtype=complex)
            for r in results:
                v = r[3][pos]
                acc += np.outer(v, v.conj())
            rhos[float(grid.sample_times[idx])] = acc / n_traj
        meta["density_matrices"] = rhos
    return TrajectoryRecord(grid.sample_times, values, errors, meta=meta)


def product_state(config, n_sites: int | None = None) -> np.ndarray:
    """State vector of a classical configuration (sequence of 0/1 digits)."""
    config = tuple(int(c) for c in config)
    n = n_sites or len(config)
    psi = np.zeros(2 ** n, dtype=complex)
    psi[basis.encode(config, 2)] = 1.0
    return psi
