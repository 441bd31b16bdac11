"""Time integration, stationary states and distances between states.

The integrator is an explicit Dormand-Prince 4(5) pair with a PI step-size
controller and the standard quartic dense output, written out here rather
than delegated to ``scipy.integrate.solve_ivp`` so that the step history can
be inspected (smallest step on failure, fixed-step mode for order checks)
and trace drift can be monitored on density matrices.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (DegenerateSteadyStateError, DimensionError, InvalidSpecError,
                     InvalidStateError, NumericalError, StiffnessError)

log = logging.getLogger(__name__)

CSV_FORMAT = "%.17g"

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                   187 / 2100, 1 / 40])
_E = _B - _B_LOW
# continuous extension: y(t + s h) = y + h * sum_i K_i * sum_j P[i, j] s**(j+1)
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

# PI controller (Hairer & Wanner's DOPRI5 defaults)
_BETA = 0.04
_ALPHA = 0.2 - 0.75 * _BETA
_SAFETY = 0.9
_MIN_FACTOR, _MAX_FACTOR = 0.2, 10.0


@dataclass(frozen=True)
class TimeGrid:
    """Sample times of a run; ``t_start`` is where the initial state lives."""

    sample_times: np.ndarray
    t_start: float = 0.0

    def __post_init__(self):
        ts = np.atleast_1d(np.asarray(self.sample_times, dtype=float))
        if ts.ndim != 1 or ts.size == 0:
            raise InvalidSpecError("sample_times must be a non-empty 1-D sequence")
        if self.t_start < 0:
            raise InvalidSpecError("t_start must be >= 0")
        if np.any(np.diff(ts) <= 0):
            raise InvalidSpecError("sample_times must be strictly increasing")
        if ts[0] < self.t_start:
            raise InvalidSpecError("sample_times must not precede t_start")
        ts.setflags(write=False)
        object.__setattr__(self, "sample_times", ts)

    @classmethod
    def uniform(cls, t_end: float, n_samples: int, t_start: float = 0.0) -> "TimeGrid":
        return cls(np.linspace(t_start, t_end, n_samples), t_start)

    @property
    def t_end(self) -> float:
        return float(self.sample_times[-1])

    def __len__(self):
        return self.sample_times.size


@dataclass
class TrajectoryRecord:
    """Observable time series, optionally with standard errors and full states."""

    sample_times: np.ndarray
    values: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    states: list | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sample_times = np.asarray(self.sample_times, dtype=float)
        n = self.sample_times.size
        for name, v in list(self.values.items()):
            v = np.asarray(v)
            if v.shape[0] != n:
                raise DimensionError(f"observable {name!r} has {v.shape[0]} samples, expected {n}")
            self.values[name] = v
        if self.states is not None and len(self.states) != n:
            raise DimensionError("one state per sample time is required")

    def __getitem__(self, name):
        return self.values[name]

    @property
    def columns(self) -> list[str]:
        cols = list(self.values)
        cols += [f"{name}_se" for name in self.errors]
        return cols

    def to_csv(self, path) -> None:
        header = ["t"] + self.columns
        data = [self.sample_times] + [np.real(self.values[c]) for c in self.values]
        data += [self.errors[c] for c in self.errors]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in zip(*data):
                w.writerow([CSV_FORMAT % x for x in row])

    @classmethod
    def from_csv(cls, path) -> "TrajectoryRecord":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != "t":
            raise InvalidSpecError(f"{path}: first column must be 't'")
        header = rows[0]
        arr = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(header))
        values, errors = {}, {}
        for j, name in enumerate(header[1:], start=1):
            if name.endswith("_se") and name[:-3] in values:
                errors[name[:-3]] = arr[:, j]
            else:
                values[name] = arr[:, j]
        return cls(arr[:, 0], values, errors)


def _error_norm(err, y, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _dense(y, h, K, s):
    q = K.T @ (_P @ (s ** np.arange(1, 5)))
    return y + h * q.reshape(y.shape)


def solve_ode(fun, y0, t0, sample_times, rtol=1e-8, atol=1e-10, first_step=None,
              fixed_step=None, max_steps=10_000_000):
    """Integrate ``y' = fun(y)`` and return ``y`` at each of ``sample_times``.

    ``fixed_step`` switches off error control and uses the fifth-order
    solution with a constant step (used for convergence-order checks).
    Returns ``(states, stats)``.
    """
    y = np.array(y0, dtype=complex if np.iscomplexobj(y0) else float)
    shape = y.shape
    times = np.asarray(sample_times, dtype=float)
    out = [None] * times.size
    stats = {"accepted": 0, "rejected": 0, "smallest_step": np.inf, "evaluations": 0}
    t = float(t0)
    j = 0
    while j < times.size and times[j] <= t:
        out[j] = y.copy()
        j += 1
    if j == times.size:
        return out, stats
    t_end = times[-1]
    K = np.empty((7, y.size), dtype=y.dtype)
    f = np.asarray(fun(y)).reshape(-1)
    stats["evaluations"] += 1
    if fixed_step is not None:
        h = float(fixed_step)
    elif first_step is not None:
        h = float(first_step)
    else:
        h = 1e-3
    err_prev = 1e-4
    for _ in range(max_steps):
        if t_end - t <= 1e-13 * max(1.0, abs(t)):
            while j < times.size:
                out[j] = y.copy()
                j += 1
            return out, stats
        h = min(h, t_end - t) if fixed_step is None else h
        if fixed_step is None and h < 16 * np.finfo(float).eps * max(1.0, abs(t)):
            raise StiffnessError(f"step size underflow at t={t:.6g} (h={h:.3e})",
                                 smallest_step=h, time=t)
        K[0] = f
        yflat = y.reshape(-1)
        for i in range(1, 7):
            dy = np.dot(_A[i], K[:i]) * h
            K[i] = np.asarray(fun((yflat + dy).reshape(shape))).reshape(-1)
        stats["evaluations"] += 6
        y_new = (yflat + h * np.dot(_B[:6], K[:6])).reshape(shape)
        if fixed_step is None:
            err = h * np.dot(_E, K).reshape(shape)
            enorm = _error_norm(err, y, y_new, rtol, atol)
            if not np.isfinite(enorm):
                stats["rejected"] += 1
                h *= _MIN_FACTOR
                continue
            if enorm > 1.0:
                stats["rejected"] += 1
                h *= max(_MIN_FACTOR, _SAFETY * enorm ** (-1 / 5))
                continue
        else:
            enorm = 0.0
        # accepted; K[6] = fun(y_new) by FSAL
        stats["accepted"] += 1
        stats["smallest_step"] = min(stats["smallest_step"], h)
        t_new = t + h
        while j < times.size and times[j] <= t_new * (1 + 1e-14):
            s = (times[j] - t) / h
            out[j] = y_new.copy() if s >= 1.0 else _dense(y, h, K, s)
            j += 1
        y, t, f = y_new, t_new, K[6].copy()
        if j == times.size:
            return out, stats
        if fixed_step is None:
            if enorm == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * enorm ** (-_ALPHA) * err_prev ** _BETA
                factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            err_prev = max(enorm, 1e-4)
            h *= factor
    raise NumericalError(f"maximum number of steps ({max_steps}) exceeded at t={t:.6g}")


def _check_density_matrix(rho, dim=None):
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError("density matrix must be square")
    if dim is not None and rho.shape[0] != dim:
        raise DimensionError(f"density matrix has dimension {rho.shape[0]}, expected {dim}")
    if np.abs(rho - rho.conj().T).max() > 1e-10:
        raise InvalidStateError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > 1e-10:
        raise InvalidStateError(f"density matrix has trace {np.trace(rho).real:.12g}")
    return rho


def _observable_columns(observables, n_sites, levels):
    from . import observables as obs
    if observables is None:
        return {}
    specs = [obs.ObservableSpec.parse(o) if isinstance(o, str) else o for o in observables]
    return {s.name: s for s in specs}


SECTOR_MAX_LIOUVILLE_DIM = 300_000


def integrate(liouvillian, rho0, grid: TimeGrid, rel_tol=1e-8, abs_tol=1e-10,
              observables=None, store_states=False, fixed_step=None,
              transform=None, use_symmetry="auto") -> TrajectoryRecord:
    """Integrate a Lindblad equation from ``rho0`` and sample observables.

    ``transform`` maps each sampled state before observables are evaluated
    (e.g. projection of a three-level state onto the reduced space).  When
    ``rho0`` is invariant under the generator's lattice symmetries the
    evolution stays in the symmetric sector; with ``use_symmetry="auto"``
    that sector is used whenever the explicit superoperator is affordable.
    """
    from . import observables as obs
    if rel_tol <= 0 or abs_tol <= 0:
        raise InvalidSpecError("tolerances must be positive")
    rho0 = _check_density_matrix(rho0, liouvillian.dim)
    liouvillian.check_state(rho0)
    first = 1e-3 / liouvillian.fast_rate
    d = liouvillian.dim
    perms = liouvillian.symmetries
    sector = (use_symmetry is True or (use_symmetry == "auto" and d * d <= SECTOR_MAX_LIOUVILLE_DIM))
    sector = sector and len(perms) > 1 and liouvillian.allowed is None \
        and _invariant(rho0, liouvillian.n_sites, liouvillian.levels, perms)
    if sector:
        U = symmetric_sector(d, liouvillian.n_sites, liouvillian.levels, perms).astype(complex)
        S = _restrict(liouvillian.superoperator(), U)
        x0 = U.T @ rho0.reshape(-1)
        xs, stats = solve_ode(lambda x: S @ x, x0, grid.t_start, grid.sample_times,
                              rel_tol, abs_tol, first_step=first, fixed_step=fixed_step)
        states = [(U @ x).reshape(d, d) for x in xs]
        stats["sector_dim"] = U.shape[1]
    else:
        states, stats = solve_ode(liouvillian.apply_hermitian, rho0, grid.t_start,
                                  grid.sample_times, rel_tol, abs_tol, first_step=first,
                                  fixed_step=fixed_step)
    drift = 0.0
    for i, rho in enumerate(states):
        tr = np.trace(rho)
        drift = max(drift, abs(tr - 1))
        if abs(tr - 1) > 1e-8:
            log.warning("trace drift %.3e at t=%.6g; renormalising", abs(tr - 1),
                        grid.sample_times[i])
            states[i] = rho / tr
    cols = _observable_columns(observables, liouvillian.n_sites, liouvillian.levels)
    mapped = [transform(r) for r in states] if transform is not None else states
    values = {name: np.array([obs.evaluate(spec, r) for r in mapped]) for name, spec in cols.items()}
    meta = dict(stats, trace_drift=drift, method="dopri5")
    return TrajectoryRecord(grid.sample_times, values, states=states if store_states else None,
                            meta=meta)


DENSE_NULLSPACE_LIMIT = 1300


def symmetric_sector(dim, n_sites, levels, permutations):
    """Orthonormal basis (sparse, ``dim**2 x n``) of operators invariant under site permutations."""
    D = dim * dim
    labels = np.arange(D)
    if permutations:
        from . import basis
        dig = basis.digits(n_sites, levels)
        powers = levels ** np.arange(n_sites - 1, -1, -1)
        for perm in permutations:
            img = (dig[:, perm].astype(np.int64) * powers).sum(axis=1)
            labels = np.minimum(labels, (img[:, None] * dim + img[None, :]).reshape(-1))
    _, inv, counts = np.unique(labels, return_inverse=True, return_counts=True)
    n = counts.size
    return sp.csr_matrix((1.0 / np.sqrt(counts[inv]), (np.arange(D), inv)), shape=(D, n))


def _restrict(S, U):
    """``U^T S U``, checking that the sector spanned by ``U`` is invariant."""
    SU = (S @ U).tocsr()
    S_red = (U.T @ SU).tocsr()
    leak = spla.norm(SU - U @ S_red) if SU.nnz else 0.0
    if leak > 1e-10 * max(1.0, spla.norm(S_red)):
        raise NumericalError("declared symmetries do not commute with the generator")
    return S_red


def _invariant(rho, n_sites, levels, permutations) -> bool:
    from . import basis
    dig = basis.digits(n_sites, levels)
    powers = levels ** np.arange(n_sites - 1, -1, -1)
    for perm in permutations:
        img = (dig[:, perm].astype(np.int64) * powers).sum(axis=1)
        if np.abs(rho[np.ix_(img, img)] - rho).max() > 1e-12:
            return False
    return True


def steady_state(liouvillian, max_dim=None, tol=1e-9, use_symmetry=True):
    """Unique stationary state of a Lindblad generator.

    The solve is restricted to operators invariant under the generator's
    lattice symmetries (a unique stationary state is necessarily invariant)
    and, for generators carrying an admissible subspace, to that subspace.
    Small problems use a dense SVD, which also yields the dimension of the
    null space; larger ones use a sparse LU solve with the trace condition
    replacing one equation.
    """
    allowed = liouvillian.allowed
    S = liouvillian.superoperator(max_dim=max_dim)
    d = liouvillian.dim
    if allowed is not None:
        keep = (allowed[:, None] * d + allowed[None, :]).reshape(-1)
        S = S[keep][:, keep]
        dsub = allowed.size
        U = None
    else:
        dsub = d
        perms = liouvillian.symmetries if use_symmetry else []
        U = symmetric_sector(d, liouvillian.n_sites, liouvillian.levels, perms) if perms else None
    trace_row = np.eye(dsub).reshape(-1)
    if U is not None:
        S, trace_row = _restrict(S, U), U.T @ trace_row
    if S.shape[0] <= DENSE_NULLSPACE_LIMIT:
        _, s, vh = np.linalg.svd(S.toarray())
        null = int(np.sum(s < 1e-10 * max(1.0, s[0])))
        if null > 1:
            raise DegenerateSteadyStateError(null)
        x = vh[-1].conj()
    else:
        x = _sparse_nullvector(S, trace_row)
    if U is not None:
        x = U @ x
    rho_sub = x.reshape(dsub, dsub)
    rho_sub = 0.5 * (rho_sub + rho_sub.conj().T)
    rho_sub /= np.trace(rho_sub).real
    if allowed is not None:
        rho = np.zeros((d, d), dtype=complex)
        rho[np.ix_(allowed, allowed)] = rho_sub
    else:
        rho = rho_sub
    resid = np.abs(liouvillian.apply(rho)).max()
    if resid > tol:
        raise NumericalError(f"steady-state residual {resid:.3e} exceeds {tol:.1e}")
    return rho


def _sparse_nullvector(S, trace_row):
    D = S.shape[0]
    # replace the first equation with the trace constraint
    A = S.tolil()
    A[0, :] = trace_row.reshape(1, -1)
    A = A.tocsc()
    rhs = np.zeros(D, dtype=complex)
    rhs[0] = 1.0
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:  # exactly singular: null space is degenerate
        raise DegenerateSteadyStateError(_multiplicity(S)) from exc
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise DegenerateSteadyStateError(_multiplicity(S))
    return x


def _multiplicity(S):
    try:
        vals = spla.eigs(S.tocsc(), k=min(6, S.shape[0] - 2), sigma=1e-8,
                         return_eigenvectors=False)
    except Exception:  # pragma: no cover - best effort diagnostics only
        return -1
    return int(np.sum(np.abs(vals) < 1e-7))


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of ``rho - sigma`` for Hermitian matrices."""
    rho = np.asarray(rho)
    sigma = np.asarray(sigma)
    if rho.shape != sigma.shape:
        raise DimensionError(f"shape mismatch {rho.shape} vs {sigma.shape}")
    diff = rho - sigma
    if np.abs(diff - diff.conj().T).max() > 1e-8 * max(1.0, np.abs(diff).max()):
        raise InvalidStateError("trace distance requires Hermitian arguments")
    ev = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return float(min(1.0, 0.5 * np.abs(ev).sum()))


def expm_oracle(superop, rho0, t):
    """``exp(t S) vec(rho0)`` by dense scaling-and-squaring (reference solutions)."""
    S = superop.toarray() if sp.issparse(superop) else np.asarray(superop)
    d = rho0.shape[0]
    return (sla.expm(t * S) @ rho0.reshape(-1)).reshape(d, d)
