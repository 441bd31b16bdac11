"""Brute-force projection-operator expansion on explicit superoperators.

Given a split ``L = L0 + L1`` with a fast generator ``L0`` and a slow
perturbation ``L1``, this module builds the projector ``P`` onto the
stationary subspace of ``L0`` and the time-local effective generators up to
fourth order in ``L1``.  Time integrals are evaluated through the resolvent

    R = int_0^inf exp(t L0) Q dt = -(L0 restricted to range(Q))^{-1} Q,
    int_0^inf t exp(t L0) Q dt = R @ R,

so the whole construction is dense linear algebra on small Liouville spaces.
It is deliberately independent of the closed-form rates in
:mod:`rydeff.rates` and :mod:`rydeff.eit`, which are tested against it.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, InvalidGeneratorError, NumericalError, UnsupportedError
from .model import DephasingParams, EitParams, InteractionMatrix
from . import operators as ops

MAX_ORACLE_DIM = 4096
ZERO_TOL = 1e-9


@dataclass
class SuperoperatorSplit:
    L0: np.ndarray
    L1: np.ndarray
    P: np.ndarray
    dim: int            # Hilbert-space dimension

    @property
    def Q(self):
        return np.eye(self.P.shape[0]) - self.P


def _dense(op):
    return op.toarray() if hasattr(op, "toarray") else np.asarray(op, dtype=complex)


def _check_size(D):
    if D > MAX_ORACLE_DIM:
        raise DimensionError(f"oracle limited to Liouville dimension {MAX_ORACLE_DIM}, got {D}")


def build_projector(L0) -> np.ndarray:
    """Spectral projector onto the kernel of ``L0`` from biorthonormal eigenvectors."""
    L0 = _dense(L0)
    D = L0.shape[0]
    _check_size(D)
    if np.count_nonzero(L0 - np.diag(np.diagonal(L0))) == 0:
        lam = np.diagonal(L0)
        _check_spectrum(lam)
        return np.diag((np.abs(lam) < ZERO_TOL).astype(complex))
    lam, vl, vr = sla.eig(L0, left=True, right=True)
    _check_spectrum(lam)
    kernel = np.abs(lam) < ZERO_TOL
    if not kernel.any():
        return np.zeros_like(L0)
    # re-derive the kernel bases with SVD for robustness against defective eigvecs
    right = sla.null_space(L0, rcond=ZERO_TOL)
    left = sla.null_space(L0.conj().T, rcond=ZERO_TOL)
    if right.shape[1] != kernel.sum() or left.shape[1] != right.shape[1]:
        raise NumericalError("kernel of L0 is not semisimple")
    M = left.conj().T @ right
    return right @ np.linalg.solve(M, left.conj().T)


def _check_spectrum(lam):
    if np.any(lam.real > ZERO_TOL):
        raise InvalidGeneratorError(f"eigenvalue with positive real part {lam.real.max():.3e}")
    imag_only = (np.abs(lam.real) < ZERO_TOL) & (np.abs(lam.imag) >= ZERO_TOL)
    if imag_only.any():
        raise UnsupportedError("L0 has purely imaginary eigenvalues; the projection "
                               "expansion needs a gap on range(Q)")


def resolvent(L0, P) -> np.ndarray:
    """``R`` with ``L0 R = -Q`` on range(Q) and ``R P = P R = 0``."""
    L0 = _dense(L0)
    Q = np.eye(L0.shape[0]) - P
    # L0 - P is invertible: it acts as -1 on range(P) and as L0 on range(Q)
    try:
        R = -np.linalg.solve(L0 - P, Q)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("L0 is singular on range(Q)") from exc
    if np.abs(L0 @ R + Q).max() > 1e-8 * max(1.0, np.abs(R).max()):
        raise NumericalError("resolvent solve did not converge")
    return R


def effective_terms(L0, L1, P, R=None) -> dict:
    """All contributions up to fourth order, keyed by name.

    ``L2``, ``L3``, ``L4`` hold the terms that survive when ``P L1 P = 0``;
    ``L3_pl1p`` and ``L4_pl1p`` collect the terms ending in ``P L1 P``
    (for the fourth order, only those with an unambiguous time ordering).
    """
    L0 = _dense(L0)
    L1 = _dense(L1)
    if R is None:
        R = resolvent(L0, P)
    R2 = R @ R
    L1P = L1 @ P
    PL1 = P @ L1
    PL1P = PL1 @ P
    RL1 = R @ L1
    out = {"L1": PL1P, "L2": PL1 @ RL1 @ P}
    out["L3"] = PL1 @ RL1 @ RL1 @ P
    out["L3_pl1p"] = -PL1 @ R2 @ L1 @ PL1P
    out["L4"] = PL1 @ RL1 @ RL1 @ RL1 @ P - PL1 @ R2 @ L1 @ PL1 @ RL1 @ P
    out["L4_pl1p"] = -(PL1 @ R2 @ L1 @ RL1 @ PL1P + PL1 @ RL1 @ R2 @ L1 @ PL1P)
    out["P_L1_P_norm"] = float(np.linalg.norm(PL1P))
    del L1P
    return out


def effective_generator(L0, L1, P, order: int, R=None) -> np.ndarray:
    """Effective generator of a single order (1-4) acting on range(P)."""
    if order not in (1, 2, 3, 4):
        raise UnsupportedError("orders 1 to 4 are available")
    terms = effective_terms(L0, L1, P, R)
    if order == 1:
        return terms["L1"]
    if order == 2:
        return terms["L2"]
    gen = terms[f"L{order}"]
    if terms["P_L1_P_norm"] > 1e-10:
        warnings.warn("P L1 P != 0: terms ending in P L1 P are reported separately by "
                      "effective_terms and not included here", stacklevel=2)
    return gen


def quadrature_check(L0, L1, P, T_cut: float, n_steps: int = 20000) -> np.ndarray:
    """Second-order generator with ``int_0^T exp(t L0) Q dt`` done by composite Simpson."""
    L0 = _dense(L0)
    L1 = _dense(L1)
    n_steps += n_steps % 2
    Q = np.eye(L0.shape[0]) - P
    h = T_cut / n_steps
    step = sla.expm(h * L0)
    acc = Q.copy()
    cur = Q.copy()
    for i in range(1, n_steps):
        cur = step @ cur
        acc = acc + (4 if i % 2 else 2) * cur
    cur = step @ cur
    acc = (acc + cur) * (h / 3)
    return P @ L1 @ acc @ L1 @ P


def diagonal_block(G, dim: int) -> np.ndarray:
    """Restriction of a Liouville-space matrix to diagonal matrices (populations)."""
    idx = np.arange(dim) * (dim + 1)
    return G[np.ix_(idx, idx)]


def _superop(H, jumps, levels, n):
    return ops.Liouvillian(H, jumps, levels=levels, n_sites=n).superoperator().toarray()


def dephasing_split(params: DephasingParams, interactions: InteractionMatrix) -> SuperoperatorSplit:
    """``L0 = -i[H0, .] + dephasing``, ``L1 = -i[H1, .]`` for the two-level gas."""
    n = interactions.n_sites
    d = 2 ** n
    _check_size(d * d)
    H0 = ops.two_level_hamiltonian(params, interactions)
    H0 = H0.multiply(np.eye(d)).tocsr()          # keep only the diagonal part
    H1 = sum(params.rabi_omega * ops.site_operator(ops.SIGMA_X, k, n) for k in range(n))
    deph = [np.sqrt(params.dephasing_gamma) * ops.site_operator(ops.NUMBER, k, n)
            for k in range(n)]
    L0 = _superop(H0, deph, 2, n)
    L1 = _superop(H1, [], 2, n)
    return SuperoperatorSplit(L0, L1, build_projector(L0), d)


def decay_superoperator(params: DephasingParams, n_sites: int) -> np.ndarray:
    jumps = [np.sqrt(params.decay_gamma_ryd) * ops.site_operator(ops.SIGMA_MINUS, k, n_sites)
             for k in range(n_sites)]
    return _superop(np.zeros((2 ** n_sites, 2 ** n_sites)), jumps, 2, n_sites)


def eit_split(params: EitParams, interactions: InteractionMatrix) -> SuperoperatorSplit:
    """``L0 = decay of the intermediate level``, ``L1 = -i[H0 + H1, .]``."""
    n = interactions.n_sites
    d = 3 ** n
    _check_size(d * d)
    full = ops.build_three_level_liouvillian(params, interactions)
    decay = [np.sqrt(params.decay_Gamma) * ops.site_operator(ops.three_level_decay_operator(), k, n, 3)
             for k in range(n)]
    L0 = _superop(np.zeros((d, d)), decay, 3, n)
    L1 = _superop(full.hamiltonian, [], 3, n)
    return SuperoperatorSplit(L0, L1, build_projector(L0), d)
