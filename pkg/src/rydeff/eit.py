"""Reduced two-level dynamics for the three-level ladder under EIT conditions.

Reduced operators live in the two-level basis (0 = ground, 1 = Rydberg).
Three variants are available:

``second_order``
    Lindblad equation with ``H0`` and jumps ``L_k = (2/sqrt(G))(Wc s-_k + Wp p_k)``.
``nn_exclusion``
    Hard-core limit on a chain: purely dissipative with
    ``J_k = (2/sqrt(G))(Wc P_k s-_k + Wp p_k)``, ``P_k = p_{k-1} p_{k+1}``;
    only meaningful on configurations without neighbouring excitations.
``nonperturbative``
    ``H0`` kept to all orders through the diagonal factors
    ``F_k = 1 / (1 - i (2/G) h_k)``.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import basis
from .errors import InvalidSpecError, DimensionError
from .model import EitParams, InteractionMatrix, LatticeSpec
from .operators import (GROUND_PROJECTOR, NUMBER, SIGMA_MINUS, Liouvillian,
                        MAX_SITES_TWO_LEVEL, lattice_symmetries, site_operator)

VARIANTS = ("second_order", "nn_exclusion", "nonperturbative")


def allowed_configurations(n_sites: int, boundary: str = "periodic") -> np.ndarray:
    """Indices of two-level configurations without adjacent excitations."""
    occ = basis.digits(n_sites, 2).astype(bool)
    bad = np.zeros(occ.shape[0], dtype=bool)
    if n_sites > 1:
        bad |= (occ[:, :-1] & occ[:, 1:]).any(axis=1)
        if boundary == "periodic" and n_sites > 2:
            bad |= occ[:, 0] & occ[:, -1]
    return np.flatnonzero(~bad)


def exclusion_projector(obj, n_sites: int, boundary: str = "periodic"):
    """Zero every amplitude / row / column on forbidden configurations.

    Returns ``(projected, removed_weight)``; the weight is the squared norm
    for vectors and the trace for matrices.
    """
    obj = np.asarray(obj)
    dim = 2 ** n_sites
    if obj.shape[0] != dim:
        raise DimensionError(f"expected dimension {dim}, got {obj.shape[0]}")
    mask = np.zeros(dim, dtype=bool)
    mask[allowed_configurations(n_sites, boundary)] = True
    out = obj.copy()
    if obj.ndim == 1:
        removed = float(np.sum(np.abs(obj[~mask]) ** 2))
        out[~mask] = 0
    else:
        removed = float(np.real(np.diagonal(obj)[~mask].sum()))
        out[~mask, :] = 0
        out[:, ~mask] = 0
    return out, removed


def _local_fields(params: EitParams, interactions: InteractionMatrix) -> np.ndarray:
    return basis.local_fields(interactions, params.detuning)


def _h0(params, interactions):
    return sp.diags(basis.diagonal_energies(interactions, params.detuning, 2).astype(complex))


def _neighbour_projector(k, lattice: LatticeSpec):
    n = lattice.n_sites
    P = sp.identity(2 ** n, format="csr", dtype=complex)
    for q in lattice.neighbours(k):
        P = P @ site_operator(GROUND_PROJECTOR, q, n)
    return P


def build_reduced_liouvillian(params: EitParams, interactions: InteractionMatrix,
                              variant: str = "second_order") -> Liouvillian:
    """Reduced generator on the ``2**N``-dimensional ground/Rydberg space."""
    if variant not in VARIANTS:
        raise InvalidSpecError(f"variant must be one of {VARIANTS}")
    n = interactions.n_sites
    basis.check_dimension(n, 2, MAX_SITES_TWO_LEVEL, "reduced EIT generator")
    G = params.decay_Gamma
    wc, wp = params.omega_c, params.omega_p
    pref = 2.0 / np.sqrt(G)
    fast = 4 * max(wc, wp) ** 2 / G
    sm = [site_operator(SIGMA_MINUS, k, n) for k in range(n)]
    pk = [site_operator(GROUND_PROJECTOR, k, n) for k in range(n)]
    sym = lattice_symmetries(interactions)
    if variant == "second_order":
        jumps = [pref * (wc * sm[k] + wp * pk[k]) for k in range(n)]
        return Liouvillian(_h0(params, interactions), jumps, levels=2, n_sites=n,
                           fast_rate=fast, symmetries=sym, name="eit-second-order")
    if variant == "nn_exclusion":
        lattice = interactions.lattice
        if lattice is None:
            raise InvalidSpecError("nearest-neighbour exclusion needs a chain lattice")
        jumps = [pref * (wc * (_neighbour_projector(k, lattice) @ sm[k]) + wp * pk[k])
                 for k in range(n)]
        allowed = allowed_configurations(n, lattice.boundary)
        return Liouvillian(sp.csr_matrix((2 ** n, 2 ** n), dtype=complex), jumps, levels=2,
                           n_sites=n, fast_rate=fast, allowed=allowed, symmetries=sym,
                           name="eit-nn-exclusion")
    return _nonperturbative(params, interactions, sm, pk, fast, sym)


def _nonperturbative(params, interactions, sm, pk, fast, sym):
    n = interactions.n_sites
    G = params.decay_Gamma
    lcc = 2 * params.omega_c ** 2 / G
    lcp = 2 * params.omega_c * params.omega_p / G
    lpp = 2 * params.omega_p ** 2 / G
    h = _local_fields(params, interactions)
    terms = []   # (A, B) pairs contributing A @ mu @ B
    eye = sp.identity(2 ** n, format="csr", dtype=complex)
    for k in range(n):
        F = sp.diags(1.0 / (1.0 - 1j * (2.0 / G) * h[:, k]))
        Fd = F.conj()
        s_m, p = sm[k], pk[k]
        s_p = s_m.T.tocsr()
        nk = site_operator(NUMBER, k, n)
        terms += [
            (lcc * (s_m @ F), s_p), (lcc * s_m, Fd @ s_p),
            (-lcc * (F @ nk), eye), (eye, -lcc * (nk @ Fd)),
            (lcp * (s_m @ F), p), (lcp * p, Fd @ s_p),
            (lcp * s_m, p), (lcp * p, s_p),
            (-lcp * s_p, eye), (eye, -lcp * s_m),
            (-lcp * (s_m @ F), eye), (eye, -lcp * (Fd @ s_p)),
            (2 * lpp * p, p), (-lpp * p, eye), (eye, -lpp * p),
        ]
    return Liouvillian(_h0(params, interactions), [], levels=2, n_sites=n, fast_rate=fast,
                       terms=terms, symmetries=sym, name="eit-nonperturbative")


# projection of full three-level states ---------------------------------------

# per-site map (in -> out): keep the up/down block and move the intermediate
# population to the ground state.  Two-level index: 0 = down, 1 = up.
_KRAUS = (
    np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]),   # |d><d| + |u><u|
    np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]),   # |d><m|
)


def project_and_reduce(rho_full) -> np.ndarray:
    """Apply the stationary projector of the intermediate-level decay site by site
    and drop the intermediate level."""
    rho = np.asarray(rho_full, dtype=complex)
    d = rho.shape[0]
    n = int(round(np.log(d) / np.log(3)))
    if 3 ** n != d or rho.shape != (d, d):
        raise DimensionError("expected a square matrix over 3**N configurations")
    t = rho.reshape((3,) * (2 * n))
    for k in range(n):
        acc = 0
        for K in _KRAUS:
            # contract ket axis k with K and bra axis n+k with conj(K)
            x = np.tensordot(K, t, axes=([1], [k]))
            x = np.moveaxis(x, 0, k)
            x = np.tensordot(K.conj(), x, axes=([1], [n + k]))
            x = np.moveaxis(x, 0, n + k)
            acc = acc + x
        t = acc
    return t.reshape(2 ** n, 2 ** n)


def embed_reduced(mu) -> np.ndarray:
    """Inverse embedding of a reduced state into the three-level space (no intermediate weight)."""
    mu = np.asarray(mu, dtype=complex)
    n = int(round(np.log2(mu.shape[0])))
    # two-level digit (0 = down, 1 = up) -> three-level digit (2 = down, 0 = up)
    dig = basis.digits(n, 2)
    powers = 3 ** np.arange(n - 1, -1, -1)
    idx = ((2 - 2 * dig.astype(int)) * powers).sum(axis=1)
    out = np.zeros((3 ** n, 3 ** n), dtype=complex)
    out[np.ix_(idx, idx)] = mu
    return out


def ground_state(n_sites: int, levels: int = 2) -> np.ndarray:
    """Density matrix of all atoms in the ground state."""
    d = levels ** n_sites
    rho = np.zeros((d, d), dtype=complex)
    g = 0 if levels == 2 else d - 1     # all-down word: 0...0 or 2...2
    rho[g, g] = 1.0
    return rho
