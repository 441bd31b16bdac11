"""Hamiltonians and Lindblad generators for the two- and three-level models.

A :class:`Liouvillian` is applied matrix-free.  Everything that acts on a
density matrix elementwise (diagonal Hamiltonian, diagonal jump operators,
diagonal parts of the anticommutator) is folded into one precomputed
``dim x dim`` factor; only genuinely off-diagonal pieces are kept as sparse
matrices.  The explicit superoperator uses the row-major vectorisation
``vec(A rho B) = (A kron B.T) vec(rho)``, matching ``rho.reshape(-1)``.
"""
from __future__ import annotations

import numba
import numpy as np
import scipy.sparse as sp

from . import basis
from .errors import DimensionError, InvalidStateError
from .model import DephasingParams, EitParams, InteractionMatrix

MAX_SITES_TWO_LEVEL = 14
MAX_SITES_TWO_LEVEL_SUPER = 10
MAX_SITES_THREE_LEVEL = 8
MAX_SITES_THREE_LEVEL_SUPER = 6

# single-site operators, two-level basis (down=0, up=1)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Y = np.array([[0.0, 1j], [-1j, 0.0]])   # -i|up><down| + i|down><up|
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]])  # |down><up|
SIGMA_PLUS = SIGMA_MINUS.T.copy()
NUMBER = np.array([[0.0, 0.0], [0.0, 1.0]])
GROUND_PROJECTOR = np.array([[1.0, 0.0], [0.0, 0.0]])


def site_operator(op, k: int, n_sites: int, levels: int = 2) -> sp.csr_matrix:
    """Embed a single-site operator at site ``k`` (site 0 most significant)."""
    left = sp.identity(levels ** k, format="csr")
    right = sp.identity(levels ** (n_sites - 1 - k), format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(op), format="csr"), right, format="csr")


def _split_diagonal(op):
    op = sp.csr_matrix(op)
    d = op.diagonal()
    off = (op - sp.diags(d)).tocsr()
    off.eliminate_zeros()
    return d, off


@numba.njit(cache=True)
def _sandwich_kernel(a_ptr, a_idx, a_val, b_ptr, b_idx, b_val, rho, out):
    """out += A @ rho @ B with ``A`` and ``B^+`` in CSR form (cost nnz(A) * nnz(B))."""
    for i in range(a_ptr.size - 1):
        if a_ptr[i] == a_ptr[i + 1]:
            continue
        for j in range(b_ptr.size - 1):
            acc = 0j
            for q in range(b_ptr[j], b_ptr[j + 1]):
                l = b_idx[q]
                bq = np.conj(b_val[q])
                for p in range(a_ptr[i], a_ptr[i + 1]):
                    acc += a_val[p] * rho[a_idx[p], l] * bq
            out[i, j] += acc


@numba.njit(cache=True)
def _csr_left(indptr, indices, data, rho, out):
    """out += A @ rho for CSR ``A``."""
    for i in range(indptr.size - 1):
        for p in range(indptr[i], indptr[i + 1]):
            a = data[p]
            k = indices[p]
            for j in range(rho.shape[1]):
                out[i, j] += a * rho[k, j]


def _csr_parts(M):
    M = sp.csr_matrix(M, dtype=complex)
    M.sum_duplicates()
    return (M.indptr.astype(np.int64), M.indices.astype(np.int64), M.data)


class Liouvillian:
    """Lindblad generator ``rho -> -i[H, rho] + sum_j (L_j rho L_j^+ - {L_j^+ L_j, rho}/2)``.

    Parameters
    ----------
    hamiltonian : sparse or dense matrix
    jumps : list of sparse matrices
        Jump operators including their rate prefactors.
    levels, n_sites : int
        Local dimension and number of sites (metadata used by observables).
    fast_rate : float
        Largest dissipative rate; sets the integrator's initial step.
    allowed : array of int, optional
        Basis configurations spanning an invariant subspace on which the
        dynamics is meant to be used (nearest-neighbour exclusion).
    symmetries : list of site permutations, optional
        Lattice permutations commuting with the generator; used to shrink
        the stationary-state solve to the symmetric sector.
    terms : list of (A, B) pairs, optional
        Extra linear pieces ``rho -> A @ rho @ B`` for generators that are not
        written in Lindblad form.
    """

    def __init__(self, hamiltonian, jumps=(), *, levels=2, n_sites=None, fast_rate=1.0,
                 allowed=None, symmetries=None, terms=(), name="lindblad"):
        H = sp.csr_matrix(hamiltonian, dtype=complex)
        self.dim = H.shape[0]
        self.levels = levels
        self.n_sites = n_sites
        self.fast_rate = float(fast_rate) if fast_rate else 1.0
        self.name = name
        self.hamiltonian = H
        self.jumps = [sp.csr_matrix(L, dtype=complex) for L in jumps]
        self.allowed = None if allowed is None else np.asarray(allowed, dtype=int)
        self.symmetries = [np.asarray(p, dtype=int) for p in (symmetries or [])]

        h_diag, self._h_off = _split_diagonal(H)
        factor = -1j * (h_diag[:, None] - h_diag[None, :])
        self._sandwich = []
        K = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for L in self.jumps:
            ldiag, loff = _split_diagonal(L)
            if loff.nnz == 0:
                factor += ldiag[:, None] * ldiag.conj()[None, :]
            else:
                self._sandwich.append(L)
            K = K + (L.conj().T @ L)
        k_diag, self._k_off = _split_diagonal(K)
        factor -= 0.5 * (k_diag[:, None] + k_diag[None, :])
        self._factor = factor
        self._coherent = self._h_off.nnz > 0
        if self._k_off.nnz:
            self._h_eff_off = (-1j * self._h_off - 0.5 * self._k_off).tocsr()
        else:
            self._h_eff_off = (-1j * self._h_off).tocsr()
        self._h_eff_off_dag = self._h_eff_off.conj().T.tocsr()
        self._has_off = self._h_eff_off.nnz > 0
        self._terms = [(sp.csr_matrix(A, dtype=complex), sp.csr_matrix(B, dtype=complex))
                       for A, B in terms]
        # compiled application: CSR parts of (A, B^+) per term A rho B
        kern = []
        self._off_parts = _csr_parts(self._h_eff_off) if self._has_off else None
        if self._has_off:
            ident = _csr_parts(sp.identity(self.dim, format="csr"))
            kern.append((ident, self._off_parts))
        kern += [(_csr_parts(L), _csr_parts(L)) for L in self._sandwich]
        kern += [(_csr_parts(A), _csr_parts(B.conj().T)) for A, B in self._terms]
        self._kernels = kern

    def apply(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho)
        out = self._factor * rho
        rho = np.ascontiguousarray(rho, dtype=complex)
        if self._has_off:
            _csr_left(*self._off_parts, rho, out)
        for left, right in self._kernels:
            _sandwich_kernel(*left, *right, rho, out)
        return out

    def apply_hermitian(self, rho: np.ndarray) -> np.ndarray:
        """Same as :meth:`apply` for Hermitian ``rho``, using ``rho A^+ = (A rho)^+``."""
        out = self._factor * rho
        rho = np.ascontiguousarray(rho, dtype=complex)
        if self._has_off:
            x = np.zeros_like(rho)
            _csr_left(*self._off_parts, rho, x)
            out += x
            out += x.conj().T
        for left, right in self._kernels[1 if self._has_off else 0:]:
            _sandwich_kernel(*left, *right, rho, out)
        return out

    __call__ = apply

    def superoperator(self, max_dim: int | None = None) -> sp.csr_matrix:
        """Explicit sparse ``dim**2 x dim**2`` matrix of the generator."""
        d = self.dim
        if max_dim is not None and d > max_dim:
            raise DimensionError(f"superoperator of dimension {d}**2 exceeds guard")
        eye = sp.identity(d, format="csr", dtype=complex)
        S = sp.diags(self._factor.reshape(-1))
        if self._has_off:
            S = S + sp.kron(self._h_eff_off, eye) + sp.kron(eye, self._h_eff_off_dag.T)
        for L in self._sandwich:
            S = S + sp.kron(L, L.conj())
        for A, B in self._terms:
            S = S + sp.kron(A, B.T)
        return sp.csr_matrix(S)

    def is_elementwise(self) -> bool:
        return not self._has_off and not self._sandwich and not self._terms

    def check_state(self, rho: np.ndarray) -> None:
        """Hook for variants with an admissible-subspace restriction."""
        if self.allowed is None:
            return
        forbidden = np.setdiff1d(np.arange(self.dim), self.allowed)
        if forbidden.size == 0:
            return
        diag = np.real(np.diagonal(rho)) if rho.ndim == 2 else np.abs(rho) ** 2
        weight = float(np.abs(diag[forbidden]).sum())
        if weight > 1e-10:
            raise InvalidStateError(
                f"{self.name}: initial state has weight {weight:.3e} on forbidden configurations")


def lattice_symmetries(interactions: InteractionMatrix) -> list[np.ndarray]:
    """Site permutations (translations and reflections) leaving ``V`` invariant."""
    n = interactions.n_sites
    v = interactions.values
    cands = [np.roll(np.arange(n), s) for s in range(n)]
    cands += [c[::-1].copy() for c in cands]
    out, seen = [], set()
    for perm in cands:
        key = tuple(perm)
        if key not in seen and np.array_equal(v[np.ix_(perm, perm)], v):
            seen.add(key)
            out.append(perm)
    return out


def two_level_hamiltonian(params: DephasingParams, interactions: InteractionMatrix) -> sp.csr_matrix:
    n = interactions.n_sites
    H = sp.diags(basis.diagonal_energies(interactions, params.detuning, 2).astype(complex))
    for k in range(n):
        H = H + params.rabi_omega * site_operator(SIGMA_X, k, n)
    return sp.csr_matrix(H)


def two_level_jumps(params: DephasingParams, n_sites: int) -> list[sp.csr_matrix]:
    jumps = []
    if params.dephasing_gamma > 0:
        jumps += [np.sqrt(params.dephasing_gamma) * site_operator(NUMBER, k, n_sites)
                  for k in range(n_sites)]
    if params.decay_gamma_ryd > 0:
        jumps += [np.sqrt(params.decay_gamma_ryd) * site_operator(SIGMA_MINUS, k, n_sites)
                  for k in range(n_sites)]
    return jumps


def build_two_level_liouvillian(params: DephasingParams, interactions: InteractionMatrix,
                                explicit: bool = False) -> Liouvillian:
    """Full master equation with dephasing (and optional radiative decay)."""
    n = interactions.n_sites
    basis.check_dimension(n, 2, MAX_SITES_TWO_LEVEL_SUPER if explicit else MAX_SITES_TWO_LEVEL,
                          "two-level Liouvillian")
    H = two_level_hamiltonian(params, interactions)
    fast = max(params.dephasing_gamma, params.decay_gamma_ryd, params.rabi_omega)
    return Liouvillian(H, two_level_jumps(params, n), levels=2, n_sites=n, fast_rate=fast,
                       symmetries=lattice_symmetries(interactions), name="two-level")


# three-level single-site operators in the (up, mid, down) basis
def three_level_drive(omega_p: float, omega_c: float) -> np.ndarray:
    h = np.zeros((3, 3))
    h[basis.UP3, basis.MID3] = h[basis.MID3, basis.UP3] = omega_c
    h[basis.MID3, basis.DOWN3] = h[basis.DOWN3, basis.MID3] = omega_p
    return h


def three_level_decay_operator() -> np.ndarray:
    op = np.zeros((3, 3))
    op[basis.DOWN3, basis.MID3] = 1.0
    return op


def build_three_level_liouvillian(params: EitParams, interactions: InteractionMatrix,
                                  explicit: bool = False) -> Liouvillian:
    """Full EIT master equation: ladder drive plus intermediate-state decay."""
    n = interactions.n_sites
    basis.check_dimension(n, 3, MAX_SITES_THREE_LEVEL_SUPER if explicit else MAX_SITES_THREE_LEVEL,
                          "three-level Liouvillian")
    H = sp.diags(basis.diagonal_energies(interactions, params.detuning, 3).astype(complex))
    drive = three_level_drive(params.omega_p, params.omega_c)
    for k in range(n):
        H = H + site_operator(drive, k, n, 3)
    decay = np.sqrt(params.decay_Gamma) * three_level_decay_operator()
    jumps = [site_operator(decay, k, n, 3) for k in range(n)]
    return Liouvillian(H, jumps, levels=3, n_sites=n, fast_rate=params.decay_Gamma,
                       symmetries=lattice_symmetries(interactions), name="three-level")


def random_density_matrix(dim: int, rng=None, rank: int | None = None) -> np.ndarray:
    """Random full-rank (or given-rank) density matrix from a Ginibre ensemble."""
    rng = np.random.default_rng(rng)
    r = dim if rank is None else rank
    g = rng.normal(size=(dim, r)) + 1j * rng.normal(size=(dim, r))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
