"""Lattice observables on density matrices and probability vectors.

All densities are intensive: ``n = (1/N) sum_k n_k``.  Names double as CSV
column headers (``mean_density``, ``fluctuations``, ``g2_<d>``, ``sigma_x``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import basis
from .errors import DimensionError, IncompatibleObservableError, InvalidSpecError

KINDS = ("mean_density", "density_fluctuations", "g2", "sigma_x_mean", "custom_diagonal")
_ALIASES = {"mean_density": "mean_density", "fluctuations": "density_fluctuations",
            "density_fluctuations": "density_fluctuations", "sigma_x": "sigma_x_mean",
            "sigma_x_mean": "sigma_x_mean"}
DEFAULT_NAMES = {"mean_density": "mean_density", "density_fluctuations": "fluctuations",
                 "sigma_x_mean": "sigma_x"}


@dataclass(frozen=True, eq=False)
class ObservableSpec:
    kind: str
    distance: int | None = None
    diagonal: np.ndarray | None = None
    label: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpecError(f"unknown observable kind {self.kind!r}")
        if self.kind == "g2" and (self.distance is None or self.distance < 1):
            raise InvalidSpecError("g2 needs a distance d >= 1")
        if self.kind == "custom_diagonal" and self.diagonal is None:
            raise InvalidSpecError("custom_diagonal needs the diagonal values")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "g2":
            return f"g2_{self.distance}"
        return DEFAULT_NAMES.get(self.kind, self.kind)

    @property
    def is_diagonal(self) -> bool:
        return self.kind != "sigma_x_mean"

    @classmethod
    def parse(cls, name: str) -> "ObservableSpec":
        if name in _ALIASES:
            return cls(_ALIASES[name])
        if name.startswith("g2_"):
            try:
                return cls("g2", distance=int(name[3:]))
            except ValueError:
                pass
        raise InvalidSpecError(f"unknown observable name {name!r}")


def infer_lattice(dim: int, levels: int | None = None) -> tuple[int, int]:
    """``(n_sites, levels)`` for a basis of size ``dim``."""
    for b in ((levels,) if levels else (2, 3)):
        n = int(round(np.log(dim) / np.log(b)))
        if n >= 1 and b ** n == dim:
            return n, b
    raise DimensionError(f"dimension {dim} is not a power of 2 or 3")


def _pair_sum(occ, d, periodic):
    n = occ.shape[1]
    if periodic:
        return (occ * np.roll(occ, -d, axis=1)).sum(axis=1) / n
    if d >= n:
        return np.zeros(occ.shape[0])
    return (occ[:, :-d] * occ[:, d:]).sum(axis=1) / (n - d)


def diagonal_values(spec: ObservableSpec, n_sites: int, levels: int = 2,
                    boundary: str = "periodic") -> np.ndarray:
    """Value of a diagonal observable on every basis configuration."""
    occ = basis.rydberg_occupations(n_sites, levels)
    dens = occ.mean(axis=1)
    if spec.kind == "mean_density":
        return dens
    if spec.kind == "g2":
        if boundary == "periodic" and spec.distance > n_sites // 2 and n_sites > 1:
            # g2(d) = g2(N - d) on a ring; allowed but outside the canonical range
            pass
        return _pair_sum(occ, spec.distance, boundary == "periodic")
    if spec.kind == "custom_diagonal":
        v = np.asarray(spec.diagonal, dtype=float)
        if v.shape != (levels ** n_sites,):
            raise DimensionError("custom diagonal has the wrong length")
        return v
    raise IncompatibleObservableError(f"{spec.kind} is not a linear diagonal observable")


def sigma_x_mean(rho: np.ndarray, n_sites: int, levels: int) -> float:
    """``(1/N) sum_k <sigma^x_k>`` with sigma^x coupling down and up."""
    dim = rho.shape[0]
    idx = np.arange(dim)
    total = 0.0
    if levels == 2:
        for k in range(n_sites):
            total += np.real(rho[idx ^ basis.flip_mask(n_sites, k), idx].sum())
    else:
        dig = basis.digits(n_sites, 3)
        for k in range(n_sites):
            step = 3 ** (n_sites - 1 - k)
            a = idx[dig[:, k] == basis.DOWN3]
            b = a - 2 * step   # same word with the digit at k set to up
            total += 2 * np.real(rho[a, b].sum())
    return float(total / n_sites)


def evaluate(spec, state, levels: int | None = None, boundary: str = "periodic") -> float:
    """Expectation value on a density matrix (2-D) or a probability vector (1-D)."""
    if isinstance(spec, str):
        spec = ObservableSpec.parse(spec)
    state = np.asarray(state)
    n_sites, levels = infer_lattice(state.shape[0], levels)
    if state.ndim == 1:
        if not spec.is_diagonal:
            raise IncompatibleObservableError(
                f"{spec.name} needs coherences; a probability vector has none")
        p = np.real(state)
    elif state.ndim == 2:
        if spec.kind == "sigma_x_mean":
            return sigma_x_mean(state, n_sites, levels)
        p = np.real(np.diagonal(state))
    else:
        raise DimensionError("state must be a vector or a square matrix")
    if spec.kind == "density_fluctuations":
        dens = basis.rydberg_occupations(n_sites, levels).mean(axis=1)
        m1 = float(p @ dens)
        return float(p @ dens ** 2 - m1 ** 2)
    return float(p @ diagonal_values(spec, n_sites, levels, boundary))


def site_observable_matrix(op, k, n_sites, levels=2):
    """Dense matrix of a single-site operator (for admissibility checks)."""
    from .operators import site_operator
    return site_operator(op, k, n_sites, levels).toarray()


def is_reduced_admissible(observable_matrix, P, tol: float = 1e-10) -> bool:
    """True when ``O = P^dagger O`` under the row-major vectorisation used by the oracle."""
    O = np.asarray(observable_matrix, dtype=complex)
    P = np.asarray(P)
    if P.shape[0] != O.size:
        raise DimensionError("projector and observable dimensions do not match")
    back = (P.conj().T @ O.reshape(-1)).reshape(O.shape)
    return bool(np.linalg.norm(O - back) < tol)
