"""Lattice geometry, pair interactions and physical parameter sets.

Energies are measured in units of the Rabi frequency (``Omega`` for the
two-level scheme, ``Omega_c`` for the three-level scheme) and times in the
corresponding inverse units; hbar = 1 throughout.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpecError

BOUNDARIES = ("periodic", "open")


@dataclass(frozen=True)
class LatticeSpec:
    """A one-dimensional chain with power-law interactions.

    ``nn_strength_V`` is the coupling between nearest neighbours; a pair at
    distance ``d`` interacts with ``V / d**exponent_p``.  ``range_cutoff``
    drops every pair further apart than the given number of sites (``1``
    yields a pure nearest-neighbour model); ``None`` keeps the full tail.
    """

    n_sites: int
    exponent_p: int = 6
    nn_strength_V: float = 0.0
    boundary: str = "periodic"
    range_cutoff: int | None = None

    def __post_init__(self):
        if not isinstance(self.n_sites, (int, np.integer)) or self.n_sites < 1:
            raise InvalidSpecError(f"n_sites must be a positive integer, got {self.n_sites!r}")
        if self.boundary not in BOUNDARIES:
            raise InvalidSpecError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if self.exponent_p not in (3, 6):
            warnings.warn(f"unusual interaction exponent p={self.exponent_p}", stacklevel=3)
        if self.exponent_p <= 0:
            raise InvalidSpecError("exponent_p must be positive")
        if self.range_cutoff is not None and self.range_cutoff < 1:
            raise InvalidSpecError("range_cutoff must be >= 1 or None")

    def distance(self, k: int, m: int) -> int:
        d = abs(k - m)
        if self.boundary == "periodic":
            d = min(d, self.n_sites - d)
        return d

    def neighbours(self, k: int) -> list[int]:
        """Nearest neighbours of site ``k`` (one or two sites, deduplicated)."""
        n = self.n_sites
        if self.boundary == "periodic":
            cand = [(k - 1) % n, (k + 1) % n]
        else:
            cand = [q for q in (k - 1, k + 1) if 0 <= q < n]
        return sorted({q for q in cand if q != k})


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Symmetric matrix of pair couplings ``V_km`` with zero diagonal.

    Arbitrary geometries can be supplied directly through ``values``; chains
    built by :func:`build_chain_interactions` also remember their
    :class:`LatticeSpec`.
    """

    values: np.ndarray
    lattice: LatticeSpec | None = field(default=None)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise InvalidSpecError("interaction matrix must be square")
        if v.shape[0] < 1:
            raise InvalidSpecError("interaction matrix must describe at least one site")
        if not np.allclose(v, v.T, rtol=0, atol=1e-12 * max(1.0, np.abs(v).max())):
            raise InvalidSpecError("interaction matrix must be symmetric")
        if np.any(np.diag(v) != 0):
            raise InvalidSpecError("interaction matrix must have zero diagonal")
        v = 0.5 * (v + v.T)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.lattice is not None and self.lattice.n_sites != v.shape[0]:
            raise InvalidSpecError("lattice size does not match interaction matrix")

    @property
    def n_sites(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, idx):
        return self.values[idx]

    def neighbours(self, k: int) -> list[int]:
        if self.lattice is not None:
            return self.lattice.neighbours(k)
        raise InvalidSpecError("nearest neighbours are only defined for chain lattices")


def build_chain_interactions(spec: LatticeSpec) -> InteractionMatrix:
    """Power-law couplings ``V / d(k, m)**p`` on a 1-D chain."""
    n = spec.n_sites
    if n < 1:
        raise InvalidSpecError("n_sites must be >= 1")
    k, m = np.indices((n, n))
    d = np.abs(k - m)
    if spec.boundary == "periodic":
        d = np.minimum(d, n - d)
    values = np.zeros((n, n))
    off = d > 0
    values[off] = spec.nn_strength_V / d[off].astype(float) ** spec.exponent_p
    if spec.range_cutoff is not None:
        values[d > spec.range_cutoff] = 0.0
    return InteractionMatrix(values, lattice=spec)


@dataclass(frozen=True)
class DephasingParams:
    """Two-level atoms: Rabi drive, detuning, dephasing and radiative decay."""

    rabi_omega: float = 1.0
    detuning: float = 0.0
    dephasing_gamma: float = 10.0
    decay_gamma_ryd: float = 0.0

    def __post_init__(self):
        if not self.rabi_omega > 0:
            raise InvalidSpecError("rabi_omega must be > 0")
        if self.dephasing_gamma < 0 or self.decay_gamma_ryd < 0:
            raise InvalidSpecError("dissipation rates must be >= 0")
        if not self.perturbative:
            warnings.warn(
                f"dephasing gamma={self.dephasing_gamma} < 5*Omega: effective rate equations "
                "are outside their perturbative regime", stacklevel=3)
        if self.decay_gamma_ryd > self.dephasing_gamma / 10:
            warnings.warn("decay_gamma_ryd > gamma/10: perturbative decay treatment is questionable",
                          stacklevel=3)

    @property
    def perturbative(self) -> bool:
        return self.dephasing_gamma >= 5 * self.rabi_omega


@dataclass(frozen=True)
class EitParams:
    """Three-level ladder under EIT conditions."""

    omega_p: float = 1.0
    omega_c: float = 1.0
    detuning: float = 0.0
    decay_Gamma: float = 100.0

    def __post_init__(self):
        if self.omega_p < 0 or self.omega_c < 0:
            raise InvalidSpecError("Rabi frequencies must be >= 0")
        if not self.decay_Gamma > 0:
            raise InvalidSpecError("decay_Gamma must be > 0")
        if not self.valid:
            warnings.warn("decay_Gamma < 10*max(Omega_p, Omega_c): reduced EIT dynamics is "
                          "outside its perturbative regime", stacklevel=3)

    @property
    def valid(self) -> bool:
        return self.decay_Gamma >= 10 * max(self.omega_p, self.omega_c)
