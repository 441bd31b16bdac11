"""Classical configuration basis and the diagonal energy landscape.

Configurations are words of per-site digits with site 0 as the most
significant digit.  Two-level digits: 0 = down, 1 = up (Rydberg).
Three-level digits follow the (up, intermediate, down) matrix convention:
0 = up, 1 = intermediate, 2 = down.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import DimensionError, InvalidSpecError
from .model import InteractionMatrix

DOWN, UP = 0, 1
UP3, MID3, DOWN3 = 0, 1, 2


def n_states(n_sites: int, levels: int = 2) -> int:
    return levels ** n_sites


def encode(config, levels: int = 2) -> int:
    """Index of a configuration word; inverse of :func:`decode`."""
    idx = 0
    for digit in config:
        digit = int(digit)
        if not 0 <= digit < levels:
            raise InvalidSpecError(f"digit {digit} outside alphabet of size {levels}")
        idx = idx * levels + digit
    return idx


def decode(index: int, n_sites: int, levels: int = 2) -> tuple[int, ...]:
    if not 0 <= index < levels ** n_sites:
        raise InvalidSpecError(f"index {index} out of range for {n_sites} sites")
    digits = []
    for _ in range(n_sites):
        index, r = divmod(index, levels)
        digits.append(r)
    return tuple(reversed(digits))


@lru_cache(maxsize=32)
def _digits(n_sites: int, levels: int) -> np.ndarray:
    idx = np.arange(levels ** n_sites)
    powers = levels ** np.arange(n_sites - 1, -1, -1)
    out = (idx[:, None] // powers[None, :]) % levels
    out = out.astype(np.int8)
    out.setflags(write=False)
    return out


def digits(n_sites: int, levels: int = 2) -> np.ndarray:
    """Read-only table of shape ``(levels**N, N)`` with every configuration's digits."""
    return _digits(n_sites, levels)


def rydberg_occupations(n_sites: int, levels: int = 2) -> np.ndarray:
    """Float table ``n_k(config)`` of Rydberg occupations, shape ``(levels**N, N)``."""
    d = digits(n_sites, levels)
    if levels == 2:
        return (d == UP).astype(float)
    if levels == 3:
        return (d == UP3).astype(float)
    raise InvalidSpecError("levels must be 2 or 3")


def flip_mask(n_sites: int, k: int) -> int:
    """XOR mask flipping site ``k`` of a two-level configuration index."""
    return 1 << (n_sites - 1 - k)


def check_dimension(n_sites: int, levels: int, limit: int, what: str) -> None:
    if n_sites > limit:
        raise DimensionError(
            f"{what} supports at most N={limit} sites for {levels}-level atoms, got N={n_sites}")


def _config_occupations(config, levels: int) -> np.ndarray:
    c = np.asarray(config, dtype=int)
    if levels == 2:
        return (c == UP).astype(float)
    return (c == UP3).astype(float)


def interaction_field_h(config, site: int, interactions: InteractionMatrix, detuning: float,
                        levels: int = 2) -> float:
    """Energy cost of exciting ``site`` given the rest of ``config``.

    Equals ``detuning + sum_{q != site} V[site, q] n_q``; the occupation of
    ``site`` itself does not enter.
    """
    n = interactions.n_sites
    if len(config) != n:
        raise InvalidSpecError("configuration length does not match interactions")
    if not 0 <= site < n:
        raise InvalidSpecError(f"site {site} out of range")
    occ = _config_occupations(config, levels)
    occ[site] = 0.0
    return float(detuning + interactions.values[site] @ occ)


def pair_field_h(config, k: int, m: int, n_k: int, n_m: int, interactions: InteractionMatrix,
                 detuning: float, levels: int = 2) -> float:
    """Energy of ``config`` with sites k, m forced to (n_k, n_m), relative to (0, 0)."""
    n = interactions.n_sites
    if k == m:
        raise InvalidSpecError("pair field requires two distinct sites")
    if not (0 <= k < n and 0 <= m < n):
        raise InvalidSpecError("site out of range")
    occ = _config_occupations(config, levels)
    occ[k] = occ[m] = 0.0
    v = interactions.values
    return float(detuning * (n_k + n_m) + n_k * (v[k] @ occ) + n_m * (v[m] @ occ)
                 + v[k, m] * n_k * n_m)


def diagonal_energies(interactions: InteractionMatrix, detuning: float, levels: int = 2) -> np.ndarray:
    """Eigenvalues of the classical Hamiltonian on every basis configuration."""
    occ = rydberg_occupations(interactions.n_sites, levels)
    return detuning * occ.sum(axis=1) + 0.5 * np.einsum("ak,km,am->a", occ, interactions.values, occ)


def local_fields(interactions: InteractionMatrix, detuning: float) -> np.ndarray:
    """Table ``h[c, k] = detuning + sum_{q != k} V_kq n_q(c)`` over two-level configurations."""
    occ = rydberg_occupations(interactions.n_sites, 2)
    return detuning + occ @ interactions.values
