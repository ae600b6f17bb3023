"""Probability densities, potentials, the Gibbs density and norms."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NonpositiveEntry, OverflowInExp, UnsupportedExponent, ValidationError
from .graph import WeightedGraph


def _readonly(values) -> np.ndarray:
    a = np.array(values, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Density:
    """Strictly positive density with ``sum_i pi_i rho_i = 1``.

    ``norm`` is ``sum_i pi_i v_i`` of the unnormalised input, so the
    rescaling factor applied was ``1 / norm``.  For a Gibbs density this is
    the normaliser ``K_gibbs``.
    """

    values: np.ndarray
    norm: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    @property
    def min_value(self) -> float:
        """Distance to the boundary of the simplex, ``min_i rho_i``."""
        return float(self.values.min())

    def mass(self, g: WeightedGraph) -> float:
        return float(g.measure @ self.values)


@dataclass(frozen=True, eq=False)
class Potential:
    """Vertex potential with its Lipschitz constant over edges."""

    values: np.ndarray
    lipschitz: float = field(default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _values(x) -> np.ndarray:
    return np.asarray(x.values if hasattr(x, "values") else x, dtype=float)


def make_density(values, g: WeightedGraph) -> Density:
    """Normalise positive vertex values into a density on ``g``.

    Raises
    ------
    NonpositiveEntry
        If any value is zero, negative or not finite.
    """
    v = np.asarray(values, dtype=float)
    if v.shape != (g.n,):
        raise ValidationError(f"density has shape {v.shape}, expected ({g.n},)")
    bad = ~(np.isfinite(v) & (v > 0))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise NonpositiveEntry(f"density entry {i} is {v[i]!r}; entries must be > 0")
    norm = float(g.measure @ v)
    return Density(v / norm, norm)


def make_potential(values, g: WeightedGraph, bound: float | None = None) -> Potential:
    """Wrap vertex values as a :class:`Potential`, computing ``C_Psi``.

    A warning is emitted when ``bound`` is given and exceeded.
    """
    v = np.asarray(values, dtype=float)
    if v.shape != (g.n,):
        raise ValidationError(f"potential has shape {v.shape}, expected ({g.n},)")
    if not np.all(np.isfinite(v)):
        raise ValidationError("potential entries must be finite")
    lip = float(np.max(np.abs(v[g.tails] - v[g.heads]))) if g.n_edges else 0.0
    if bound is not None and lip > bound:
        warnings.warn(f"potential Lipschitz constant {lip:g} exceeds bound {bound:g}")
    return Potential(v, lip)


def zero_potential(g: WeightedGraph) -> Potential:
    return Potential(np.zeros(g.n), 0.0)


def potential_from_distance(g: WeightedGraph, c: float) -> Potential:
    """``Psi_i = c * d(root, i)``, the canonical admissible potential family."""
    if c < 0:
        raise ValidationError("slope must be nonnegative")
    if c == 0:
        warnings.warn(
            "zero slope gives Psi = 0; Gibbs summability on the infinite family fails"
        )
    return make_potential(c * g.root_distance.astype(float), g)


def log_gibbs_normalizer(g: WeightedGraph, psi) -> float:
    """``log K_gibbs`` with ``K_gibbs = sum_j pi_j exp(-Psi_j)``, computed stably."""
    p = _values(psi)
    shift = p.min()
    return float(np.log(g.measure @ np.exp(-(p - shift))) - shift)


def gibbs_density(g: WeightedGraph, psi) -> Density:
    """Gibbs density ``exp(-Psi) / K_gibbs``; ``.norm`` holds ``K_gibbs``.

    The potential is shifted by its minimum before exponentiation, which
    leaves the normalised density unchanged.
    """
    p = _values(psi)
    if not np.all(np.isfinite(p)):
        raise ValidationError("potential entries must be finite")
    shift = p.min()
    with np.errstate(under="ignore"):
        e = np.exp(-(p - shift))
    if np.any(e == 0):
        raise OverflowInExp(
            "exp(-Psi) underflows to zero after shifting; potential range too large"
        )
    z = float(g.measure @ e)
    with np.errstate(over="ignore", under="ignore"):
        k = z * np.exp(-shift)
    return Density(e / z, float(k))


def second_moment(rho, g: WeightedGraph) -> float:
    """``sum_i pi_i rho_i d(root, i)^2``."""
    d = g.root_distance.astype(float)
    return float(g.measure @ (_values(rho) * d * d))


def _check_exponent(r):
    if r in ("inf", "infinity") or (isinstance(r, (float, int)) and np.isinf(r)):
        return np.inf
    if isinstance(r, (float, np.floating)) and float(r).is_integer():
        r = int(r)
    if not isinstance(r, (int, np.integer)) or r < 2 or r % 2:
        raise UnsupportedExponent(
            f"exponent {r!r} unsupported; use an even integer >= 2 or infinity"
        )
    return int(r)


def lr_norm(rho, sigma, r, g: WeightedGraph) -> float:
    """``l^r(V, pi)`` distance between two vertex functions.

    ``r`` must be an even integer or ``inf``; for ``inf`` the plain
    maximum of ``|rho_i - sigma_i|`` is returned.
    """
    r = _check_exponent(r)
    diff = np.abs(_values(rho) - _values(sigma))
    if r == np.inf:
        return float(diff.max())
    scale = diff.max()
    if scale == 0:
        return 0.0
    # factor out the max to avoid underflow of diff**r
    return float(scale * (g.measure @ (diff / scale) ** r) ** (1.0 / r))
