"""Discrete calculus on weighted graphs.

Vertex functions are plain ndarrays of length ``n``.  Edge functions are
:class:`EdgeField` objects that store one value per undirected edge,
oriented from ``heads[e]`` to ``tails[e]``; the reverse orientation is the
negative, so every field is antisymmetric by construction.

On a finite truncation the operators usually written ``A_rho`` and
``B_rho`` coincide, so a single weighted Laplacian ``apply_B`` serves both.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from .errors import NonpositiveArgument, NotInTangentSpace, SolverFailure, ValidationError
from .graph import WeightedGraph

# below this |a - b| / (a + b) the series branch of the log mean is used
_SERIES_DELTA = 1e-3
TANGENT_TOL = 1e-10
SOLVE_TOL = 1e-10


def _vals(x) -> np.ndarray:
    return np.asarray(x.values if hasattr(x, "values") else x, dtype=float)


class EdgeField:
    """Antisymmetric function on oriented edges of ``g``."""

    __slots__ = ("graph", "values")

    def __init__(self, g: WeightedGraph, values):
        v = np.asarray(values, dtype=float)
        if v.shape != (g.n_edges,):
            raise ValidationError(f"edge field has shape {v.shape}, expected ({g.n_edges},)")
        self.graph = g
        self.values = v

    def __repr__(self):
        return f"EdgeField(edges={len(self.values)})"

    def __add__(self, other: "EdgeField") -> "EdgeField":
        return EdgeField(self.graph, self.values + other.values)

    def __sub__(self, other: "EdgeField") -> "EdgeField":
        return EdgeField(self.graph, self.values - other.values)

    def __neg__(self) -> "EdgeField":
        return EdgeField(self.graph, -self.values)

    def __mul__(self, c: float) -> "EdgeField":
        return EdgeField(self.graph, c * self.values)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, g: WeightedGraph) -> "EdgeField":
        return cls(g, np.zeros(g.n_edges))

    @classmethod
    def from_pairs(cls, g: WeightedGraph, pairs) -> "EdgeField":
        """Build from ``(i, j, value)`` triples meaning ``Phi(x_i, x_j) = value``."""
        index = {(int(i), int(j)): e for e, (i, j) in enumerate(zip(g.heads, g.tails))}
        values = np.zeros(g.n_edges)
        for i, j, v in pairs:
            i, j = int(i), int(j)
            if (i, j) in index:
                values[index[(i, j)]] = v
            elif (j, i) in index:
                values[index[(j, i)]] = -v
            else:
                raise ValidationError(f"({i}, {j}) is not an edge")
        return cls(g, values)

    def at(self, i: int, j: int) -> float:
        """``Phi(x_i, x_j)``; zero for non-adjacent pairs."""
        g = self.graph
        hit = np.flatnonzero((g.heads == i) & (g.tails == j))
        if hit.size:
            return float(self.values[hit[0]])
        hit = np.flatnonzero((g.heads == j) & (g.tails == i))
        if hit.size:
            return float(-self.values[hit[0]])
        return 0.0

    def to_text(self) -> str:
        g = self.graph
        return "".join(
            f"{i} {j} {v:.17g}\n" for i, j, v in zip(g.heads, g.tails, self.values)
        )


def log_mean(a, b):
    """Logarithmic mean ``(a - b) / (log a - log b)``, with ``L(a, a) = a``.

    Vectorised over numpy arrays.  For nearly equal arguments the series
    ``m / (1 + d^2/3 + d^4/5 + ...)`` in the midpoint ``m = (a + b)/2`` and
    ``d = (a - b)/(a + b)`` is used; otherwise ``log1p`` of the ratio keeps
    the denominator accurate.  Relative error stays within a few ulps.

    Raises
    ------
    NonpositiveArgument
        If either argument is not strictly positive.
    """
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(~(a_arr > 0)) or np.any(~(b_arr > 0)):
        raise NonpositiveArgument("log mean needs strictly positive arguments")
    a_arr, b_arr = np.broadcast_arrays(a_arr, b_arr)
    s = a_arr + b_arr
    d = (a_arr - b_arr) / s
    small = np.abs(d) < _SERIES_DELTA
    out = np.empty(a_arr.shape)
    d2 = d[small] ** 2
    out[small] = 0.5 * s[small] / (1.0 + d2 * (1 / 3 + d2 * (1 / 5 + d2 * (1 / 7 + d2 / 9))))
    big = ~small
    lo = np.minimum(a_arr[big], b_arr[big])
    hi = np.maximum(a_arr[big], b_arr[big])
    out[big] = (hi - lo) / np.log1p((hi - lo) / lo)
    if out.ndim == 0:
        return float(out)
    return out


def log_mean_partials(a, b):
    """Partial derivatives ``(dL/da, dL/db)`` of the logarithmic mean."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    s = a + b
    d = (a - b) / s
    small = np.abs(d) < _SERIES_DELTA
    da = np.empty(a.shape)
    db = np.empty(a.shape)

    ds = d[small]
    d2 = ds * ds
    h = 1.0 / (1.0 + d2 * (1 / 3 + d2 * (1 / 5 + d2 / 7)))
    hp = -h * h * ds * (2 / 3 + d2 * (4 / 5 + d2 * 6 / 7))
    da[small] = 0.5 * (h + hp * (1 - ds))
    db[small] = 0.5 * (h - hp * (1 + ds))

    big = ~small
    ab, bb = a[big], b[big]
    L = log_mean(ab, bb)
    da[big] = L / (ab - bb) * (1 - L / ab)
    db[big] = L / (bb - ab) * (1 - L / bb)
    return da, db


def edge_log_mean(rho, g: WeightedGraph) -> np.ndarray:
    """``rho_hat`` on every edge of ``g``."""
    r = _vals(rho)
    return np.asarray(log_mean(r[g.heads], r[g.tails])).reshape(g.n_edges)


def gradient(p, g: WeightedGraph) -> EdgeField:
    """``grad p (x_i, x_j) = p_j - p_i`` on edges."""
    p = _vals(p)
    return EdgeField(g, p[g.tails] - p[g.heads])


def _scatter(g: WeightedGraph, flux: np.ndarray) -> np.ndarray:
    """``out_i = sum_j F(x_i, x_j) / pi_i`` for an antisymmetric edge flux ``F``."""
    out = np.zeros(g.n)
    np.add.at(out, g.heads, flux)
    np.add.at(out, g.tails, -flux)
    return out / g.measure


def divergence(phi: EdgeField, g: WeightedGraph) -> np.ndarray:
    """``div Phi (x_i) = sum_j (w_ij / pi_i) Phi(x_i, x_j)``."""
    return _scatter(g, g.weights * phi.values)


def laplacian(p, g: WeightedGraph) -> np.ndarray:
    """pi-Laplacian ``sum_j (w_ij / pi_i)(p_j - p_i)`` over retained edges."""
    p = _vals(p)
    return (g.weight_matrix @ p - g.weighted_degree * p) / g.measure


def weighted_divergence(rho, phi: EdgeField, g: WeightedGraph) -> np.ndarray:
    """``div(rho Phi)(x_i) = sum_j (w_ij / pi_i) Phi(x_i, x_j) rho_hat(x_i, x_j)``."""
    return _scatter(g, g.weights * phi.values * edge_log_mean(rho, g))


def laplacian_logform(rho, g: WeightedGraph) -> np.ndarray:
    """pi-Laplacian of a positive density written through log differences."""
    r = _vals(rho)
    if np.any(~(r > 0)):
        raise NonpositiveArgument("log form needs a strictly positive density")
    logr = np.log(r)
    return _scatter(g, g.weights * (logr[g.tails] - logr[g.heads]) * edge_log_mean(r, g))


def inner_rho(phi: EdgeField, psi: EdgeField, rho, g: WeightedGraph) -> float:
    """Weighted edge inner product ``sum over edges of w Phi Psi rho_hat``."""
    return float(np.sum(g.weights * phi.values * psi.values * edge_log_mean(rho, g)))


def inner_pi(f, h, g: WeightedGraph) -> float:
    """``<f, h>_pi = sum_i f_i h_i pi_i``."""
    return float(np.sum(_vals(f) * _vals(h) * g.measure))


def apply_B(rho, p, g: WeightedGraph) -> np.ndarray:
    """``B_rho p = -div(rho grad p)``."""
    return -weighted_divergence(rho, gradient(p, g), g)


def conductance_laplacian(conductance: np.ndarray, g: WeightedGraph) -> sp.csr_matrix:
    """Symmetric Laplacian ``sum_e c_e (e_i - e_j)(e_i - e_j)^T``."""
    n = g.n
    rows = np.concatenate([g.heads, g.tails, g.heads, g.tails])
    cols = np.concatenate([g.tails, g.heads, g.heads, g.tails])
    vals = np.concatenate([-conductance, -conductance, conductance, conductance])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def weighted_laplacian_matrix(rho, g: WeightedGraph) -> sp.csr_matrix:
    """Symmetric ``L_rho`` with ``B_rho = diag(pi)^-1 L_rho``."""
    return conductance_laplacian(g.weights * edge_log_mean(rho, g), g)


def check_tangent(sigma, g: WeightedGraph, tol: float = TANGENT_TOL) -> np.ndarray:
    """Return ``sigma`` as an array after checking ``sum_i pi_i sigma_i = 0``."""
    s = _vals(sigma)
    total = float(g.measure @ s)
    scale = max(1.0, float(g.measure @ np.abs(s)))
    if abs(total) > tol * scale:
        raise NotInTangentSpace(
            f"pi-weighted sum {total:.3e} exceeds tolerance {tol * scale:.1e}"
        )
    return s


class BSolver:
    """Factorised gauge-fixed pseudo-inverse of ``B_rho`` for one density.

    Vertex 0 is grounded to remove the constant kernel; the solution is then
    shifted to zero pi-mean, the canonical representative of its class.
    """

    def __init__(self, rho, g: WeightedGraph, tol: float = SOLVE_TOL):
        self.graph = g
        self.rho = _vals(rho)
        self.tol = tol
        self.matrix = weighted_laplacian_matrix(self.rho, g)
        reduced = self.matrix[1:, 1:].tocsc()
        self._solve = factorized(reduced)

    def _raw(self, rhs: np.ndarray) -> np.ndarray:
        p = np.zeros(self.graph.n)
        p[1:] = self._solve(rhs[1:])
        return p

    def solve(self, sigma, check: bool = True) -> np.ndarray:
        g = self.graph
        s = check_tangent(sigma, g) if check else _vals(sigma)
        s = s - (g.measure @ s) / g.measure.sum()
        smax = float(np.max(np.abs(s)))
        if smax == 0:
            return np.zeros(g.n)
        rhs = g.measure * s
        p = self._raw(rhs)
        res = rhs - self.matrix @ p
        if np.max(np.abs(res / g.measure)) > self.tol * smax:
            p += self._raw(res)  # one refinement step
            res = rhs - self.matrix @ p
        err = float(np.max(np.abs(res / g.measure)))
        if not np.isfinite(err) or err > self.tol * smax:
            raise SolverFailure(f"B_rho solve residual {err:.3e} exceeds {self.tol * smax:.1e}")
        return p - (g.measure @ p) / g.measure.sum()


def solve_B_inverse(rho, sigma, g: WeightedGraph, tol: float = SOLVE_TOL) -> np.ndarray:
    """Mean-zero ``p`` with ``B_rho p = sigma``.

    Raises
    ------
    NotInTangentSpace
        If ``sigma`` does not have zero pi-weighted sum.
    SolverFailure
        If the relative residual exceeds ``tol``.
    """
    return BSolver(rho, g, tol).solve(sigma)
