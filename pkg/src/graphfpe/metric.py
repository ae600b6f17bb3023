"""Tangent-space geometry: the metric tensor, Hodge splitting and W2.

The squared distance is the minimal action

    A[rho] = int_0^1 g_rho(rho', rho') dt,   g_rho(s, s) = <s, B_rho^+ s>_pi

over positive density paths.  Paths are discretised by ``M`` segments with
midpoint evaluation of the metric; interior states are parametrised by
unconstrained log-coordinates normalised onto the simplex, so every
iterate stays strictly inside it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import ContinuityViolation, NotInTangentSpace, SolverFailure, ValidationError
from .graph import WeightedGraph
from .operators import (
    BSolver,
    EdgeField,
    check_tangent,
    edge_log_mean,
    gradient,
    inner_pi,
    log_mean,
    log_mean_partials,
    weighted_divergence,
)

log = logging.getLogger(__name__)


def _vals(x) -> np.ndarray:
    return np.asarray(x.values if hasattr(x, "values") else x, dtype=float)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Perturbation ``sigma`` with zero pi-weighted sum."""

    values: np.ndarray

    @classmethod
    def on(cls, g: WeightedGraph, values) -> "TangentVector":
        return cls(check_tangent(values, g))


def inner_g(rho, s1, s2, g: WeightedGraph) -> float:
    """Metric tensor ``<s1, B_rho^+ s2>_pi`` on the tangent space at ``rho``."""
    a = check_tangent(s1, g)
    b = check_tangent(s2, g)
    return inner_pi(a, BSolver(rho, g).solve(b), g)


def inner_g_edges(rho, s1, s2, g: WeightedGraph) -> float:
    """Same metric evaluated as ``sum over edges of w (dp1)(dp2) rho_hat``."""
    solver = BSolver(rho, g)
    p1 = solver.solve(s1)
    p2 = solver.solve(s2)
    return float(
        np.sum(
            g.weights
            * (p1[g.tails] - p1[g.heads])
            * (p2[g.tails] - p2[g.heads])
            * edge_log_mean(rho, g)
        )
    )


def hodge_decompose(rho, v: EdgeField, g: WeightedGraph, tol: float = 1e-10):
    """Split ``v = grad p + u`` with ``div(rho u) = 0``.

    Returns the mean-zero potential ``p`` and the divergence-free part ``u``.

    Raises
    ------
    SolverFailure
        If the remainder is not divergence-free to ``tol`` (relative to
        the size of ``div(rho v)``).
    """
    div_v = weighted_divergence(rho, v, g)
    p = BSolver(rho, g).solve(-div_v, check=False)
    u = EdgeField(g, v.values - gradient(p, g).values)
    resid = float(np.max(np.abs(weighted_divergence(rho, u, g))))
    scale = max(1.0, float(np.max(np.abs(div_v))))
    if resid > tol * scale:
        raise SolverFailure(f"div(rho u) = {resid:.3e} after Hodge projection")
    return p, u


@dataclass
class DensityPath:
    """Discrete density path with ``M + 1`` states and ``M`` segment controls."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or len(self.times) != len(self.states):
            raise ValidationError("times and states must have matching lengths")
        if len(self.times) < 2 or np.any(np.diff(self.times) <= 0):
            raise ValidationError("path times must be strictly increasing with >= 2 samples")
        if np.any(~(self.states > 0)):
            raise ValidationError("path states must be strictly positive")

    @property
    def segments(self) -> int:
        return len(self.times) - 1

    @classmethod
    def linear(cls, r0, r1, segments: int) -> "DensityPath":
        t = np.linspace(0.0, 1.0, segments + 1)
        a, b = _vals(r0), _vals(r1)
        return cls(t, (1 - t)[:, None] * a + t[:, None] * b)


def segment_controls(path: DensityPath, g: WeightedGraph) -> np.ndarray:
    """Mean-zero ``p_k`` solving ``B_{mid} p_k = (rho_{k+1} - rho_k) / dt_k``."""
    out = np.empty((path.segments, g.n))
    for k in range(path.segments):
        dt = path.times[k + 1] - path.times[k]
        mid = 0.5 * (path.states[k] + path.states[k + 1])
        out[k] = BSolver(mid, g).solve((path.states[k + 1] - path.states[k]) / dt)
    return out


def action(path: DensityPath, g: WeightedGraph, tol: float = 1e-8) -> float:
    """Midpoint discretisation of ``int g_rho(rho', rho') dt`` along ``path``.

    When the path carries controls, each must satisfy the discrete
    continuity equation ``(rho_{k+1} - rho_k)/dt = B_mid p_k`` to ``tol``
    relative to the segment velocity, else :class:`ContinuityViolation`.
    """
    total = 0.0
    for k in range(path.segments):
        dt = path.times[k + 1] - path.times[k]
        mid = 0.5 * (path.states[k] + path.states[k + 1])
        sigma = (path.states[k + 1] - path.states[k]) / dt
        try:
            check_tangent(sigma, g, tol=max(tol, 1e-10))
        except NotInTangentSpace as exc:
            raise ContinuityViolation(f"segment {k} changes mass: {exc}") from None
        solver = BSolver(mid, g)
        if path.controls is not None:
            p = path.controls[k]
            resid = np.max(np.abs(solver.matrix @ p / g.measure - sigma))
            scale = max(float(np.max(np.abs(sigma))), 1e-300)
            if resid > tol * scale:
                raise ContinuityViolation(
                    f"segment {k}: continuity residual {resid:.3e} exceeds tolerance"
                )
        else:
            p = solver.solve(sigma, check=False)
        total += dt * inner_pi(sigma, p, g)
    return total


# ---------------------------------------------------------------------------
# W2 by action minimisation


@dataclass
class W2Options:
    """Optimiser settings; convergence needs both thresholds met."""

    segments: int = 64
    action_tol: float = 1e-10
    grad_tol: float = 1e-7
    maxiter: int = 5000


@dataclass
class W2Result:
    value: float
    path: DensityPath
    iterations: int
    converged: bool
    action_history: list[float] = field(default_factory=list)
    grad_norm: float = 0.0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "action_history": list(self.action_history),
        }


class _PathAction:
    """Discrete action and its gradient in log-coordinates of interior states."""

    def __init__(self, r0, r1, g: WeightedGraph, segments: int):
        self.g = g
        self.M = segments
        self.r0 = _vals(r0)
        self.r1 = _vals(r1)
        n = g.n
        self.inc = np.zeros((g.n_edges, n))
        self.inc[np.arange(g.n_edges), g.heads] = 1.0
        self.inc[np.arange(g.n_edges), g.tails] = 1.0
        self.diag = np.arange(n)

    def states(self, x: np.ndarray) -> np.ndarray:
        g = self.g
        X = x.reshape(self.M - 1, g.n)
        E = np.exp(X - X.max(axis=1, keepdims=True))
        inner = E / (E @ g.measure)[:, None]
        return np.vstack([self.r0, inner, self.r1])

    def solve(self, full: np.ndarray):
        """Per-segment potentials (vertex 0 grounded) for the state array."""
        g = self.g
        M = self.M
        mid = 0.5 * (full[:-1] + full[1:])
        delta = full[1:] - full[:-1]
        cond = g.weights * log_mean(mid[:, g.heads], mid[:, g.tails])
        lap = np.zeros((M, g.n, g.n))
        lap[:, g.heads, g.tails] = -cond
        lap[:, g.tails, g.heads] = -cond
        lap[:, self.diag, self.diag] = cond @ self.inc
        rhs = delta * g.measure
        # project out roundoff drift of the pi-mass before grounding
        rhs -= np.outer(rhs.sum(axis=1), g.measure / g.measure.sum())
        p = np.zeros((M, g.n))
        p[:, 1:] = np.linalg.solve(lap[:, 1:, 1:], rhs[:, 1:, None])[..., 0]
        return mid, rhs, p

    def __call__(self, x: np.ndarray):
        g = self.g
        M = self.M
        full = self.states(x)
        mid, rhs, p = self.solve(full)
        seg = np.einsum("ki,ki->k", rhs, p) * M  # g(delta, delta) / dt
        value = float(seg.sum())

        grad_delta = 2.0 * M * g.measure * p
        dp2 = (p[:, g.tails] - p[:, g.heads]) ** 2
        da, db = log_mean_partials(mid[:, g.heads], mid[:, g.tails])
        grad_mid = np.zeros((M, g.n))
        coef = -M * g.weights * dp2
        np.add.at(grad_mid.T, g.heads, (coef * da).T)
        np.add.at(grad_mid.T, g.tails, (coef * db).T)

        G = np.zeros((M + 1, g.n))
        G[:-1] += -grad_delta + 0.5 * grad_mid
        G[1:] += grad_delta + 0.5 * grad_mid
        rho = full[1:-1]
        Gi = G[1:-1]
        gx = Gi * rho - (g.measure * rho) * np.sum(Gi * rho, axis=1, keepdims=True)
        return value, gx.ravel()


def w2_distance(r0, r1, g: WeightedGraph, options: W2Options | None = None) -> W2Result:
    """Wasserstein-type distance between two positive densities.

    Minimises the discrete action over interior states with L-BFGS,
    starting from the linear interpolation.  Returns the square root of
    the minimal action together with the minimising path.  When the
    convergence thresholds are not met, the best value found is returned
    with ``converged=False``.
    """
    opt = options or W2Options()
    a, b = _vals(r0), _vals(r1)
    if a.shape != (g.n,) or b.shape != (g.n,):
        raise ValidationError("densities must live on the given graph")
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise ValidationError("densities must be strictly positive")
    M = int(opt.segments)
    if M < 1:
        raise ValidationError("need at least one segment")
    times = np.linspace(0.0, 1.0, M + 1)

    if np.array_equal(a, b):
        path = DensityPath(times, np.tile(a, (M + 1, 1)), np.zeros((M, g.n)))
        return W2Result(0.0, path, 0, True, [0.0], 0.0)

    fun = _PathAction(a, b, g, M)
    if M == 1:
        value, _ = fun(np.zeros(0))
        path = DensityPath(times, np.vstack([a, b]))
        path.controls = segment_controls(path, g)
        return W2Result(float(np.sqrt(max(value, 0.0))), path, 0, True, [value], 0.0)

    x0 = np.log(DensityPath.linear(a, b, M).states[1:-1]).ravel()
    history = [fun(x0)[0]]

    def callback(intermediate_result):
        history.append(float(intermediate_result.fun))

    res = minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={"maxiter": opt.maxiter, "ftol": 1e-16, "gtol": 1e-12, "maxcor": 30},
    )
    value, grad = fun(res.x)
    gnorm = float(np.max(np.abs(grad)))
    last_drop = history[-2] - history[-1] if len(history) > 1 else 0.0
    converged = gnorm < opt.grad_tol and last_drop < opt.action_tol
    if not converged:
        log.warning(
            "W2 optimiser stopped without convergence: |grad|=%.2e, last decrease=%.2e (%s)",
            gnorm, last_drop, res.message,
        )
    full = fun.states(res.x)
    path = DensityPath(times, full)
    path.controls = segment_controls(path, g)
    return W2Result(
        float(np.sqrt(max(value, 0.0))), path, int(res.nit), bool(converged), history, gnorm
    )
