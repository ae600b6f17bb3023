"""Fokker-Planck dynamics on weighted graphs.

The right-hand side

    d rho_i / dt = sum_j (w_ij / pi_i) [(Psi_j + log rho_j) - (Psi_i + log rho_i)] rho_hat_ij

is integrated with an adaptive embedded Runge-Kutta pair (Dormand-Prince
5(4)) or a linearly implicit Euler scheme with step doubling.  Both
conserve the pi-mass exactly up to roundoff because every stage lies in
the tangent space; mass is measured, never renormalised.

On absorbing truncations the removed neighbours act as vacuum: the limit
of the edge flux towards a zero density is ``-rho_i``, which adds the
sink ``-(deficit_i / pi_i) rho_i``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply, spsolve

from .density import gibbs_density, lr_norm, second_moment
from .energy import free_energy_derivative, free_energy_value
from .errors import NonpositiveArgument, StepSizeUnderflow, ValidationError
from .graph import WeightedGraph
from .operators import (
    _scatter,
    apply_B,
    edge_log_mean,
    gradient,
    laplacian,
    weighted_divergence,
    weighted_laplacian_matrix,
)

log = logging.getLogger(__name__)


def _vals(x) -> np.ndarray:
    return np.asarray(x.values if hasattr(x, "values") else x, dtype=float)


def _sink(r: np.ndarray, g: WeightedGraph) -> np.ndarray:
    return g.deficit / g.measure * r


def fpe_rhs(rho, psi, g: WeightedGraph) -> np.ndarray:
    """Right-hand side in log-potential form."""
    r = _vals(rho)
    if np.any(~(r > 0)):
        raise NonpositiveArgument("Fokker-Planck right-hand side needs rho > 0")
    mu = _vals(psi) + np.log(r)
    out = _scatter(g, g.weights * (mu[g.tails] - mu[g.heads]) * edge_log_mean(r, g))
    if g.mode.value == "absorbing":
        out -= _sink(r, g)
    return out


def fpe_rhs_two_term(rho, psi, g: WeightedGraph) -> np.ndarray:
    """``div(rho grad Psi) + Laplacian(rho)``, the drift-plus-diffusion form."""
    r = _vals(rho)
    out = weighted_divergence(r, gradient(psi, g), g) + laplacian(r, g)
    if g.mode.value == "absorbing":
        out -= _sink(r, g)
    return out


def gradient_flow_rhs(rho, psi, g: WeightedGraph) -> np.ndarray:
    """``-B_rho (dF/drho)`` on the retained graph (no absorbing sink)."""
    return -apply_B(rho, free_energy_derivative(rho, psi, g), g)


def dissipation(rho, psi, g: WeightedGraph) -> float:
    """``g_rho(dF, dF) = <dF, B_rho dF>_pi``, the rate of free-energy decrease."""
    d = free_energy_derivative(rho, psi, g)
    return float(g.measure @ (d * apply_B(rho, d, g)))


# ---------------------------------------------------------------------------
# integration

METHODS = ("rk45", "semi-implicit")


@dataclass
class IntegratorConfig:
    """Time-stepping controls.

    ``record_every`` is a time interval; states are recorded on the grid
    ``0, h, 2h, ...`` and at the horizon.  ``None`` records every accepted
    step.  ``equilibrium_tol`` defaults to ``atol``.
    """

    method: str = "rk45"
    rtol: float = 1e-10
    atol: float = 1e-13
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    dt_max: float = 1.0
    positivity_floor: float = 0.5
    horizon: float = 10.0
    record_every: float | None = 0.1
    exponents: tuple = (2, 4, 8, math.inf)
    equilibrium_tol: float | None = None
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValidationError("rtol and atol must be positive")
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValidationError("need 0 < dt_min <= dt_init <= dt_max")
        if not 0 <= self.positivity_floor < 1:
            raise ValidationError("positivity_floor must lie in [0, 1)")
        if not self.horizon > 0:
            raise ValidationError("horizon must be positive")
        if self.record_every is not None and not self.record_every > 0:
            raise ValidationError("record_every must be positive")
        self.exponents = tuple(self.exponents)


def norm_column(r) -> str:
    return "linf_to_gibbs" if r == math.inf else f"l{int(r)}_to_gibbs"


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    diagnostics: dict[str, np.ndarray]
    status: str = "horizon"
    steps: int = 0
    rejected: int = 0
    message: str = ""

    @property
    def reached_equilibrium(self) -> bool:
        return self.status == "equilibrium"

    @property
    def underflow(self) -> bool:
        return self.status == "underflow"

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


# Dormand-Prince 5(4)
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class _Stepper:
    def __init__(self, psi, g, cfg):
        self.psi = _vals(psi)
        self.g = g
        self.cfg = cfg

    def rhs(self, y):
        return fpe_rhs(y, self.psi, self.g)


class _DormandPrince(_Stepper):
    order = 5

    def __init__(self, psi, g, cfg, y0):
        super().__init__(psi, g, cfg)
        self.k_first = self.rhs(y0)

    def attempt(self, y, dt):
        """Return (candidate, error estimate, last stage) or None if a stage left the simplex."""
        k = np.empty((7, len(y)))
        k[0] = self.k_first
        for s in range(1, 7):
            ys = y + dt * (_A[s] @ k[:s])
            if np.any(ys <= 0):
                return None
            k[s] = self.rhs(ys)
        y_new = y + dt * (_B5 @ k)
        err = dt * (_E @ k)
        return y_new, err, k[6]

    def accept(self, last_stage):
        self.k_first = last_stage


class _SemiImplicit(_Stepper):
    """Euler step of the flow linearised in ``log rho``, with step doubling.

    ``(I + dt B_y diag(1/y)) y_new = y - dt B_y (Psi + log y)``; the
    absorbing sink is treated implicitly.  The error estimate is the
    difference between one full and two half steps, so it is of order 2.
    """

    order = 2
    DENSE_LIMIT = 256  # below this size dense LAPACK beats sparse LU

    def _euler(self, y, dt):
        g = self.g
        L = weighted_laplacian_matrix(y, g)
        if g.n <= self.DENSE_LIMIT:
            B = L.toarray() / g.measure[:, None]
            lhs = np.eye(g.n) + dt * (B / y[None, :])
            if g.mode.value == "absorbing":
                lhs[np.diag_indices(g.n)] += dt * g.deficit / g.measure
            rhs = y - dt * (B @ (self.psi + np.log(y)))
            return np.linalg.solve(lhs, rhs)
        B = sp.diags(1.0 / g.measure) @ L
        lhs = sp.identity(g.n) + dt * (B @ sp.diags(1.0 / y))
        if g.mode.value == "absorbing":
            lhs = lhs + dt * sp.diags(g.deficit / g.measure)
        rhs = y - dt * (B @ (self.psi + np.log(y)))
        return spsolve(lhs.tocsc(), rhs)

    def attempt(self, y, dt):
        full = self._euler(y, dt)
        half = self._euler(y, dt / 2)
        if np.any(half <= 0):
            return None
        two = self._euler(half, dt / 2)
        err = two - full
        return two + err, err, None

    def accept(self, last_stage):
        pass


class _Recorder:
    def __init__(self, psi, g, cfg):
        self.psi = _vals(psi)
        self.g = g
        self.gibbs = gibbs_density(g, psi).values
        self.exponents = cfg.exponents
        self.times: list[float] = []
        self.states: list[np.ndarray] = []
        self.rows: list[dict] = []

    def __call__(self, t, y, dt, rejected):
        g = self.g
        row = {
            "mass_defect": abs(float(g.measure @ y) - 1.0),
            "free_energy": free_energy_value(y, self.psi, g),
            "dissipation": dissipation(y, self.psi, g),
            "min_rho": float(y.min()),
            "second_moment": second_moment(y, g),
        }
        for r in self.exponents:
            row[norm_column(r)] = lr_norm(y, self.gibbs, r, g)
        row["dt"] = dt
        row["rejected"] = rejected
        self.times.append(float(t))
        self.states.append(np.array(y))
        self.rows.append(row)

    def build(self, status, steps, rejected, message):
        cols = {k: np.array([row[k] for row in self.rows]) for k in self.rows[0]}
        return Trajectory(
            np.array(self.times), np.array(self.states), cols, status, steps, rejected, message
        )


def integrate(rho0, psi, g: WeightedGraph, cfg: IntegratorConfig | None = None,
              raise_on_underflow: bool = False) -> Trajectory:
    """Integrate the Fokker-Planck flow from ``rho0`` up to ``cfg.horizon``.

    Steps are rejected when the local error exceeds tolerance or when the
    new minimum density falls below ``positivity_floor`` times the current
    one.  If the step size drops below ``dt_min`` the partial trajectory is
    returned with ``status='underflow'`` (or :class:`StepSizeUnderflow` is
    raised when ``raise_on_underflow``).  Integration stops early with
    ``status='equilibrium'`` once the sup-norm of the right-hand side falls
    below ``equilibrium_tol``.
    """
    cfg = cfg or IntegratorConfig()
    y = np.array(_vals(rho0), dtype=float)
    if y.shape != (g.n,) or np.any(~(y > 0)):
        raise ValidationError("initial density must be strictly positive on the graph")
    eq_tol = cfg.atol if cfg.equilibrium_tol is None else cfg.equilibrium_tol

    if cfg.method == "rk45":
        stepper = _DormandPrince(psi, g, cfg, y)
    else:
        stepper = _SemiImplicit(psi, g, cfg)
    expo = 1.0 / stepper.order
    record = _Recorder(psi, g, cfg)

    t = 0.0
    T = cfg.horizon
    dt = cfg.dt_init
    record(t, y, 0.0, 0)
    grid_step = cfg.record_every
    next_record = grid_step if grid_step is not None else None
    k_record = 1
    steps = rejected = rejected_since = 0
    status, message = "horizon", ""

    rate = stepper.rhs(y)
    if np.max(np.abs(rate)) < eq_tol:
        return record.build("equilibrium", 0, 0, "initial state is stationary")

    while t < T:
        if steps >= cfg.max_steps:
            status, message = "max_steps", f"stopped after {steps} steps"
            break
        target = T if next_record is None else min(next_record, T)
        h = min(dt, target - t)
        landing = h == target - t
        trial = stepper.attempt(y, h)
        ok = False
        if trial is not None:
            y_new, err, last = trial
            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
            enorm = float(np.max(np.abs(err) / scale))
            positive = np.all(y_new > 0) and y_new.min() >= cfg.positivity_floor * y.min()
            ok = enorm <= 1.0 and positive
            if enorm <= 1.0 and not positive:
                factor = 0.5
            else:
                factor = 0.9 * max(enorm, 1e-10) ** (-expo)
                factor = min(5.0, max(0.2, factor))
        else:
            factor = 0.5
        if not ok:
            rejected += 1
            rejected_since += 1
            dt = h * min(factor, 0.9)
            if dt < cfg.dt_min:
                status = "underflow"
                message = f"step size {dt:.3e} fell below dt_min={cfg.dt_min:g} at t={t:.6g}"
                log.warning(message)
                break
            continue

        steps += 1
        stepper.accept(last)
        t = target if landing else t + h
        y = y_new
        # keep the controller's proposal when the step was shortened to land on the grid
        dt = min(cfg.dt_max, max(dt if landing and h < dt else h * factor, cfg.dt_min))

        rate = last if last is not None else stepper.rhs(y)
        at_equilibrium = np.max(np.abs(rate)) < eq_tol
        if next_record is None or landing or at_equilibrium:
            record(t, y, h, rejected_since)
            rejected_since = 0
            if next_record is not None and landing and t < T:
                k_record += 1
                next_record = min(k_record * grid_step, T)
        if at_equilibrium:
            status, message = "equilibrium", f"|rhs| < {eq_tol:g} at t={t:.6g}"
            break

    traj = record.build(status, steps, rejected, message)
    if status == "underflow" and raise_on_underflow:
        raise StepSizeUnderflow(message)
    return traj


def heat_semigroup(u0, t: float, g: WeightedGraph) -> np.ndarray:
    """``exp(t Laplacian) u0``; on absorbing graphs the removed edges are killing terms."""
    if t < 0:
        raise ValidationError("time must be nonnegative")
    u = np.array(_vals(u0), dtype=float)
    if t == 0:
        return u
    gen = heat_generator(g)
    return expm_multiply(t * gen, u)


def heat_generator(g: WeightedGraph) -> sp.csr_matrix:
    inv = sp.diags(1.0 / g.measure)
    gen = inv @ (g.weight_matrix - sp.diags(g.weighted_degree))
    if g.mode.value == "absorbing":
        gen = gen - sp.diags(g.deficit / g.measure)
    return gen.tocsr()
