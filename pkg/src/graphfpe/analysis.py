"""Convergence diagnostics, the sign-partition of the Lyapunov derivative,
and truncation-exhaustion studies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .density import (
    gibbs_density,
    log_gibbs_normalizer,
    lr_norm,
    make_density,
    potential_from_distance,
    second_moment,
)
from .energy import EnergyReport, free_energy, free_energy_derivative, free_energy_value
from .errors import ScenarioUndefinedOnTruncation, ValidationError
from .fpe import IntegratorConfig, Trajectory, fpe_rhs, integrate, norm_column
from .graph import TruncationMode, WeightedGraph, generate_family
from .metric import W2Options, w2_distance
from .operators import edge_log_mean

__all__ = [
    "EnergyReport",
    "free_energy",
    "free_energy_derivative",
    "free_energy_value",
    "ConvergenceTable",
    "convergence_diagnostics",
    "fit_rate",
    "PartitionReport",
    "lyapunov_partition",
    "ExhaustionScenario",
    "ExhaustionReport",
    "exhaustion_study",
    "gibbs_summability",
]


def _vals(x) -> np.ndarray:
    return np.asarray(x.values if hasattr(x, "values") else x, dtype=float)


def fit_rate(times, norms) -> float:
    """Exponential decay rate from a least-squares fit of ``log norm`` on the last half."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(norms, dtype=float)
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    keep = half & (v > 0)
    if keep.sum() < 2:
        return float("nan")
    slope = np.polyfit(t[keep], np.log(v[keep]), 1)[0]
    return float(-slope)


@dataclass
class ConvergenceTable:
    times: np.ndarray
    norms: dict[str, np.ndarray]
    derivatives: dict[str, np.ndarray]
    monotone: dict[str, bool]
    rates: dict[str, float]
    second_moment: np.ndarray

    def columns(self) -> list[str]:
        return list(self.norms)

    def rows(self):
        """Per-time rows ``(t, norm..., derivative...)`` with derivatives padded by NaN."""
        cols = self.columns()
        for k, t in enumerate(self.times):
            row = [t] + [self.norms[c][k] for c in cols]
            row += [self.derivatives[c][k] if k < len(self.times) - 1 else math.nan for c in cols]
            yield row


def convergence_diagnostics(traj: Trajectory, gibbs, exponents, g: WeightedGraph) -> ConvergenceTable:
    """Distances to the Gibbs density along a trajectory.

    For every exponent (even integers or ``inf``) the table holds the
    ``l^r(V, pi)`` distance at each recorded time, the forward difference
    quotient between consecutive records, a strict-monotonicity flag and a
    fitted exponential rate (diagnostic only).
    """
    star = _vals(gibbs)
    norms, derivs, mono, rates = {}, {}, {}, {}
    dt = np.diff(traj.times)
    for r in exponents:
        col = norm_column(r)
        v = np.array([lr_norm(s, star, r, g) for s in traj.states])
        norms[col] = v
        derivs[col] = np.diff(v) / dt if len(v) > 1 else np.zeros(0)
        mono[col] = bool(np.all(np.diff(v) < 0))
        rates[col] = fit_rate(traj.times, v)
    sm = np.array([second_moment(s, g) for s in traj.states])
    return ConvergenceTable(np.array(traj.times), norms, derivs, mono, rates, sm)


@dataclass
class PartitionReport:
    """Split of ``(1/2r) d/dt ||rho - rho*||^{2r}`` over the sign classes.

    ``i1, i2, i3`` are the contributions of vertices above Gibbs (pairs
    inside ``n1``, edges into ``n2``, edges into ``n3``); ``j1, j2, j3``
    mirror them for vertices below Gibbs; ``k3`` collects vertices in the
    tolerance band.  ``direct`` is the same derivative computed straight
    from the right-hand side.
    """

    n1: np.ndarray
    n2: np.ndarray
    n3: np.ndarray
    r: int
    i1: float
    i2: float
    i3: float
    j1: float
    j2: float
    j3: float
    k3: float
    direct: float

    @property
    def total(self) -> float:
        return self.i1 + self.i2 + self.i3 + self.j1 + self.j2 + self.j3 + self.k3

    @property
    def signs_ok(self) -> bool:
        """Whether every term except ``k3`` is nonpositive.

        The cross terms are always nonpositive; the pair terms ``i1``,
        ``j1`` are guaranteed to be so only for a uniform Gibbs density.
        """
        return max(self.i1, self.i2, self.i3, self.j1, self.j2, self.j3) <= 0

    def as_dict(self) -> dict:
        return {
            "r": self.r,
            "n1": self.n1.tolist(),
            "n2": self.n2.tolist(),
            "n3": self.n3.tolist(),
            "i1": self.i1,
            "i2": self.i2,
            "i3": self.i3,
            "j1": self.j1,
            "j2": self.j2,
            "j3": self.j3,
            "k3": self.k3,
            "total": self.total,
            "direct": self.direct,
        }


def lyapunov_partition(rho, gibbs, psi, r: int, g: WeightedGraph,
                       tol: float | None = None) -> PartitionReport:
    """Partition the derivative of ``(1/2r)||rho - rho*||_{2r}^{2r}``.

    Vertex ``i`` is in ``n3`` when ``|rho_i - rho*_i| <= tol_i`` with
    ``tol_i = 1e-12 max(rho_i, rho*_i)`` unless ``tol`` is given.  The
    pair term ``i1`` uses each edge inside ``n1`` once.  Only meaningful
    on closed graphs with ``gibbs`` the Gibbs density of ``psi``.
    """
    if r < 1 or int(r) != r:
        raise ValidationError("r must be a positive integer")
    r = int(r)
    x = _vals(rho)
    star = _vals(gibbs)
    d = x - star
    band = 1e-12 * np.maximum(x, star) if tol is None else np.full(g.n, float(tol))
    cls = np.where(d > band, 1, np.where(d < -band, 2, 3))
    f = np.log(x) - np.log(star)
    q = d ** (2 * r - 1)
    h, t = g.heads, g.tails
    lm = edge_log_mean(x, g)
    w = g.weights

    # oriented edge contribution to vertex i from neighbour j: w (f_j - f_i) q_i rho_hat
    def contrib(i, j):
        return w * (f[j] - f[i]) * q[i] * lm

    at_h = contrib(h, t)
    at_t = contrib(t, h)
    ch, ct = cls[h], cls[t]

    def cross(a, b):
        return float(at_h[(ch == a) & (ct == b)].sum() + at_t[(ct == a) & (ch == b)].sum())

    def pairs(a):
        both = (ch == a) & (ct == a)
        return float((at_h[both] + at_t[both]).sum())

    k3 = float(at_h[ch == 3].sum() + at_t[ct == 3].sum())
    direct = float(g.measure @ (q * fpe_rhs(x, psi, g)))
    return PartitionReport(
        np.flatnonzero(cls == 1), np.flatnonzero(cls == 2), np.flatnonzero(cls == 3), r,
        pairs(1), cross(1, 2), cross(1, 3), pairs(2), cross(2, 1), cross(2, 3), k3, direct,
    )


# ---------------------------------------------------------------------------
# exhaustion


@dataclass
class ExhaustionScenario:
    """``Psi = slope * d``, ``rho0 ~ exp(-init_rate * d)`` on each truncation."""

    slope: float = 1.0
    init_rate: float = 2.0
    horizon: float = 10.0
    record_every: float = 0.5
    rtol: float = 1e-10
    atol: float = 1e-14
    w2_segments: int = 0


@dataclass
class ExhaustionReport:
    family: str
    mode: str
    sizes: list[int]
    sup_differences: list[float]
    leakage: list[float]
    mass_defect: list[float]
    final_l2_to_gibbs: list[float]
    initial_relative_energy: list[float]
    final_relative_energy: list[float]
    w2_initial: list[float] = field(default_factory=list)
    w2_final: list[float] = field(default_factory=list)

    @property
    def cauchy(self) -> bool:
        s = self.sup_differences
        return all(b < a for a, b in zip(s, s[1:]))

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["cauchy"] = self.cauchy
        return out


def _run_truncation(g: WeightedGraph, sc: ExhaustionScenario):
    psi = potential_from_distance(g, sc.slope)
    rho0 = make_density(np.exp(-sc.init_rate * g.root_distance), g)
    cfg = IntegratorConfig(
        rtol=sc.rtol, atol=sc.atol, horizon=sc.horizon, record_every=sc.record_every,
        exponents=(2,), equilibrium_tol=0.0,
    )
    return psi, rho0, integrate(rho0, psi, g, cfg)


def exhaustion_study(family: str, sizes, scenario: ExhaustionScenario | None = None,
                     mode="closed") -> ExhaustionReport:
    """Compare trajectories on nested truncations of one graph family.

    Vertices are matched through the generators' labels, so the family
    must produce nested windows (``lattice``, ``path``, ``tree``).  For
    consecutive sizes the report holds the supremum over shared vertices
    and recorded times of the density difference.
    """
    sc = scenario or ExhaustionScenario()
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2:
        raise ValidationError("exhaustion study needs at least two sizes")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValidationError("sizes must be strictly increasing")
    mode = TruncationMode.parse(mode)
    graphs = [generate_family(family, s, mode) for s in sizes]
    if any(gr.labels is None for gr in graphs):
        raise ScenarioUndefinedOnTruncation(
            f"family {family!r} has no nested vertex labelling"
        )

    runs = [_run_truncation(gr, sc) for gr in graphs]
    sups, leak, defect, l2, e0, e1, w0, w1 = [], [], [], [], [], [], [], []
    for gr, (psi, rho0, traj) in zip(graphs, runs):
        mass = traj.states @ gr.measure
        defect.append(float(np.max(np.abs(mass - 1.0))))
        leak.append(float(1.0 - mass[-1]))
        l2.append(float(traj.diagnostics["l2_to_gibbs"][-1]))
        e0.append(free_energy(rho0, psi, gr).relative)
        e1.append(free_energy(traj.final, psi, gr).relative)
        if sc.w2_segments:
            star = gibbs_density(gr, psi)
            opt = W2Options(segments=sc.w2_segments)
            w0.append(w2_distance(rho0, star, gr, opt).value)
            fin = traj.final / (gr.measure @ traj.final)
            w1.append(w2_distance(fin, star, gr, opt).value)

    for (ga, ra), (gb, rb) in zip(zip(graphs, runs), zip(graphs[1:], runs[1:])):
        ta, tb = ra[2], rb[2]
        if len(ta.times) != len(tb.times) or not np.allclose(ta.times, tb.times):
            raise ScenarioUndefinedOnTruncation("recorded times differ between truncations")
        pos_b = {lab: k for k, lab in enumerate(gb.labels)}
        shared = [(k, pos_b[lab]) for k, lab in enumerate(ga.labels) if lab in pos_b]
        if not shared:
            raise ScenarioUndefinedOnTruncation("truncations share no vertices")
        ia = np.array([s[0] for s in shared])
        ib = np.array([s[1] for s in shared])
        sups.append(float(np.max(np.abs(ta.states[:, ia] - tb.states[:, ib]))))

    return ExhaustionReport(
        family, mode.value, sizes, sups, leak, defect, l2, e0, e1, w0, w1
    )


def gibbs_summability(family: str, sizes, slope: float, mode="absorbing") -> list[float]:
    """``K_gibbs = sum pi exp(-slope * d)`` on growing truncations of a family.

    A sequence that levels off suggests the normaliser is finite on the
    infinite graph; no threshold is imposed.  Absorbing mode uses the
    parent measure, which is the relevant one for the infinite sum.
    """
    mode = TruncationMode.parse(mode)
    out = []
    for size in sizes:
        g = generate_family(family, int(size), mode)
        out.append(float(np.exp(log_gibbs_normalizer(g, slope * g.root_distance))))
    return out
