"""Acceptance suite: one test per criterion, each reported as a PASS/FAIL line.

Every check runs at its stated tolerance.  A failing criterion is left
failing; the summary printed at the end of the session lists them all.
"""
import math
import time

import mpmath as mp
import numpy as np
import pytest

from graphfpe.analysis import ExhaustionScenario, convergence_diagnostics, exhaustion_study
from graphfpe.density import gibbs_density, make_density, potential_from_distance, zero_potential
from graphfpe.energy import free_energy_value
from graphfpe.fpe import (
    IntegratorConfig,
    dissipation,
    fpe_rhs,
    fpe_rhs_two_term,
    gradient_flow_rhs,
    heat_semigroup,
    Trajectory,
    integrate,
)
from graphfpe.graph import binary_tree, cycle_graph, lattice_window, path_graph, random_sparse
from graphfpe.metric import W2Options, hodge_decompose, w2_distance
from graphfpe.operators import (
    EdgeField,
    gradient,
    inner_pi,
    inner_rho,
    laplacian,
    laplacian_logform,
    weighted_divergence,
)
from graphfpe.scenario import InitialSpec, build_initial

pytestmark = pytest.mark.acceptance

EXPONENTS = (2, 4, 8, math.inf)
SLOPES = (0.0, 0.5, 1.0)


def corpus_graphs():
    return {
        "two_point": path_graph(2),
        "path10": path_graph(10),
        "cycle12": cycle_graph(12),
        "tree3": binary_tree(3),
        "random30": random_sparse(30, 4, seed=3, weight_range=(0.5, 2.0)),
    }


def potential(g, c):
    return potential_from_distance(g, c) if c > 0 else zero_potential(g)


def random_instance(rng, max_n=30):
    n = int(rng.integers(2, max_n + 1))
    g = random_sparse(n, int(rng.integers(2, 6)), seed=int(rng.integers(1 << 31)),
                      weight_range=(0.2, 5.0))
    rho = np.exp(2 * rng.normal(size=n))
    rho /= g.measure @ rho
    return g, rho, rng.uniform(0, 5, n)


def test_criterion_01_gradient_flow_identity():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        g, rho, psi = random_instance(rng)
        a = fpe_rhs(rho, psi, g)
        b = gradient_flow_rhs(rho, psi, g)
        err = np.abs(a - b) / np.abs(a)
        worst = max(worst, float(err.max()))
    elapsed = time.perf_counter() - start
    assert worst <= 1e-12, f"max relative difference {worst:.2e}"
    assert elapsed < 10, f"took {elapsed:.1f} s"


def test_criterion_02_mass_conservation():
    start = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(2)
    for g in corpus_graphs().values():
        for c in SLOPES:
            rho0 = build_initial(InitialSpec(), g, seed=int(rng.integers(1000)))
            traj = integrate(rho0, potential(g, c), g, IntegratorConfig(horizon=50.0, record_every=0.5,
                                                                        equilibrium_tol=0.0))
            assert traj.times[-1] == 50.0
            worst = max(worst, float(np.max(np.abs(traj.states @ g.measure - 1.0))))
    elapsed = time.perf_counter() - start
    assert worst <= 1e-10, f"mass defect {worst:.2e}"
    assert elapsed < 60, f"took {elapsed:.1f} s"


def test_criterion_03_energy_dissipation():
    g = random_sparse(20, 4, seed=5, weight_range=(0.5, 2.0))
    psi = potential_from_distance(g, 1.0)
    rho0 = build_initial(InitialSpec(amplitude=0.9), g, seed=3)
    traj = integrate(rho0, psi, g, IntegratorConfig(horizon=5.0, record_every=0.05))
    F = traj.diagnostics["free_energy"]
    assert np.all(np.diff(F) <= 1e-12), "free energy increased"

    tight = dict(rtol=1e-12, atol=1e-16, record_every=None)
    ratios = []
    for k in np.linspace(0, len(traj.times) - 2, 10).astype(int):
        x = traj.states[k]
        want = -dissipation(x, psi, g)
        f0 = free_energy_value(x, psi, g)
        errs = []
        for h in (2e-2, 1e-2, 5e-3):
            end = integrate(x, psi, g, IntegratorConfig(horizon=h, **tight)).final
            errs.append(abs((free_energy_value(end, psi, g) - f0) / h - want))
        ratios += [errs[0] / errs[1], errs[1] / errs[2]]
    ratios = np.array(ratios)
    assert np.all(np.abs(ratios - 2) <= 0.2), f"error ratios {np.round(ratios, 3)}"


def test_criterion_04_gibbs_stationarity_and_minimality():
    rng = np.random.default_rng(4)
    for name, g in corpus_graphs().items():
        for c in SLOPES:
            psi = potential(g, c)
            star = gibbs_density(g, psi)
            res = float(np.max(np.abs(fpe_rhs(star, psi, g))))
            assert res <= 1e-12, f"{name} c={c}: residual {res:.2e}"
            X = np.exp(2 * rng.normal(size=(10_000, g.n)))
            X /= (X @ g.measure)[:, None]
            F = (X * g.measure) @ psi.values + (X * g.measure * np.log(X)).sum(axis=1)
            assert np.all(F >= free_energy_value(star, psi, g) - 1e-12), f"{name} c={c}"


def record_to_horizon(rho0, psi, g):
    """Fine records on [0, 10] where the transient lives, coarse ones up to t = 600."""
    tol = dict(rtol=1e-10, atol=1e-14, equilibrium_tol=0.0)
    early = integrate(rho0, psi, g, IntegratorConfig(horizon=10.0, record_every=0.05, **tol))
    late = integrate(early.final, psi, g, IntegratorConfig(horizon=590.0, record_every=2.0, **tol))
    times = np.concatenate([early.times, 10.0 + late.times[1:]])
    return Trajectory(times, np.vstack([early.states, late.states[1:]]), {})


def test_criterion_05_convergence_to_gibbs():
    failures = []
    for name, g in corpus_graphs().items():
        for c in SLOPES:
            psi = potential(g, c)
            star = gibbs_density(g, psi)
            traj = record_to_horizon(build_initial(InitialSpec(), g, seed=0), psi, g)
            table = convergence_diagnostics(traj, star, EXPONENTS, g)
            for col, v in table.norms.items():
                # below 1e-13 the distances are integration noise, not dynamics
                moving = v[:-1] > 1e-13
                up = np.flatnonzero((np.diff(v) >= 0) & moving)
                if len(up):
                    k = up[0]
                    failures.append(f"{name} c={c} {col} rises at t={traj.times[k]:.2f} "
                                    f"({v[k]:.6g} -> {v[k + 1]:.6g})")
                if v[-1] >= 1e-8:
                    failures.append(f"{name} c={c} {col} = {v[-1]:.2e} at horizon")

    g = path_graph(2)
    traj = integrate([0.6, 0.4], [0.0, 0.0], g,
                     IntegratorConfig(horizon=6.0, record_every=0.25, rtol=1e-11, atol=1e-15))
    table = convergence_diagnostics(traj, [0.5, 0.5], (2,), g)
    rate = table.rates["l2_to_gibbs"]
    if abs(rate - 2) > 0.02:
        failures.append(f"two-point rate {rate:.4f}")
    closed = 0.5 + 0.1 * np.exp(-2 * traj.times)
    if np.max(np.abs(traj.states[:, 0] - closed)) > 1e-8:
        failures.append("two-point trajectory departs from 0.5 + 0.1 exp(-2t)")
    assert not failures, "; ".join(failures)


def test_criterion_06_boundary_repulsion():
    cases = []
    p = path_graph(5)
    x = np.array([1e-6, 1.0, 1.0, 1.0, 1.0])
    x[1:] = (1 - 1e-6) / (p.measure[1:].sum())
    cases.append((p, x, zero_potential(p)))
    t = binary_tree(3)
    y = np.ones(t.n)
    leaf = t.n - 1
    y[leaf] = 0.0
    y *= (1 - 1e-6 * t.measure[leaf]) / (t.measure @ y)
    y[leaf] = 1e-6
    cases.append((t, y, potential_from_distance(t, 1.0)))
    for g, rho0, psi in cases:
        assert g.measure @ rho0 == pytest.approx(1.0, abs=1e-14)
        i = int(np.argmin(rho0))
        assert rho0[i] == 1e-6
        assert fpe_rhs(rho0, psi, g)[i] > 0
        traj = integrate(rho0, psi, g, IntegratorConfig(horizon=5.0, record_every=None))
        assert np.min(traj.diagnostics["min_rho"]) >= 0.9e-6
        assert np.min(traj.states) >= 0.9e-6


def test_criterion_07_integration_by_parts_and_hodge():
    rng = np.random.default_rng(7)
    for _ in range(100):
        g, rho, _ = random_instance(rng, max_n=50)
        phi = EdgeField(g, rng.normal(size=g.n_edges))
        f = rng.uniform(-1, 1, g.n)
        lhs = -inner_pi(weighted_divergence(rho, phi, g), f, g)
        rhs = inner_rho(phi, gradient(f, g), rho, g)
        scale = np.sum(np.abs(g.weights * phi.values * (f[g.tails] - f[g.heads]))) * rho.max()
        assert abs(lhs - rhs) <= 1e-11 * scale

        p, u = hodge_decompose(rho, phi, g)
        gp = gradient(p, g)
        vv = inner_rho(phi, phi, rho, g)
        assert abs(vv - inner_rho(gp, gp, rho, g) - inner_rho(u, u, rho, g)) <= 1e-10 * vv
        div = weighted_divergence(rho, u, g)
        flux = weighted_divergence(rho, EdgeField(g, np.abs(u.values)), g)
        assert np.max(np.abs(div)) <= 1e-10 * max(1.0, float(np.max(np.abs(flux))))


def geodesic_oracle(a, b):
    """Length of the two-point geodesic, int_a^b dr / sqrt(L(r, 1 - r))."""
    with mp.workdps(30):
        lo, hi = sorted((mp.mpf(a), mp.mpf(b)))

        def inv_sqrt_lm(r):
            s = 1 - r
            lm = r if r == s else (r - s) / (mp.log(r) - mp.log(s))
            return 1 / mp.sqrt(lm)

        return float(mp.quad(inv_sqrt_lm, [lo, mp.mpf("0.5"), hi] if lo < 0.5 < hi else [lo, hi]))


def test_criterion_08_w2_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    g = path_graph(2)
    pairs = rng.uniform(0.05, 0.95, size=(20, 2))
    errs = []
    for a, b in pairs:
        res = w2_distance([a, 1 - a], [b, 1 - b], g)
        assert res.converged
        errs.append(abs(res.value - geodesic_oracle(a, b)))
    assert max(errs) <= 1e-4, f"max oracle error {max(errs):.2e}"

    for a, b in pairs[:5]:
        ab = w2_distance([a, 1 - a], [b, 1 - b], g).value
        ba = w2_distance([b, 1 - b], [a, 1 - a], g).value
        assert abs(ab - ba) <= 1e-6

    p3 = path_graph(3)
    opt = W2Options(segments=32)
    for _ in range(5):
        a, b, c = (make_density(rng.uniform(0.2, 1.0, 3), p3) for _ in range(3))
        ab = w2_distance(a, b, p3, opt).value
        bc = w2_distance(b, c, p3, opt).value
        ac = w2_distance(a, c, p3, opt).value
        assert ac <= ab + bc + 1e-4
    elapsed = time.perf_counter() - start
    assert elapsed < 120, f"took {elapsed:.1f} s"


def test_criterion_09_logform_equivalences():
    rng = np.random.default_rng(9)
    for _ in range(100):
        g, rho, psi = random_instance(rng)
        direct = laplacian(rho, g)
        assert np.all(np.abs(laplacian_logform(rho, g) - direct) <= 1e-12 * np.abs(direct))
        a = fpe_rhs(rho, psi, g)
        assert np.all(np.abs(fpe_rhs_two_term(rho, psi, g) - a) <= 1e-12 * np.abs(a))


def test_criterion_10_stochastic_completeness():
    rng = np.random.default_rng(10)
    times = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    for g in corpus_graphs().values():
        u0 = rng.uniform(0.1, 2.0, g.n)
        m0 = g.measure @ u0
        for t in times:
            assert abs(g.measure @ heat_semigroup(u0, t, g) - m0) <= 1e-10 * m0
    for g in (lattice_window(4, "absorbing"), binary_tree(3, "absorbing")):
        u0 = make_density(np.exp(-g.root_distance), g).values
        leak = np.array([1.0 - g.measure @ heat_semigroup(u0, t, g) for t in times])
        assert np.all(leak > 0)
        assert np.all(np.diff(leak) > 0)


def test_criterion_11_exhaustion_consistency():
    start = time.perf_counter()
    rep = exhaustion_study("lattice", [2, 4, 8, 16], ExhaustionScenario(slope=1.0, init_rate=2.0))
    elapsed = time.perf_counter() - start
    assert rep.cauchy, f"differences {rep.sup_differences}"
    assert elapsed < 300, f"took {elapsed:.1f} s"
