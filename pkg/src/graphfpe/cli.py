"""Fokker-Planck flows, Gibbs densities and transport distances on weighted graphs.

Graph arguments accept either an edge-list file or a generator spec
``family:size[:mode]`` such as ``path:3`` or ``lattice:8:absorbing``.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 runtime
invariant violation.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io, plotting
from ._version import __version__
from .analysis import ExhaustionScenario, convergence_diagnostics, exhaustion_study, lyapunov_partition
from .density import gibbs_density, make_density, make_potential, potential_from_distance, zero_potential
from .errors import GraphFPEError, ParseError
from .fpe import Trajectory
from .graph import FAMILIES, TruncationMode, generate_family
from .metric import W2Options, hodge_decompose, w2_distance
from .operators import EdgeField, gradient, inner_rho, weighted_divergence
from .scenario import (
    DIAGNOSTIC_COLUMNS,
    EXIT_INVARIANT,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VALIDATION,
    GraphSpec,
    InitialSpec,
    IntegratorSpec,
    OutputSpec,
    PotentialSpec,
    Scenario,
    apply_override,
    load_scenario,
    run_scenario,
    validate_scenario,
)

log = logging.getLogger("graphfpe")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# argument helpers


def _graph_spec(text: str) -> GraphSpec:
    head = text.split(":", 1)[0]
    if head in FAMILIES and ":" in text:
        parts = text.split(":")
        try:
            size = int(parts[1])
        except ValueError:
            raise UsageError(f"bad graph size in {text!r}") from None
        mode = parts[2] if len(parts) > 2 else "closed"
        return GraphSpec(family=head, size=size, mode=mode)
    if not Path(text).is_file():
        raise UsageError(f"{text!r} is neither a graph file nor a spec like 'path:10'")
    return GraphSpec(file=text)


def _load_graph(text: str, seed: int = 0):
    spec = _graph_spec(text)
    if spec.file:
        return io.read_edge_list(spec.file)
    kwargs = {"seed": seed} if spec.family == "random" else {}
    return generate_family(spec.family, spec.size, TruncationMode.parse(spec.mode), **kwargs)


def _potential_spec(text: str) -> PotentialSpec:
    if text == "zero":
        return PotentialSpec(kind="zero")
    if text.startswith("linear:"):
        try:
            return PotentialSpec(kind="linear", slope=float(text.split(":", 1)[1]))
        except ValueError:
            raise UsageError(f"bad slope in {text!r}") from None
    if Path(text).is_file():
        return PotentialSpec(kind="file", file=text)
    raise UsageError(f"--potential expects 'zero', 'linear:c' or a JSON file, got {text!r}")


def _load_potential(text: str, g):
    spec = _potential_spec(text)
    if spec.kind == "zero":
        return zero_potential(g)
    if spec.kind == "file":
        return make_potential(io.read_vertex_json(spec.file, g.n), g)
    return potential_from_distance(g, spec.slope) if spec.slope > 0 else zero_potential(g)


def _initial_spec(text: str) -> tuple[InitialSpec, int | None]:
    if text == "uniform":
        return InitialSpec(kind="uniform"), None
    if text.startswith("perturbed"):
        _, _, seed = text.partition(":")
        try:
            return InitialSpec(kind="perturbed"), int(seed) if seed else None
        except ValueError:
            raise UsageError(f"bad seed in {text!r}") from None
    if text.startswith("exponential:"):
        try:
            return InitialSpec(kind="exponential", rate=float(text.split(":", 1)[1])), None
        except ValueError:
            raise UsageError(f"bad rate in {text!r}") from None
    if Path(text).is_file():
        return InitialSpec(kind="file", file=text), None
    raise UsageError(
        f"--init expects 'uniform', 'perturbed[:seed]', 'exponential:a' or a JSON file, got {text!r}"
    )


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if text in ("inf", "+inf"):
            return math.inf
        return text


def _plain(x):
    """JSON-safe copy: arrays become lists, non-finite floats become strings."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2)


def _emit(obj) -> None:
    print(_dumps(obj))


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    base = None
    if args.config:
        s = load_scenario(args.config)
        base = Path(args.config).resolve().parent
    else:
        if not args.graph:
            raise UsageError("simulate needs a graph or --config")
        init, seed = _initial_spec(args.init)
        s = Scenario(
            graph=_graph_spec(args.graph),
            potential=_potential_spec(args.potential),
            initial=init,
            integrator=IntegratorSpec(),
            output=OutputSpec(directory=args.out or "run"),
            seed=seed if seed is not None else args.seed,
        )
        if args.mode:
            s.graph.mode = args.mode
    for name in ("rtol", "atol", "horizon", "method", "record_every", "dt_min"):
        val = getattr(args, name)
        if val is not None:
            setattr(s.integrator, name, val)
    it = s.integrator
    it.dt_init = min(max(it.dt_init, it.dt_min), it.dt_max)
    if args.no_figures:
        s.output.figures = False
    validate_scenario(s)
    manifest = run_scenario(s, args.out, base=base)
    _emit({"exit_code": manifest.exit_code, "error": manifest.error,
           "violations": manifest.violations, **manifest.headline})
    return manifest.exit_code


def cmd_analyze(args) -> int:
    g = _load_graph(args.graph, args.seed)
    psi = _load_potential(args.potential, g)
    times, states = io.read_trajectory_csv(args.trajectory)
    if states.shape[1] != g.n:
        raise UsageError(f"trajectory has {states.shape[1]} vertices, graph has {g.n}")
    traj = Trajectory(times, states, {})
    star = gibbs_density(g, psi)
    exps = [math.inf if e == "inf" else int(e) for e in args.exponents.split(",")]
    table = convergence_diagnostics(traj, star, exps, g)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = table.columns()
    header = ["t"] + cols + [f"d_{c}" for c in cols]
    io.write_csv(out / "convergence.csv", header, list(table.rows()))
    summary = {
        "final": {c: table.norms[c][-1] for c in cols},
        "monotone": table.monotone,
        "fitted_rates": table.rates,
        "max_second_moment": float(table.second_moment.max()),
    }
    if args.partition:
        k = int(args.partition_index)
        rho = make_density(states[k], g)
        summary["partition"] = {
            r: lyapunov_partition(rho, star, psi, r, g).as_dict() for r in (1, 2, 4)
        }
    (out / "summary.json").write_text(_dumps(summary) + "\n")
    if not args.no_figures:
        plotting.plot_distances(table.times, table.norms, out / "distances.png")
    _emit(summary)
    return EXIT_OK


def cmd_w2(args) -> int:
    g = _load_graph(args.graph, args.seed)
    r0 = make_density(io.read_vertex_json(args.rho0, g.n), g)
    r1 = make_density(io.read_vertex_json(args.rho1, g.n), g)
    res = w2_distance(r0, r1, g, W2Options(segments=args.segments, action_tol=args.tol))
    if args.path_csv:
        io.write_csv(args.path_csv, io.trajectory_header(g.n),
                     np.column_stack([res.path.times, res.path.states]))
    out = res.to_dict()
    _emit({"value": out["value"], "iterations": out["iterations"],
           "converged": out["converged"], "action_history": out["action_history"]})
    return EXIT_OK


def cmd_hodge(args) -> int:
    g = _load_graph(args.graph, args.seed)
    rho = make_density(io.read_vertex_json(args.rho, g.n), g)
    triples = []
    for lineno, line in enumerate(Path(args.field).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            triples.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except (ValueError, IndexError):
            raise ParseError(f"{args.field}: line {lineno}: expected 'i j value'") from None
    v = EdgeField.from_pairs(g, triples)
    p, u = hodge_decompose(rho, v, g)
    gp = gradient(p, g)
    _emit({
        "potential": p,
        "divergence_free": u.values,
        "edges": [[int(i), int(j)] for i, j in zip(g.heads, g.tails)],
        "norm_v": inner_rho(v, v, rho, g),
        "norm_grad_p": inner_rho(gp, gp, rho, g),
        "norm_u": inner_rho(u, u, rho, g),
        "max_div_rho_u": float(np.max(np.abs(weighted_divergence(rho, u, g)))),
    })
    return EXIT_OK


def cmd_gibbs(args) -> int:
    g = _load_graph(args.graph, args.seed)
    psi = _load_potential(args.potential, g)
    star = gibbs_density(g, psi)
    _emit({"rho": star.values, "k_gibbs": star.norm})
    return EXIT_OK


def cmd_validate(args) -> int:
    g = _load_graph(args.graph, args.seed)
    report = {
        "vertices": g.n,
        "edges": g.n_edges,
        "mode": g.mode.value,
        "root": g.root,
        "growth_constant": g.growth_constant,
        "max_degree": g.max_degree,
    }
    if g.mode is TruncationMode.ABSORBING:
        report["total_deficit"] = float(g.deficit.sum())
    if args.density:
        values = io.read_vertex_json(args.density, g.n)
        rho = make_density(values, g)
        report["density_mass_before_normalisation"] = rho.norm
        report["density_min"] = rho.min_value
    _emit(report)
    return EXIT_OK


def cmd_exhaustion(args) -> int:
    try:
        sizes = [int(x) for x in args.sizes.split(",")]
    except ValueError:
        raise UsageError(f"--sizes expects integers, got {args.sizes!r}") from None
    sc = ExhaustionScenario(slope=args.slope, init_rate=args.rate, horizon=args.horizon,
                            record_every=args.record_every, w2_segments=args.w2_segments)
    rep = exhaustion_study(args.family, sizes, sc, args.mode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["size", "sup_difference_to_next", "mass_defect", "leakage",
              "final_l2_to_gibbs", "initial_relative_energy", "final_relative_energy"]
    if sc.w2_segments:
        header += ["w2_initial", "w2_final"]
    rows = []
    for k, n in enumerate(rep.sizes):
        row = [n, rep.sup_differences[k] if k < len(rep.sup_differences) else math.nan,
               rep.mass_defect[k], rep.leakage[k], rep.final_l2_to_gibbs[k],
               rep.initial_relative_energy[k], rep.final_relative_energy[k]]
        if sc.w2_segments:
            row += [rep.w2_initial[k], rep.w2_final[k]]
        rows.append(row)
    io.write_csv(out / "exhaustion.csv", header, rows)
    if not args.no_figures:
        plotting.plot_exhaustion(rep.sizes, rep.sup_differences, out / "exhaustion.png")
    _emit(rep.as_dict())
    return EXIT_OK


def _grid(overrides: list[str]):
    axes = []
    for item in overrides:
        key, sep, values = item.partition("=")
        if not sep or not values:
            raise UsageError(f"--set expects key=v1,v2,..., got {item!r}")
        axes.append([(key, _parse_value(v)) for v in values.split(",")])
    return list(itertools.product(*axes)) if axes else [()]


def cmd_sweep(args) -> int:
    base = load_scenario(args.config)
    root = Path(args.out)
    jobs = []
    for combo in _grid(args.set or []):
        s = base
        for key, value in combo:
            s = apply_override(s, key, value)
        name = "_".join(f"{k.split('.')[-1]}={v}" for k, v in combo) or "base"
        jobs.append((name, s))
    base_dir = Path(args.config).resolve().parent

    def run(job):
        name, s = job
        return name, run_scenario(s, root / name, base=base_dir)

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(run, jobs))
    _emit({name: {"exit_code": m.exit_code, "manifest": str(root / name / "manifest.json")}
           for name, m in results})
    return max(m.exit_code for _, m in results)


# ---------------------------------------------------------------------------

SIMULATE_EPILOG = (
    "outputs: trajectory.csv with columns t, rho_0, ..., rho_{n-1}; diagnostics.csv with "
    "columns " + ", ".join(DIAGNOSTIC_COLUMNS) + ", l2_to_gibbs, l4_to_gibbs, l8_to_gibbs, "
    "linf_to_gibbs; gibbs.json; distances.png, energy.png, snapshots.png; manifest.json"
)
ANALYZE_EPILOG = (
    "outputs: convergence.csv with columns t, <norm columns>, d_<norm columns> "
    "(forward differences, empty on the last row); summary.json; distances.png"
)
EXHAUSTION_EPILOG = (
    "outputs: exhaustion.csv with columns size, sup_difference_to_next, mass_defect, leakage, "
    "final_l2_to_gibbs, initial_relative_energy, final_relative_energy[, w2_initial, w2_final]; "
    "exhaustion.png"
)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graphfpe", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def graph_arg(sp):
        sp.add_argument("graph", help="edge-list file or family:size[:mode]")
        sp.add_argument("--seed", type=int, default=0, help="seed for the random family")

    s = sub.add_parser("simulate", help="integrate the Fokker-Planck flow", epilog=SIMULATE_EPILOG)
    s.add_argument("graph", nargs="?", help="edge-list file or family:size[:mode]")
    s.add_argument("--config", help="scenario TOML file (flags below override it)")
    s.add_argument("--mode", choices=[m.value for m in TruncationMode])
    s.add_argument("--potential", default="linear:1", help="zero | linear:c | JSON file")
    s.add_argument("--init", default="perturbed", help="uniform | perturbed[:seed] | exponential:a | JSON file")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rtol", type=float)
    s.add_argument("--atol", type=float)
    s.add_argument("--horizon", type=float)
    s.add_argument("--method", choices=["rk45", "semi-implicit"])
    s.add_argument("--record-every", dest="record_every", type=float)
    s.add_argument("--dt-min", dest="dt_min", type=float)
    s.add_argument("--out", help="output directory")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="convergence diagnostics of a trajectory CSV",
                       epilog=ANALYZE_EPILOG)
    a.add_argument("trajectory")
    graph_arg(a)
    a.add_argument("--potential", default="linear:1")
    a.add_argument("--exponents", default="2,4,8,inf")
    a.add_argument("--partition", action="store_true", help="add the sign partition at one record")
    a.add_argument("--partition-index", type=int, default=-1)
    a.add_argument("--out", default="analysis")
    a.add_argument("--no-figures", action="store_true")
    a.set_defaults(func=cmd_analyze)

    w = sub.add_parser("w2", help="distance between two densities")
    graph_arg(w)
    w.add_argument("rho0")
    w.add_argument("rho1")
    w.add_argument("--segments", type=int, default=64)
    w.add_argument("--tol", type=float, default=1e-10, help="action decrease tolerance")
    w.add_argument("--path-csv", help="write the optimal path here")
    w.set_defaults(func=cmd_w2)

    h = sub.add_parser("hodge", help="split an edge field into gradient and divergence-free parts")
    graph_arg(h)
    h.add_argument("rho")
    h.add_argument("field", help="text file of 'i j value' lines")
    h.set_defaults(func=cmd_hodge)

    gb = sub.add_parser("gibbs", help="print the Gibbs density and its normaliser")
    graph_arg(gb)
    gb.add_argument("--potential", default="linear:1")
    gb.set_defaults(func=cmd_gibbs)

    v = sub.add_parser("validate", help="check a graph (and optionally a density)")
    graph_arg(v)
    v.add_argument("--density")
    v.set_defaults(func=cmd_validate)

    e = sub.add_parser("exhaustion", help="compare nested truncations", epilog=EXHAUSTION_EPILOG)
    e.add_argument("--family", default="lattice")
    e.add_argument("--sizes", default="2,4,8,16")
    e.add_argument("--mode", default="closed", choices=[m.value for m in TruncationMode])
    e.add_argument("--slope", type=float, default=1.0)
    e.add_argument("--rate", type=float, default=2.0)
    e.add_argument("--horizon", type=float, default=10.0)
    e.add_argument("--record-every", dest="record_every", type=float, default=0.5)
    e.add_argument("--w2-segments", dest="w2_segments", type=int, default=0)
    e.add_argument("--out", default="exhaustion")
    e.add_argument("--no-figures", action="store_true")
    e.set_defaults(func=cmd_exhaustion)

    sw = sub.add_parser("sweep", help="run a scenario grid concurrently")
    sw.add_argument("config")
    sw.add_argument("--set", action="append", metavar="KEY=V1,V2,...")
    sw.add_argument("--jobs", type=int, default=4)
    sw.add_argument("--out", default="sweep")
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"graphfpe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"graphfpe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, GraphFPEError) as exc:
        code = EXIT_VALIDATION if isinstance(exc, ValueError) else EXIT_INVARIANT
        print(f"graphfpe: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
