"""Scenario files and the run pipeline.

A scenario is a TOML document with the sections below; every key is
optional except a graph source, and unknown keys are rejected::

    seed = 0

    [graph]
    family = "path"          # path | cycle | lattice | tree | random
    size = 10
    mode = "closed"          # closed | absorbing
    # file = "graph.txt"     # instead of family/size
    # degree = 3             # random family only
    # weight_range = [0.5, 2.0]

    [potential]
    kind = "linear"          # linear (slope * distance) | zero | file
    slope = 1.0

    [initial]
    kind = "perturbed"       # uniform | perturbed | exponential | file
    amplitude = 0.5          # perturbed: 1 + amplitude * U(-1, 1), seeded
    rate = 2.0               # exponential: exp(-rate * distance)

    [integrator]
    method = "rk45"
    horizon = 10.0
    record_every = 0.1
    ...                      # rtol, atol, dt_init, dt_min, dt_max,
                             # positivity_floor, equilibrium_tol, max_steps

    [analysis]
    exponents = [2, 4, 8, inf]
    mass_tol = 1e-10
    energy_slack = 1e-12
    require_monotone_norms = false

    [output]
    directory = "run"
    figures = true
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import io, plotting
from ._version import __version__
from .analysis import convergence_diagnostics
from .density import gibbs_density, make_density, make_potential, potential_from_distance, zero_potential
from .energy import free_energy
from .errors import GraphFPEError, ParseError, StepSizeUnderflow, ValidationError
from .fpe import METHODS, IntegratorConfig, integrate, norm_column
from .graph import FAMILIES, TruncationMode, WeightedGraph, generate_family

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_INVARIANT = 3


@dataclass
class GraphSpec:
    family: str | None = None
    size: int | None = None
    mode: str = "closed"
    file: str | None = None
    degree: int = 3
    weight_range: list[float] | None = None


@dataclass
class PotentialSpec:
    kind: str = "linear"
    slope: float = 1.0
    file: str | None = None


@dataclass
class InitialSpec:
    kind: str = "perturbed"
    amplitude: float = 0.5
    rate: float = 2.0
    file: str | None = None


@dataclass
class IntegratorSpec:
    method: str = "rk45"
    rtol: float = 1e-10
    atol: float = 1e-13
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    dt_max: float = 1.0
    positivity_floor: float = 0.5
    horizon: float = 10.0
    record_every: float = 0.1
    equilibrium_tol: float | None = None
    max_steps: int = 2_000_000


@dataclass
class AnalysisSpec:
    exponents: list = field(default_factory=lambda: [2, 4, 8, math.inf])
    mass_tol: float = 1e-10
    energy_slack: float = 1e-12
    require_monotone_norms: bool = False


@dataclass
class OutputSpec:
    directory: str = "run"
    figures: bool = True


_SECTIONS = {
    "graph": GraphSpec,
    "potential": PotentialSpec,
    "initial": InitialSpec,
    "integrator": IntegratorSpec,
    "analysis": AnalysisSpec,
    "output": OutputSpec,
}


@dataclass
class Scenario:
    graph: GraphSpec = field(default_factory=GraphSpec)
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    integrator: IntegratorSpec = field(default_factory=IntegratorSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    seed: int = 0

    def to_dict(self) -> dict:
        out: dict = {"seed": self.seed}
        for name in _SECTIONS:
            sec = dataclasses.asdict(getattr(self, name))
            out[name] = {k: v for k, v in sec.items() if v is not None}
        return out

    def digest(self) -> str:
        return hashlib.sha256(emit_scenario(self).encode()).hexdigest()

    def integrator_config(self) -> IntegratorConfig:
        it = self.integrator
        return IntegratorConfig(
            method=it.method, rtol=it.rtol, atol=it.atol, dt_init=it.dt_init,
            dt_min=it.dt_min, dt_max=it.dt_max, positivity_floor=it.positivity_floor,
            horizon=it.horizon, record_every=it.record_every,
            exponents=tuple(self.analysis.exponents), equilibrium_tol=it.equilibrium_tol,
            max_steps=it.max_steps,
        )


# ---------------------------------------------------------------------------
# parsing


def _coerce(section: str, key: str, value, default, hint):
    """Check ``value`` against the field's annotated type."""
    where = f"{section}.{key}"
    text = str(hint)
    if "bool" in text:
        if not isinstance(value, bool):
            raise ValidationError(f"{where} must be a boolean")
        return value
    if text.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{where} must be an integer")
        return value
    if text.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{where} must be a number")
        return float(value)
    if text.startswith("str"):
        if not isinstance(value, str):
            raise ValidationError(f"{where} must be a string")
        return value
    if text.startswith("list"):
        if not isinstance(value, list):
            raise ValidationError(f"{where} must be an array")
        return value
    return value


def _build(cls, section: str, table: dict):
    if not isinstance(table, dict):
        raise ParseError(f"[{section}] must be a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in table.items():
        if key not in fields:
            raise ParseError(f"unknown key '{section}.{key}'")
        kwargs[key] = _coerce(section, key, value, fields[key].default, fields[key].type)
    return cls(**kwargs)


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document.

    Raises
    ------
    ParseError
        For malformed TOML or unknown sections and keys (the message names
        the key, e.g. ``integrater.rtol``).
    ValidationError
        When a value violates a constraint.
    """
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(f"malformed scenario: {exc}") from None
    kwargs = {}
    for key, value in data.items():
        if key == "seed":
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ValidationError("seed must be a nonnegative integer")
            kwargs["seed"] = value
            continue
        if key not in _SECTIONS:
            if isinstance(value, dict):
                for sub in value:
                    raise ParseError(f"unknown key '{key}.{sub}'")
            raise ParseError(f"unknown key '{key}'")
        kwargs[key] = _build(_SECTIONS[key], key, value)
    s = Scenario(**kwargs)
    validate_scenario(s)
    return s


def validate_scenario(s: Scenario) -> None:
    g = s.graph
    if (g.file is None) == (g.family is None):
        raise ValidationError("graph needs exactly one of 'file' or 'family'")
    if g.family is not None:
        if g.family not in FAMILIES:
            raise ValidationError(f"graph.family must be one of {FAMILIES}")
        if g.size is None or g.size < 1:
            raise ValidationError("graph.size must be a positive integer")
    TruncationMode.parse(g.mode)
    if g.weight_range is not None:
        if len(g.weight_range) != 2 or not 0 < g.weight_range[0] <= g.weight_range[1]:
            raise ValidationError("graph.weight_range must be [low, high] with 0 < low <= high")
    if s.potential.kind not in ("linear", "zero", "file"):
        raise ValidationError("potential.kind must be linear, zero or file")
    if s.potential.kind == "linear" and s.potential.slope < 0:
        raise ValidationError("potential.slope must be nonnegative")
    if s.potential.kind == "file" and not s.potential.file:
        raise ValidationError("potential.kind = 'file' needs potential.file")
    if s.initial.kind not in ("uniform", "perturbed", "exponential", "file"):
        raise ValidationError("initial.kind must be uniform, perturbed, exponential or file")
    if not 0 <= s.initial.amplitude < 1:
        raise ValidationError("initial.amplitude must lie in [0, 1)")
    if s.initial.kind == "file" and not s.initial.file:
        raise ValidationError("initial.kind = 'file' needs initial.file")
    if s.integrator.method not in METHODS:
        raise ValidationError(f"integrator.method must be one of {METHODS}")
    for r in s.analysis.exponents:
        if not (r == math.inf or (isinstance(r, int) and r > 0 and r % 2 == 0)):
            raise ValidationError(f"analysis.exponents: {r!r} is not an even integer or inf")
    s.integrator_config()  # reuses the integrator's own checks


def emit_scenario(s: Scenario) -> str:
    return tomli_w.dumps(s.to_dict())


def load_scenario(path) -> Scenario:
    return parse_scenario(Path(path).read_text())


# ---------------------------------------------------------------------------
# building model objects


def _resolve(path: str, base: Path | None) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base is None else base / p


def build_graph_from_spec(spec: GraphSpec, seed: int, base: Path | None = None) -> WeightedGraph:
    if spec.file is not None:
        return io.read_edge_list(_resolve(spec.file, base))
    kwargs = {}
    if spec.family == "random":
        kwargs = {"degree": spec.degree, "seed": seed}
        if spec.weight_range is not None:
            kwargs["weight_range"] = tuple(spec.weight_range)
    return generate_family(spec.family, spec.size, TruncationMode.parse(spec.mode), **kwargs)


def build_potential(spec: PotentialSpec, g: WeightedGraph, base: Path | None = None):
    if spec.kind == "zero":
        return zero_potential(g)
    if spec.kind == "file":
        return make_potential(io.read_vertex_json(_resolve(spec.file, base), g.n), g)
    return potential_from_distance(g, spec.slope) if spec.slope > 0 else zero_potential(g)


def build_initial(spec: InitialSpec, g: WeightedGraph, seed: int, base: Path | None = None):
    if spec.kind == "uniform":
        return make_density(np.ones(g.n), g)
    if spec.kind == "file":
        return make_density(io.read_vertex_json(_resolve(spec.file, base), g.n), g)
    if spec.kind == "exponential":
        return make_density(np.exp(-spec.rate * g.root_distance), g)
    rng = np.random.default_rng(seed)
    return make_density(1.0 + spec.amplitude * rng.uniform(-1.0, 1.0, g.n), g)


# ---------------------------------------------------------------------------
# running


@dataclass
class RunManifest:
    scenario_hash: str
    version: str
    started: float
    finished: float
    files: dict[str, str]
    headline: dict
    violations: list[str]
    exit_code: int
    error: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _json_float(x: float):
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


DIAGNOSTIC_COLUMNS = (
    "t", "mass_defect", "free_energy", "relative_energy", "dissipation", "min_rho",
    "second_moment",
)


def _check_invariants(traj, g: WeightedGraph, s: Scenario, table) -> list[str]:
    out = []
    d = traj.diagnostics
    if g.mode is TruncationMode.CLOSED:
        worst = float(np.max(d["mass_defect"]))
        if worst > s.analysis.mass_tol:
            out.append(f"mass defect {worst:.3e} exceeds {s.analysis.mass_tol:g}")
        rise = np.diff(d["free_energy"])
        if rise.size and rise.max() > s.analysis.energy_slack:
            k = int(np.argmax(rise))
            out.append(f"free energy increased by {rise[k]:.3e} at t={traj.times[k + 1]:.6g}")
    if float(np.min(d["min_rho"])) <= 0:
        out.append("density lost positivity")
    if s.analysis.require_monotone_norms:
        for col, ok in table.monotone.items():
            moving = table.norms[col][:-1] > s.integrator.atol
            if not ok and np.any(np.diff(table.norms[col])[moving] >= 0):
                out.append(f"{col} is not strictly decreasing")
    if traj.underflow:
        out.append(f"StepSizeUnderflow: {traj.message}")
    if traj.status == "max_steps":
        out.append(f"horizon not reached: {traj.message}")
    return out


def run_scenario(s: Scenario, directory=None, base: Path | None = None) -> RunManifest:
    """Run a scenario and write its outputs; the manifest is written last.

    Files: ``trajectory.csv`` (``t, rho_0, ..., rho_{n-1}``),
    ``diagnostics.csv`` (:data:`DIAGNOSTIC_COLUMNS` then one distance
    column per exponent), ``gibbs.json`` and, unless disabled, the PNG
    figures ``distances.png``, ``energy.png`` and ``snapshots.png``.
    """
    out = Path(directory if directory is not None else s.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    files: dict[str, str] = {}
    headline: dict = {}
    violations: list[str] = []
    error = None
    try:
        g = build_graph_from_spec(s.graph, s.seed, base)
        psi = build_potential(s.potential, g, base)
        rho0 = build_initial(s.initial, g, s.seed, base)
        cfg = s.integrator_config()
        traj = integrate(rho0, psi, g, cfg)
        star = gibbs_density(g, psi)
        table = convergence_diagnostics(traj, star, cfg.exponents, g)
        rel = np.array([free_energy(x, psi, g).relative for x in traj.states])

        written = []
        io.write_csv(out / "trajectory.csv", io.trajectory_header(g.n),
                     np.column_stack([traj.times, traj.states]))
        written.append("trajectory.csv")
        d = traj.diagnostics
        norm_cols = [norm_column(r) for r in cfg.exponents]
        cols = [traj.times, d["mass_defect"], d["free_energy"], rel, d["dissipation"],
                d["min_rho"], d["second_moment"]] + [d[c] for c in norm_cols]
        io.write_csv(out / "diagnostics.csv", list(DIAGNOSTIC_COLUMNS) + norm_cols,
                     np.column_stack(cols))
        written.append("diagnostics.csv")
        io.write_vertex_json(star.values, out / "gibbs.json")
        written.append("gibbs.json")
        if s.output.figures:
            plotting.plot_distances(traj.times, {c: d[c] for c in norm_cols}, out / "distances.png")
            plotting.plot_energy(traj.times, rel, d["min_rho"], out / "energy.png")
            plotting.plot_snapshots(traj.times, traj.states, star.values, out / "snapshots.png")
            written += ["distances.png", "energy.png", "snapshots.png"]
        files = {name: sha256_file(out / name) for name in written}

        headline = {
            "status": traj.status,
            "final_time": float(traj.times[-1]),
            "steps": traj.steps,
            "rejected": traj.rejected,
            "final_mass_defect": float(d["mass_defect"][-1]),
            "min_rho": float(np.min(d["min_rho"])),
            "final_relative_energy": float(rel[-1]),
            "k_gibbs": star.norm,
            "final_distances": {c: _json_float(d[c][-1]) for c in norm_cols},
            "fitted_rates": {c: _json_float(v) for c, v in table.rates.items()},
            "monotone": dict(table.monotone),
        }
        if g.mode is TruncationMode.ABSORBING:
            headline["leakage"] = float(1.0 - g.measure @ traj.final)
        violations = _check_invariants(traj, g, s, table)
        if traj.underflow:
            error = f"StepSizeUnderflow: {traj.message}"
        code = EXIT_INVARIANT if violations else EXIT_OK
    except StepSizeUnderflow as exc:
        error, code = f"StepSizeUnderflow: {exc}", EXIT_INVARIANT
    except (ValidationError, ParseError, ValueError) as exc:
        error, code = f"{type(exc).__name__}: {exc}", EXIT_VALIDATION
    except GraphFPEError as exc:
        error, code = f"{type(exc).__name__}: {exc}", EXIT_INVARIANT

    manifest = RunManifest(
        s.digest(), __version__, started, time.time(), files, headline, violations, code, error
    )
    (out / "manifest.json").write_text(manifest.to_json() + "\n")
    return manifest


def apply_override(s: Scenario, key: str, value) -> Scenario:
    """Copy of ``s`` with dotted ``key`` (e.g. ``potential.slope``) set to ``value``."""
    data = s.to_dict()
    section, _, name = key.partition(".")
    if not name:
        if section != "seed":
            raise ParseError(f"unknown key '{key}'")
        data["seed"] = value
    else:
        if section not in data:
            raise ParseError(f"unknown key '{key}'")
        data[section][name] = value
    return parse_scenario(tomli_w.dumps(data))
