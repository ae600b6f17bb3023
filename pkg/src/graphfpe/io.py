"""Plain-text persistence: edge lists, vertex JSON and CSV tables.

All floats are written with 17 significant digits so that a value read
back compares equal to the one written.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .graph import TruncationMode, WeightedGraph, build_graph


def fmt(x: float) -> str:
    """Round-trip float formatting (``repr``-exact, ``inf``/``nan`` spelled out)."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _text(source) -> str:
    if isinstance(source, Path):
        return source.read_text()
    if isinstance(source, str) and "\n" not in source and Path(source).is_file():
        return Path(source).read_text()
    return str(source)


# ---------------------------------------------------------------------------
# edge lists


def parse_edge_list(text: str) -> WeightedGraph:
    """Parse the edge-list format.

    ::

        mode=absorbing root=0
        0 1 1.0
        1 2 1.0
        pi 0 1
        pi 1 2
        pi 2 2

    The header is optional (defaults ``mode=closed root=0``); ``#`` starts
    a comment.  ``pi i value`` lines give the parent measure and are
    required in absorbing mode.
    """
    mode, root = "closed", 0
    edges, pis = [], {}
    seen_content = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            if seen_content:
                raise ParseError(f"line {lineno}: header must precede edges")
            for tok in line.split():
                key, _, val = tok.partition("=")
                if key == "mode":
                    mode = val
                elif key == "root":
                    try:
                        root = int(val)
                    except ValueError:
                        raise ParseError(f"line {lineno}: root {val!r} is not an integer") from None
                else:
                    raise ParseError(f"line {lineno}: unknown header key {key!r}")
            continue
        seen_content = True
        parts = line.split()
        try:
            if parts[0] == "pi":
                if len(parts) != 3:
                    raise ValueError
                pis[int(parts[1])] = float(parts[2])
            else:
                if len(parts) != 3:
                    raise ValueError
                edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError:
            raise ParseError(f"line {lineno}: expected 'i j w' or 'pi i value', got {raw!r}") from None

    mode = TruncationMode.parse(mode)
    n = None
    measure = None
    if pis:
        n = max(pis) + 1
        if sorted(pis) != list(range(n)):
            raise ValidationError("pi lines must cover every vertex 0..n-1")
        measure = [pis[i] for i in range(n)]
    elif mode is TruncationMode.ABSORBING:
        raise ValidationError("absorbing graph files need 'pi i value' lines")
    return build_graph(edges, mode=mode, root=root, measure=measure, n=n)


def read_edge_list(path) -> WeightedGraph:
    return parse_edge_list(Path(path).read_text())


def format_edge_list(g: WeightedGraph) -> str:
    lines = [f"mode={g.mode.value} root={g.root}"]
    lines += [f"{i} {j} {fmt(w)}" for i, j, w in g.edges]
    if g.mode is TruncationMode.ABSORBING:
        lines += [f"pi {i} {fmt(p)}" for i, p in enumerate(g.measure)]
    return "\n".join(lines) + "\n"


def write_edge_list(g: WeightedGraph, path) -> None:
    Path(path).write_text(format_edge_list(g))


# ---------------------------------------------------------------------------
# vertex JSON


def parse_vertex_json(text: str, n: int | None = None) -> np.ndarray:
    """Vertex values from a JSON list, or an object keyed by vertex index."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if isinstance(data, dict) and "values" in data:
        data = data["values"]
    if isinstance(data, dict):
        try:
            items = {int(k): float(v) for k, v in data.items()}
        except (TypeError, ValueError):
            raise ParseError("object keys must be vertex indices with numeric values") from None
        size = max(items) + 1 if items else 0
        if sorted(items) != list(range(size)):
            raise ValidationError("vertex keys must cover 0..n-1")
        values = np.array([items[i] for i in range(size)])
    elif isinstance(data, list):
        try:
            values = np.array([float(v) for v in data])
        except (TypeError, ValueError):
            raise ParseError("vertex list must contain numbers") from None
    else:
        raise ParseError("expected a JSON list or object of vertex values")
    if n is not None and len(values) != n:
        raise ValidationError(f"got {len(values)} vertex values for a graph with {n} vertices")
    return values


def read_vertex_json(path, n: int | None = None) -> np.ndarray:
    return parse_vertex_json(Path(path).read_text(), n)


def format_vertex_json(values) -> str:
    return "[" + ", ".join(fmt(v) for v in np.asarray(values, dtype=float)) + "]\n"


def write_vertex_json(values, path) -> None:
    Path(path).write_text(format_vertex_json(values))


# ---------------------------------------------------------------------------
# CSV


def format_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    Path(path).write_text(format_csv(header, rows))


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and numeric body of a CSV file written by :func:`write_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty CSV") from None
        body = []
        for lineno, row in enumerate(reader, start=2):
            try:
                body.append([float(v) for v in row])
            except ValueError:
                raise ParseError(f"{path}: line {lineno} is not numeric") from None
    return header, np.array(body).reshape(len(body), len(header))


def trajectory_header(n: int) -> list[str]:
    return ["t"] + [f"rho_{i}" for i in range(n)]


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """``(times, states)`` from a trajectory CSV with columns ``t, rho_0..``."""
    header, body = read_csv(path)
    if not header or header[0] != "t" or not all(h.startswith("rho_") for h in header[1:]):
        raise ParseError(f"{path}: expected header 't, rho_0, rho_1, ...'")
    return body[:, 0], body[:, 1:]
