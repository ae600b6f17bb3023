"""Weighted graphs and their finite truncations.

A :class:`WeightedGraph` stores an undirected graph with symmetric positive
edge weights ``w_ij`` and a vertex measure ``pi_i``.  Infinite graphs are
represented by finite windows in one of two truncation modes:

``closed``
    ``pi`` is recomputed from the retained edges, so ``pi_i = sum_j w_ij``
    holds exactly and the truncated graph is itself a closed system.
``absorbing``
    ``pi`` is inherited from the parent (infinite) graph.  The per-vertex
    deficit ``pi_i - sum_j w_ij`` is the weight of removed edges; dynamics
    treat the removed neighbours as vacuum, so mass leaks through them.

Vertices are the integers ``0 .. n-1``.  Undirected edges are stored once
with ``head < tail``.
"""
from __future__ import annotations

import enum
import json
from collections import deque
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

from .errors import (
    AsymmetricWeight,
    DisconnectedGraph,
    DuplicateEdge,
    InvalidSize,
    InvalidVertex,
    NonpositiveWeight,
    SelfLoop,
    ValidationError,
)

CLOSED_RTOL = 1e-12


class TruncationMode(str, enum.Enum):
    CLOSED = "closed"
    ABSORBING = "absorbing"

    @classmethod
    def parse(cls, value: "TruncationMode | str") -> "TruncationMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(
                f"unknown truncation mode {value!r}; expected 'closed' or 'absorbing'"
            ) from None


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class WeightedGraph:
    """Immutable connected weighted graph with a vertex measure.

    Use :func:`build_graph` or :func:`generate_family` rather than calling
    the constructor directly; they perform all validation.

    Attributes
    ----------
    n : int
        Number of vertices.
    heads, tails : ndarray of int, shape (m,)
        Edge endpoints with ``heads < tails``.
    weights : ndarray, shape (m,)
        Edge weights ``w_ij > 0``.
    measure : ndarray, shape (n,)
        Vertex measure ``pi_i > 0``.
    root : int
        Reference vertex ``x_1`` for distances and second moments.
    mode : TruncationMode
    labels : tuple or None
        Optional vertex labels identifying vertices across nested windows
        (integer coordinates for lattice windows, heap indices for trees).
    """

    def __init__(self, n, heads, tails, weights, measure, root, mode, labels=None):
        self.n = int(n)
        self.heads = _frozen(np.asarray(heads, dtype=np.intp))
        self.tails = _frozen(np.asarray(tails, dtype=np.intp))
        self.weights = _frozen(np.asarray(weights, dtype=float))
        self.measure = _frozen(np.asarray(measure, dtype=float))
        self.root = int(root)
        self.mode = TruncationMode.parse(mode)
        self.labels = tuple(labels) if labels is not None else None

    def __repr__(self):
        return (
            f"WeightedGraph(n={self.n}, edges={self.n_edges}, "
            f"mode={self.mode.value}, root={self.root})"
        )

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return (
            self.n == other.n
            and self.root == other.root
            and self.mode == other.mode
            and np.array_equal(self.heads, other.heads)
            and np.array_equal(self.tails, other.tails)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.measure, other.measure)
        )

    __hash__ = None

    @property
    def n_edges(self) -> int:
        return len(self.weights)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [
            (int(i), int(j), float(w))
            for i, j, w in zip(self.heads, self.tails, self.weights)
        ]

    @cached_property
    def weight_matrix(self) -> sp.csr_matrix:
        """Symmetric sparse matrix of edge weights."""
        w = sp.coo_matrix(
            (
                np.concatenate([self.weights, self.weights]),
                (
                    np.concatenate([self.heads, self.tails]),
                    np.concatenate([self.tails, self.heads]),
                ),
            ),
            shape=(self.n, self.n),
        )
        return w.tocsr()

    @cached_property
    def weighted_degree(self) -> np.ndarray:
        """``sum_j w_ij`` over retained edges."""
        deg = np.zeros(self.n)
        np.add.at(deg, self.heads, self.weights)
        np.add.at(deg, self.tails, self.weights)
        return _frozen(deg)

    @cached_property
    def deficit(self) -> np.ndarray:
        if self.mode is TruncationMode.CLOSED:
            return _frozen(np.zeros(self.n))
        d = self.measure - self.weighted_degree
        # rounding noise on interior vertices
        d[np.abs(d) <= CLOSED_RTOL * self.measure] = 0.0
        return _frozen(d)

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in zip(self.heads, self.tails):
            adj[i].append(int(j))
            adj[j].append(int(i))
        return tuple(tuple(sorted(a)) for a in adj)

    @property
    def min_weight(self) -> float:
        return float(self.weights.min())

    @property
    def max_weight(self) -> float:
        return float(self.weights.max())

    @property
    def max_degree(self) -> int:
        """Uniform local finiteness bound ``C_V``."""
        return max(len(a) for a in self.neighbors)

    @cached_property
    def growth_constant(self) -> float:
        """``K_growth = max over adjacent (i, j) of pi_j / pi_i``."""
        pi_h = self.measure[self.heads]
        pi_t = self.measure[self.tails]
        return float(max(np.max(pi_t / pi_h), np.max(pi_h / pi_t)))

    @cached_property
    def distances(self) -> np.ndarray:
        """All-pairs hop distances as an integer matrix."""
        d = shortest_path(self.weight_matrix, unweighted=True, directed=False)
        return _frozen(d.astype(np.int64))

    @cached_property
    def root_distance(self) -> np.ndarray:
        return _frozen(_bfs(self.neighbors, self.root))

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "root": self.root,
            "mode": self.mode.value,
            "edges": [[i, j, w] for i, j, w in self.edges],
            "measure": self.measure.tolist(),
        }
        if self.labels is not None:
            out["labels"] = list(self.labels)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "WeightedGraph":
        mode = TruncationMode.parse(data.get("mode", "closed"))
        measure = data.get("measure") if mode is TruncationMode.ABSORBING else None
        return build_graph(
            [tuple(e) for e in data["edges"]],
            mode=mode,
            root=data.get("root", 0),
            measure=measure,
            n=data.get("n"),
            labels=data.get("labels"),
        )


def _bfs(neighbors: Sequence[Sequence[int]], source: int) -> np.ndarray:
    dist = np.full(len(neighbors), -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        i = queue.popleft()
        for j in neighbors[i]:
            if dist[j] < 0:
                dist[j] = dist[i] + 1
                queue.append(j)
    return dist


def build_graph(
    edges: Iterable[tuple[int, int, float]],
    mode: TruncationMode | str = TruncationMode.CLOSED,
    root: int = 0,
    measure: Sequence[float] | None = None,
    n: int | None = None,
    labels: Sequence | None = None,
) -> WeightedGraph:
    """Validate an edge list and build a :class:`WeightedGraph`.

    Parameters
    ----------
    edges : iterable of (i, j, w)
        Undirected edges.  An edge may be listed in both orientations only
        if both carry the same weight.
    mode : TruncationMode or str
        ``closed`` computes ``pi`` from the weights; ``absorbing`` requires
        the parent measure through ``measure``.
    root : int
        Reference vertex.
    measure : sequence of float, optional
        Parent measure, required in absorbing mode and ignored otherwise.
    n : int, optional
        Vertex count; inferred as ``max index + 1`` when omitted.

    Raises
    ------
    NonpositiveWeight, SelfLoop, DuplicateEdge, AsymmetricWeight,
    InvalidVertex, DisconnectedGraph, ValidationError
    """
    mode = TruncationMode.parse(mode)
    edges = list(edges)
    if not edges:
        raise InvalidSize("edge list is empty")

    stored: dict[tuple[int, int], float] = {}
    seen_directed: set[tuple[int, int]] = set()
    for e in edges:
        if len(e) != 3:
            raise ValidationError(f"edge {e!r} is not an (i, j, w) triple")
        i, j, w = int(e[0]), int(e[1]), float(e[2])
        if i < 0 or j < 0:
            raise InvalidVertex(f"negative vertex index in edge ({i}, {j})")
        if i == j:
            raise SelfLoop(f"self-loop at vertex {i}")
        if not (w > 0 and np.isfinite(w)):
            raise NonpositiveWeight(f"edge ({i}, {j}) has weight {w!r}")
        if (i, j) in seen_directed:
            raise DuplicateEdge(f"edge ({i}, {j}) listed twice")
        seen_directed.add((i, j))
        key = (min(i, j), max(i, j))
        if key in stored:
            if stored[key] != w:
                raise AsymmetricWeight(
                    f"edge ({key[0]}, {key[1]}) has weights {stored[key]!r} "
                    f"and {w!r} in opposite orientations"
                )
            continue
        stored[key] = w

    max_index = max(max(k) for k in stored)
    if n is None:
        n = max_index + 1
    n = int(n)
    if max_index >= n:
        raise InvalidVertex(f"vertex {max_index} out of range for n={n}")
    if n < 2:
        raise InvalidSize("a graph needs at least two vertices")
    if not 0 <= int(root) < n:
        raise InvalidVertex(f"root {root} out of range for n={n}")

    keys = sorted(stored)
    heads = np.array([k[0] for k in keys], dtype=np.intp)
    tails = np.array([k[1] for k in keys], dtype=np.intp)
    weights = np.array([stored[k] for k in keys])

    deg = np.zeros(n)
    np.add.at(deg, heads, weights)
    np.add.at(deg, tails, weights)

    if mode is TruncationMode.CLOSED:
        pi = deg
    else:
        if measure is None:
            raise ValidationError("absorbing mode requires the parent measure")
        pi = np.asarray(measure, dtype=float)
        if pi.shape != (n,):
            raise ValidationError(f"measure has shape {pi.shape}, expected ({n},)")
        if np.any(~np.isfinite(pi)) or np.any(pi <= 0):
            raise ValidationError("measure entries must be positive and finite")
        short = pi - deg < -CLOSED_RTOL * pi
        if np.any(short):
            i = int(np.flatnonzero(short)[0])
            raise ValidationError(
                f"vertex {i}: parent measure {pi[i]!r} is below retained weight {deg[i]!r}"
            )

    g = WeightedGraph(n, heads, tails, weights, pi, root, mode, labels)
    dist = _bfs(g.neighbors, g.root)
    if np.any(dist < 0):
        missing = int(np.flatnonzero(dist < 0)[0])
        raise DisconnectedGraph(f"vertex {missing} is not reachable from root {g.root}")
    return g


def graph_distance(g: WeightedGraph, i: int, j: int) -> int:
    """Hop-count shortest-path length between vertices ``i`` and ``j``."""
    if not (0 <= i < g.n and 0 <= j < g.n):
        raise InvalidVertex(f"vertex pair ({i}, {j}) out of range for n={g.n}")
    if i == g.root:
        return int(g.root_distance[j])
    if j == g.root:
        return int(g.root_distance[i])
    return int(g.distances[i, j])


def truncation_deficit(g: WeightedGraph) -> np.ndarray:
    """Per-vertex weight of removed edges, ``pi_i - sum_j w_ij`` (zero when closed)."""
    return np.array(g.deficit)


# ---------------------------------------------------------------------------
# generators

FAMILIES = ("path", "cycle", "lattice", "tree", "random")


def _finish(edges, n, mode, root, parent_measure, labels):
    mode = TruncationMode.parse(mode)
    measure = parent_measure if mode is TruncationMode.ABSORBING else None
    return build_graph(edges, mode=mode, root=root, measure=measure, n=n, labels=labels)


def path_graph(n: int, mode="closed", weight: float = 1.0) -> WeightedGraph:
    """Path ``0 - 1 - ... - n-1`` rooted at 0.

    The parent of an absorbing window is the half-line, so only the far
    end loses an edge.
    """
    if n < 2:
        raise InvalidSize("path needs n >= 2")
    edges = [(i, i + 1, weight) for i in range(n - 1)]
    parent = np.full(n, 2.0 * weight)
    parent[0] = weight
    return _finish(edges, n, mode, 0, parent, range(n))


def cycle_graph(n: int, mode="closed", weight: float = 1.0) -> WeightedGraph:
    """Cycle on ``n >= 3`` vertices; it is its own parent, so nothing leaks."""
    if n < 3:
        raise InvalidSize("cycle needs n >= 3")
    edges = [(i, (i + 1) % n, weight) for i in range(n)]
    return _finish(edges, n, mode, 0, np.full(n, 2.0 * weight), range(n))


def lattice_window(window: int, mode="closed", weight: float = 1.0) -> WeightedGraph:
    """Window ``{-window .. window}`` of the integer lattice, rooted at 0.

    Vertex ``k`` carries label ``k - window``.
    """
    if window < 1:
        raise InvalidSize("lattice window must be >= 1")
    n = 2 * window + 1
    edges = [(i, i + 1, weight) for i in range(n - 1)]
    return _finish(
        edges, n, mode, window, np.full(n, 2.0 * weight), range(-window, window + 1)
    )


def binary_tree(depth: int, mode="closed", weight: float = 1.0) -> WeightedGraph:
    """Complete binary tree in heap order; the parent graph is the infinite tree."""
    if depth < 1:
        raise InvalidSize("tree depth must be >= 1")
    n = 2 ** (depth + 1) - 1
    edges = [(i, c, weight) for i in range(n) for c in (2 * i + 1, 2 * i + 2) if c < n]
    parent = np.full(n, 3.0 * weight)
    parent[0] = 2.0 * weight
    return _finish(edges, n, mode, 0, parent, range(n))


def random_sparse(
    n: int,
    degree: int,
    seed: int,
    mode="closed",
    weight: float = 1.0,
    weight_range: tuple[float, float] | None = None,
) -> WeightedGraph:
    """Connected random graph with maximum degree ``degree``.

    A random spanning tree is grown first (each new vertex attaches to a
    random earlier vertex with spare degree), then random chords are added
    until the mean degree reaches ``degree - 1`` or attempts run out.
    Weights are ``weight`` or, if ``weight_range`` is given, drawn
    uniformly from it.  Everything is driven by ``numpy.random.default_rng(seed)``.
    """
    if n < 2:
        raise InvalidSize("random graph needs n >= 2")
    if degree < 2:
        raise InvalidSize("random graph needs degree >= 2")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    deg = np.zeros(n, dtype=int)
    pairs: set[tuple[int, int]] = set()
    for k in range(1, n):
        v = int(order[k])
        candidates = [int(u) for u in order[:k] if deg[u] < degree]
        u = candidates[int(rng.integers(len(candidates)))]
        pairs.add((min(u, v), max(u, v)))
        deg[u] += 1
        deg[v] += 1
    target = int(np.floor((degree - 1) * n / 2))
    attempts = 0
    while len(pairs) < target and attempts < 20 * n:
        attempts += 1
        u, v = (int(x) for x in rng.integers(n, size=2))
        key = (min(u, v), max(u, v))
        if u == v or key in pairs or deg[u] >= degree or deg[v] >= degree:
            continue
        pairs.add(key)
        deg[u] += 1
        deg[v] += 1
    keys = sorted(pairs)
    if weight_range is None:
        w = np.full(len(keys), float(weight))
    else:
        w = rng.uniform(weight_range[0], weight_range[1], size=len(keys))
    edges = [(i, j, float(x)) for (i, j), x in zip(keys, w)]
    # no parent graph: absorbing mode inherits the closed measure
    closed = np.zeros(n)
    for (i, j), x in zip(keys, w):
        closed[i] += x
        closed[j] += x
    return _finish(edges, n, mode, 0, closed, None)


def generate_family(family: str, size: int, mode="closed", **kwargs) -> WeightedGraph:
    """Build a member of a named family.

    ``family`` is one of ``path`` (``size`` vertices), ``cycle``,
    ``lattice`` (window half-width ``size``), ``tree`` (depth ``size``) or
    ``random`` (``size`` vertices; needs ``degree`` and ``seed``).
    Extra keyword arguments go to the underlying generator.
    """
    if family == "path":
        return path_graph(size, mode, **kwargs)
    if family == "cycle":
        return cycle_graph(size, mode, **kwargs)
    if family == "lattice":
        return lattice_window(size, mode, **kwargs)
    if family == "tree":
        return binary_tree(size, mode, **kwargs)
    if family == "random":
        kwargs.setdefault("degree", 3)
        kwargs.setdefault("seed", 0)
        return random_sparse(size, mode=mode, **kwargs)
    raise ValidationError(f"unknown graph family {family!r}; expected one of {FAMILIES}")
