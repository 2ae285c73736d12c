"""Path enumeration over set-valued adjacency matrices, the lifted path
preorder, and extraction of admissible parallel-path pairs.

A path matrix has one cell per vertex pair holding a sorted tuple of
paths. Matrix "multiplication" concatenates paths and "addition" is set
union, so the k-th power of the adjacency matrix holds every path of
length k. On an acyclic graph the powers vanish after V-1 steps.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

from .errors import NotParallel
from .graph import LearningGraph


@dataclass(frozen=True, order=True)
class Path:
    src: int
    tgt: int
    edges: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.edges)

    def then(self, other: Path) -> Path:
        if self.tgt != other.src:
            raise ValueError(f"paths do not compose: {self} then {other}")
        return Path(self.src, other.tgt, self.edges + other.edges)

    def label(self, graph: LearningGraph) -> str:
        if not self.edges:
            return f"id({graph.vertices[self.src]})"
        return ".".join(graph.edges[e].label for e in self.edges)


class PathMatrix:
    """Square matrix over vertex ids whose cells are sorted tuples of paths."""

    def __init__(self, n: int, cells: dict[tuple[int, int], tuple[Path, ...]] | None = None):
        self.n = n
        self._cells = {k: v for k, v in (cells or {}).items() if v}

    def __getitem__(self, uv: tuple[int, int]) -> tuple[Path, ...]:
        return self._cells.get(uv, ())

    def nonempty(self) -> list[tuple[tuple[int, int], tuple[Path, ...]]]:
        return sorted(self._cells.items())

    def paths(self) -> list[Path]:
        return [p for _, cell in self.nonempty() for p in cell]

    def is_zero(self) -> bool:
        return not self._cells

    def __or__(self, other: PathMatrix) -> PathMatrix:
        keys = set(self._cells) | set(other._cells)
        return PathMatrix(self.n, {k: tuple(sorted(set(self[k]) | set(other[k]))) for k in keys})

    def __matmul__(self, other: PathMatrix) -> PathMatrix:
        return semiring_multiply(self, other)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PathMatrix):
            return NotImplemented
        return self.n == other.n and self._cells == other._cells

    def __repr__(self) -> str:
        return f"PathMatrix(n={self.n}, paths={sum(len(c) for c in self._cells.values())})"


def identity(n: int) -> PathMatrix:
    return PathMatrix(n, {(v, v): (Path(v, v),) for v in range(n)})


def adjacency(graph: LearningGraph) -> PathMatrix:
    cells: dict[tuple[int, int], list[Path]] = {}
    for i, e in enumerate(graph.edges):
        cells.setdefault((e.src, e.tgt), []).append(Path(e.src, e.tgt, (i,)))
    return PathMatrix(len(graph.vertices), {k: tuple(sorted(v)) for k, v in cells.items()})


def semiring_multiply(a: PathMatrix, b: PathMatrix) -> PathMatrix:
    if a.n != b.n:
        raise ValueError("path matrices over different vertex sets")
    rows: dict[int, list[tuple[int, tuple[Path, ...]]]] = {}
    for (v, w), cell in b.nonempty():
        rows.setdefault(v, []).append((w, cell))
    out: dict[tuple[int, int], set[Path]] = {}
    for (u, v), left in a.nonempty():
        for w, right in rows.get(v, ()):
            acc = out.setdefault((u, w), set())
            for p in left:
                for q in right:
                    acc.add(p.then(q))
    return PathMatrix(a.n, {k: tuple(sorted(v)) for k, v in out.items()})


def matrix_powers(graph: LearningGraph, max_len: int | None = None) -> list[PathMatrix]:
    """``[A^1, A^2, ...]`` up to the first zero power (or ``max_len``)."""
    a = adjacency(graph)
    limit = max(len(graph.vertices) - 1, 0)
    if max_len is not None:
        limit = min(limit, max_len)
    powers = []
    power = a
    for _ in range(limit):
        if power.is_zero():
            break
        powers.append(power)
        power = power @ a
    return powers


def all_paths(graph: LearningGraph, max_len: int | None = None) -> PathMatrix:
    """Every nonempty path of the (acyclic) graph, grouped by endpoints."""
    result = PathMatrix(len(graph.vertices))
    for power in matrix_powers(graph, max_len):
        result = result | power
    return result


class Order(enum.Enum):
    LESS_EQ = "<="
    GREATER_EQ = ">="
    EQUIVALENT = "=="
    INCOMPARABLE = "<>"


def _divergence(p: Path, q: Path) -> tuple[int, int] | None:
    for a, b in zip(p.edges, q.edges):
        if a != b:
            return a, b
    return None


class HomOrder:
    """The lifted preorder on one hom-set (all paths ``src -> tgt``).

    Two parallel paths that agree up to some vertex and then leave it along
    edges ``a`` and ``b`` are ordered as ``a`` and ``b`` are. Any ordering of
    this shape is preserved by pre- and post-composition, so closing it under
    transitivity gives the smallest monotone preorder generated by the edge
    order.
    """

    def __init__(self, graph: LearningGraph, paths: tuple[Path, ...]):
        self.paths = paths
        self.index = {p: i for i, p in enumerate(paths)}
        order = graph.effective_order
        n = len(paths)
        above = [{i} for i in range(n)]
        for i, j in combinations(range(n), 2):
            d = _divergence(paths[i], paths[j])
            if d is None:
                continue
            a, b = d
            if (a, b) in order:
                above[i].add(j)
            if (b, a) in order:
                above[j].add(i)
        for k in range(n):
            for i in range(n):
                if k in above[i]:
                    above[i] |= above[k]
        self._above = above

    def leq(self, p: Path, q: Path) -> bool:
        return self.index[q] in self._above[self.index[p]]

    def compare(self, p: Path, q: Path) -> Order:
        le, ge = self.leq(p, q), self.leq(q, p)
        if le and ge:
            return Order.EQUIVALENT
        if le:
            return Order.LESS_EQ
        if ge:
            return Order.GREATER_EQ
        return Order.INCOMPARABLE


@lru_cache(maxsize=64)
def _paths_cached(graph: LearningGraph) -> PathMatrix:
    return all_paths(graph)


@lru_cache(maxsize=256)
def _hom_order(graph: LearningGraph, src: int, tgt: int) -> HomOrder:
    cell = _paths_cached(graph)[src, tgt]
    if src == tgt:
        cell = (Path(src, src),) + cell
    return HomOrder(graph, cell)


def lift_order(graph: LearningGraph, p: Path, q: Path) -> Order:
    if (p.src, p.tgt) != (q.src, q.tgt):
        raise NotParallel(f"paths {p.label(graph)} and {q.label(graph)} are not parallel")
    if p == q:
        return Order.EQUIVALENT
    return _hom_order(graph, p.src, p.tgt).compare(p, q)


@dataclass(frozen=True, order=True)
class ParallelPair:
    src: int
    tgt: int
    first: Path
    second: Path
    equivalent: bool = field(default=False, compare=False)

    def describe(self, graph: LearningGraph) -> str:
        rel = "==" if self.equivalent else "<="
        return (f"{graph.vertices[self.src]} -> {graph.vertices[self.tgt]} : "
                f"{self.first.label(graph)} {rel} {self.second.label(graph)}")


@dataclass
class PairSearch:
    """Admissible pairs, plus a warning for each incomparable pair skipped."""

    pairs: list[ParallelPair]
    warnings: list[str]

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, i: int) -> ParallelPair:
        return self.pairs[i]


def parallel_pairs(graph, metric_finite=None) -> PairSearch:
    """Ordered parallel pairs that start at an indexing vertex and end at a
    vertex with a finite metric.

    ``graph`` may be a learning diagram, in which case ``metric_finite``
    defaults to its vertex metrics. For a bare graph every target counts as
    finite unless ``metric_finite`` says otherwise.
    """
    if hasattr(graph, "graph") and hasattr(graph, "spaces"):
        diagram = graph
        graph = diagram.graph
        if metric_finite is None:
            metric_finite = lambda v: diagram.spaces[v].metric.is_finite  # noqa: E731
    if metric_finite is None:
        metric_finite = lambda v: True  # noqa: E731

    pairs: list[ParallelPair] = []
    warnings: list[str] = []
    matrix = _paths_cached(graph)
    for (u, v), cell in matrix.nonempty():
        if len(cell) < 2 or not graph.is_indexing(u) or not metric_finite(v):
            continue
        hom = _hom_order(graph, u, v)
        for p, q in combinations(cell, 2):
            rel = hom.compare(p, q)
            if rel is Order.INCOMPARABLE:
                warnings.append(
                    f"incomparable paths {p.label(graph)} and {q.label(graph)} "
                    f"from {graph.vertices[u]} to {graph.vertices[v]}: no loss term")
            elif rel is Order.GREATER_EQ:
                pairs.append(ParallelPair(u, v, q, p))
            else:
                # cell is sorted, so p precedes q lexicographically
                pairs.append(ParallelPair(u, v, p, q, equivalent=rel is Order.EQUIVALENT))
    pairs.sort()
    return PairSearch(pairs, warnings)


def format_paths(graph: LearningGraph, matrix: PathMatrix) -> list[str]:
    return [f"{graph.vertices[p.src]} -> {graph.vertices[p.tgt]} : {p.label(graph)}"
            for p in matrix.paths()]
