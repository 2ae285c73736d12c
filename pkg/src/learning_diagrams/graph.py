"""Learning graphs: directed acyclic multigraphs with an edge preorder and
vertex polarity labels.

Vertices and edges are addressed by dense integer ids (their position in
the graph) and carry unique string labels.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from itertools import product

from .errors import CycleDetected, DuplicateLabel, PolarityViolation, UnknownEndpoint


class Polarity(enum.Enum):
    INDEXING = "indexing"
    NON_INDEXING = "non_indexing"


@dataclass(frozen=True)
class Edge:
    label: str
    src: int
    tgt: int


def preorder_closure(pairs: Iterable[tuple[int, int]], n_edges: int) -> frozenset[tuple[int, int]]:
    """Reflexive-transitive closure of ``pairs`` over edge ids ``0..n_edges-1``."""
    above: list[set[int]] = [{e} for e in range(n_edges)]
    for a, b in pairs:
        above[a].add(b)
    # Warshall
    for k in range(n_edges):
        for i in range(n_edges):
            if k in above[i]:
                above[i] |= above[k]
    return frozenset((a, b) for a in range(n_edges) for b in above[a])


class LearningGraph:
    """An immutable learning graph.

    ``declared`` holds the user's order declarations and ``order`` their
    reflexive-transitive closure. ``polarity`` entries may be ``None`` for
    unlabeled vertices (pattern graphs typically leave them unlabeled).
    """

    __slots__ = ("name", "vertices", "edges", "declared", "order", "polarity",
                 "_vindex", "_eindex")

    def __init__(
        self,
        vertices: Iterable[str],
        edges: Iterable[Edge],
        declared: Iterable[tuple[int, int]] = (),
        polarity: Iterable[Polarity | None] | None = None,
        name: str = "g",
        validate: bool = True,
    ):
        self.name = name
        self.vertices = tuple(vertices)
        self.edges = tuple(edges)
        self.declared = frozenset(declared)
        self.order = preorder_closure(self.declared, len(self.edges))
        if polarity is None:
            polarity = [None] * len(self.vertices)
        self.polarity = tuple(polarity)
        self._vindex = {label: i for i, label in enumerate(self.vertices)}
        self._eindex = {e.label: i for i, e in enumerate(self.edges)}
        if validate:
            self._validate()

    def _validate(self) -> None:
        if len(self._vindex) != len(self.vertices):
            raise DuplicateLabel(f"duplicate vertex label in {_dups(self.vertices)}")
        if len(self._eindex) != len(self.edges):
            raise DuplicateLabel(f"duplicate edge label in {_dups(e.label for e in self.edges)}")
        for label in self.vertices:
            if not label:
                raise DuplicateLabel("vertex labels must be nonempty")
        if len(self.polarity) != len(self.vertices):
            raise ValueError("polarity must have one entry per vertex")
        n = len(self.vertices)
        for e in self.edges:
            if not e.label:
                raise DuplicateLabel("edge labels must be nonempty")
            if not (0 <= e.src < n and 0 <= e.tgt < n):
                raise UnknownEndpoint(f"edge {e.label!r} has an endpoint outside the graph")
        for a, b in self.declared:
            if not (0 <= a < len(self.edges) and 0 <= b < len(self.edges)):
                raise UnknownEndpoint("order declaration refers to an unknown edge")
        self.topological_order()
        violations = polarity_check(self)
        if violations:
            raise PolarityViolation("; ".join(str(v) for v in violations))

    # lookups
    def vertex_id(self, label: str) -> int:
        try:
            return self._vindex[label]
        except KeyError:
            raise UnknownEndpoint(f"unknown vertex {label!r}") from None

    def edge_id(self, label: str) -> int:
        try:
            return self._eindex[label]
        except KeyError:
            raise UnknownEndpoint(f"unknown edge {label!r}") from None

    def has_vertex(self, label: str) -> bool:
        return label in self._vindex

    def has_edge(self, label: str) -> bool:
        return label in self._eindex

    def src(self, e: int) -> int:
        return self.edges[e].src

    def tgt(self, e: int) -> int:
        return self.edges[e].tgt

    def out_edges(self, v: int) -> list[int]:
        return [i for i, e in enumerate(self.edges) if e.src == v]

    def is_indexing(self, v: int) -> bool:
        return self.polarity[v] is Polarity.INDEXING

    @property
    def effective_order(self) -> frozenset[tuple[int, int]]:
        """The preorder used for path comparison: total when nothing is declared."""
        if not self.declared:
            m = len(self.edges)
            return frozenset(product(range(m), range(m)))
        return self.order

    def leq(self, a: int, b: int) -> bool:
        return (a, b) in self.effective_order

    def topological_order(self) -> list[int]:
        indeg = [0] * len(self.vertices)
        for e in self.edges:
            indeg[e.tgt] += 1
        ready = [v for v, d in enumerate(indeg) if d == 0]
        out: list[int] = []
        while ready:
            v = ready.pop(0)
            out.append(v)
            for e in self.edges:
                if e.src == v:
                    indeg[e.tgt] -= 1
                    if indeg[e.tgt] == 0:
                        ready.append(e.tgt)
        if len(out) != len(self.vertices):
            stuck = sorted(self.vertices[v] for v in range(len(self.vertices)) if indeg[v] > 0)
            raise CycleDetected(f"graph has a cycle through {', '.join(stuck)}")
        return out

    def replace(self, **changes) -> LearningGraph:
        fields = dict(vertices=self.vertices, edges=self.edges, declared=self.declared,
                      polarity=self.polarity, name=self.name)
        fields.update(changes)
        return LearningGraph(**fields)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LearningGraph):
            return NotImplemented
        return (self.vertices == other.vertices and self.edges == other.edges
                and self.declared == other.declared and self.polarity == other.polarity)

    def __hash__(self) -> int:
        return hash((self.vertices, self.edges, self.declared, self.polarity))

    def __repr__(self) -> str:
        return f"LearningGraph({self.name!r}, {len(self.vertices)} vertices, {len(self.edges)} edges)"


def _dups(labels: Iterable[str]) -> list[str]:
    seen: set[str] = set()
    dups = []
    for label in labels:
        if label in seen:
            dups.append(label)
        seen.add(label)
    return dups


def _polarity(value: Polarity | str | None) -> Polarity | None:
    if value is None or isinstance(value, Polarity):
        return value
    return Polarity(value)


def build_graph(
    vertex_labels: Iterable[str],
    edge_decls: Iterable[tuple[str, str, str]],
    order_decls: Iterable[tuple[str, str]] = (),
    polarities: Mapping[str, Polarity | str | None] | None = None,
    name: str = "g",
    validate: bool = True,
) -> LearningGraph:
    """Build and validate a graph from labels.

    ``edge_decls`` are ``(label, src_label, tgt_label)`` triples and
    ``order_decls`` are ``(lesser_edge, greater_edge)`` label pairs.
    Vertices missing from ``polarities`` stay unlabeled.
    """
    vertex_labels = list(vertex_labels)
    if len(set(vertex_labels)) != len(vertex_labels):
        raise DuplicateLabel(f"duplicate vertex label {_dups(vertex_labels)[0]!r}")
    vindex = {label: i for i, label in enumerate(vertex_labels)}
    edges = []
    for label, s, t in edge_decls:
        for end in (s, t):
            if end not in vindex:
                raise UnknownEndpoint(f"edge {label!r} refers to unknown vertex {end!r}")
        edges.append(Edge(label, vindex[s], vindex[t]))
    eindex: dict[str, int] = {}
    for i, e in enumerate(edges):
        if e.label in eindex:
            raise DuplicateLabel(f"duplicate edge label {e.label!r}")
        eindex[e.label] = i
    declared = []
    for a, b in order_decls:
        for label in (a, b):
            if label not in eindex:
                raise UnknownEndpoint(f"order declaration refers to unknown edge {label!r}")
        declared.append((eindex[a], eindex[b]))
    polarities = polarities or {}
    for label in polarities:
        if label not in vindex:
            raise UnknownEndpoint(f"polarity given for unknown vertex {label!r}")
    polarity = [_polarity(polarities.get(label)) for label in vertex_labels]
    return LearningGraph(vertex_labels, edges, declared, polarity, name=name, validate=validate)


def default_order(graph: LearningGraph) -> LearningGraph:
    """Make the default edge order explicit.

    With no declarations every pair of edges becomes equivalent; otherwise
    the graph is returned unchanged.
    """
    if graph.declared:
        return graph
    m = len(graph.edges)
    return graph.replace(declared=frozenset(product(range(m), range(m))))


@dataclass(frozen=True)
class PolarityIssue:
    edge: str
    src: str
    tgt: str

    def __str__(self) -> str:
        return f"edge {self.edge!r} goes from non-indexing {self.src!r} to indexing {self.tgt!r}"


def polarity_check(graph: LearningGraph) -> list[PolarityIssue]:
    """Every edge leading from a non-indexing vertex into an indexing one."""
    issues = []
    for e in graph.edges:
        if (graph.polarity[e.src] is Polarity.NON_INDEXING
                and graph.polarity[e.tgt] is Polarity.INDEXING):
            issues.append(PolarityIssue(e.label, graph.vertices[e.src], graph.vertices[e.tgt]))
    return issues
