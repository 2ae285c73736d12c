"""Homomorphisms between learning graphs, pattern matching, edits on the
image of a match, and pushout gluing of diagrams.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace

from .errors import ActionShapeMismatch, CycleCreated, CycleDetected, SemanticMismatch, ShapeMismatch
from .graph import Edge, LearningGraph
from .semantics import (
    Dataset,
    EdgeModel,
    LearningDiagram,
    MetricSpec,
    ModelSpec,
    Pairing,
    Parameterized,
    Space,
    assign_semantics,
    freeze,
    unfreeze,
)
from .autodiff import ParamStore


@dataclass(frozen=True)
class DiagramHom:
    """Vertex and edge maps between two graphs, as tuples indexed by source id."""

    source: LearningGraph
    target: LearningGraph
    vmap: tuple[int, ...]
    emap: tuple[int, ...]

    def vertex_labels(self) -> dict[str, str]:
        return {self.source.vertices[v]: self.target.vertices[w] for v, w in enumerate(self.vmap)}

    def edge_labels(self) -> dict[str, str]:
        return {self.source.edges[e].label: self.target.edges[f].label for e, f in enumerate(self.emap)}

    def is_injective(self) -> bool:
        return len(set(self.vmap)) == len(self.vmap) and len(set(self.emap)) == len(self.emap)

    def describe(self) -> str:
        parts = [f"{a}->{b}" for a, b in self.vertex_labels().items()]
        parts += [f"{a}->{b}" for a, b in self.edge_labels().items()]
        return ", ".join(parts)


def hom_from_labels(source: LearningGraph, target: LearningGraph,
                    vertices: Mapping[str, str], edges: Mapping[str, str]) -> DiagramHom:
    """Build a hom from label maps; every source vertex and edge must be mapped."""
    missing = [v for v in source.vertices if v not in vertices]
    missing += [e.label for e in source.edges if e.label not in edges]
    if missing:
        raise SemanticMismatch(f"hom leaves {', '.join(missing)} unmapped")
    vmap = tuple(target.vertex_id(vertices[v]) for v in source.vertices)
    emap = tuple(target.edge_id(edges[e.label]) for e in source.edges)
    return DiagramHom(source, target, vmap, emap)


def identity_hom(graph: LearningGraph) -> DiagramHom:
    return DiagramHom(graph, graph, tuple(range(len(graph.vertices))), tuple(range(len(graph.edges))))


def compose(second: DiagramHom, first: DiagramHom) -> DiagramHom:
    """``second`` after ``first``."""
    if first.target != second.source:
        raise SemanticMismatch("homs do not compose")
    return DiagramHom(first.source, second.target,
                      tuple(second.vmap[v] for v in first.vmap),
                      tuple(second.emap[e] for e in first.emap))


@dataclass
class HomCheck:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def check_hom(hom: DiagramHom) -> HomCheck:
    s, t = hom.source, hom.target
    report = HomCheck()
    if len(hom.vmap) != len(s.vertices) or len(hom.emap) != len(s.edges):
        report.violations.append("maps do not cover the source graph")
        return report
    for v, w in enumerate(hom.vmap):
        if not 0 <= w < len(t.vertices):
            report.violations.append(f"vertex {s.vertices[v]!r} maps outside the target")
            return report
    for e, f in enumerate(hom.emap):
        if not 0 <= f < len(t.edges):
            report.violations.append(f"edge {s.edges[e].label!r} maps outside the target")
            return report
    for e, f in enumerate(hom.emap):
        se, te = s.edges[e], t.edges[f]
        if hom.vmap[se.src] != te.src or hom.vmap[se.tgt] != te.tgt:
            report.violations.append(f"edge {se.label!r} -> {te.label!r} does not preserve endpoints")
    target_order = t.effective_order
    for a, b in sorted(s.order):
        if (hom.emap[a], hom.emap[b]) not in target_order:
            report.violations.append(f"order {s.edges[a].label} <= {s.edges[b].label} is not preserved")
    for v, w in enumerate(hom.vmap):
        pv, pw = s.polarity[v], t.polarity[w]
        if pv is not None and pw is not None and pv is not pw:
            report.violations.append(f"vertex {s.vertices[v]!r} -> {t.vertices[w]!r} changes polarity")
    return report


def find_monomorphisms(pattern: LearningGraph, host: LearningGraph,
                       vertices: Mapping[str, str] | None = None,
                       edges: Mapping[str, str] | None = None) -> list[DiagramHom]:
    """All injective homs ``pattern -> host`` extending the given label assignment.

    Results come in lexicographic order of their (vertex, edge) images.
    """
    pattern.topological_order()
    fixed_v = {pattern.vertex_id(a): host.vertex_id(b) for a, b in (vertices or {}).items()}
    fixed_e = {pattern.edge_id(a): host.edge_id(b) for a, b in (edges or {}).items()}
    nv, ne = len(pattern.vertices), len(pattern.edges)
    if nv > len(host.vertices) or ne > len(host.edges):
        return []

    host_between: dict[tuple[int, int], list[int]] = {}
    for i, e in enumerate(host.edges):
        host_between.setdefault((e.src, e.tgt), []).append(i)
    pattern_between: dict[tuple[int, int], list[int]] = {}
    for i, e in enumerate(pattern.edges):
        pattern_between.setdefault((e.src, e.tgt), []).append(i)

    def vertex_ok(v: int, w: int, vmap: list[int]) -> bool:
        if v in fixed_v and fixed_v[v] != w:
            return False
        pv, pw = pattern.polarity[v], host.polarity[w]
        if pv is not None and pw is not None and pv is not pw:
            return False
        for (a, b), es in pattern_between.items():
            if v not in (a, b) or max(a, b) > v:
                continue
            ia = w if a == v else vmap[a]
            ib = w if b == v else vmap[b]
            if len(host_between.get((ia, ib), ())) < len(es):
                return False
        return True

    results: list[DiagramHom] = []

    def assign_edges(vmap: list[int], emap: list[int], used: set[int]) -> None:
        e = len(emap)
        if e == ne:
            hom = DiagramHom(pattern, host, tuple(vmap), tuple(emap))
            if check_hom(hom):
                results.append(hom)
            return
        pe = pattern.edges[e]
        for f in host_between.get((vmap[pe.src], vmap[pe.tgt]), ()):
            if f in used or (e in fixed_e and fixed_e[e] != f):
                continue
            emap.append(f)
            used.add(f)
            assign_edges(vmap, emap, used)
            used.discard(f)
            emap.pop()

    def assign_vertices(vmap: list[int], used: set[int]) -> None:
        v = len(vmap)
        if v == nv:
            assign_edges(vmap, [], set())
            return
        for w in range(len(host.vertices)):
            if w in used or not vertex_ok(v, w, vmap):
                continue
            vmap.append(w)
            used.add(w)
            assign_vertices(vmap, used)
            used.discard(w)
            vmap.pop()

    assign_vertices([], set())
    return results


# edits on the image of a hom

EdgeAction = Callable[[str, EdgeModel], EdgeModel]
VertexAction = Callable[[str, Space], Space]


def freeze_action(label: str, model: EdgeModel) -> EdgeModel:
    return freeze(model)


def unfreeze_action(label: str, model: EdgeModel) -> EdgeModel:
    return unfreeze(model)


def swap_action(spec: ModelSpec, key: str | None = None) -> EdgeAction:
    """Replace the parameterized parts of an edge with fresh ``spec`` models.

    The new key defaults to ``"<edge>[<spec>]"``. Edges with no
    parameterized part become a plain ``spec`` model.
    """

    def act(label: str, model: EdgeModel) -> EdgeModel:
        base = key or f"{label}[{spec}]"
        counter = iter(range(1_000_000))

        def swap(kind):
            if isinstance(kind, Parameterized):
                i = next(counter)
                return Parameterized(spec, base if i == 0 else f"{base}#{i}", kind.select)
            if isinstance(kind, Pairing):
                return Pairing(tuple(swap(p) for p in kind.parts))
            return kind

        kind = swap(model.kind)
        if kind == model.kind and not isinstance(model.kind, Parameterized):
            kind = Parameterized(spec, base)
        return replace(model, kind=kind)

    return act


def metric_action(metric: MetricSpec) -> VertexAction:
    return lambda label, space: replace(space, metric=metric)


def dataset_action(dataset: Dataset) -> VertexAction:
    return lambda label, space: Space.indexed(dataset, space.metric)


def apply_on_image(hom: DiagramHom, diagram: LearningDiagram,
                   edge_action: EdgeAction | None = None,
                   vertex_action: VertexAction | None = None) -> LearningDiagram:
    """New diagram with the actions applied to the image of ``hom`` only.

    The parameter store is shared with ``diagram``; keys introduced by a
    swap are initialized in it.
    """
    if hom.target != diagram.graph:
        raise SemanticMismatch("hom does not land in this diagram's graph")
    report = check_hom(hom)
    if not report:
        raise SemanticMismatch("; ".join(report.violations))
    vdata = diagram.vertex_data()
    edata = diagram.edge_data()
    g = diagram.graph
    if vertex_action is not None:
        for w in sorted(set(hom.vmap)):
            label = g.vertices[w]
            vdata[label] = vertex_action(label, vdata[label])
    if edge_action is not None:
        for f in sorted(set(hom.emap)):
            label = g.edges[f].label
            edata[label] = edge_action(label, edata[label])
    try:
        return assign_semantics(g, vdata, edata, diagram.params)
    except ShapeMismatch as exc:
        raise ActionShapeMismatch(exc.message) from exc


# pushouts

@dataclass(frozen=True)
class Span:
    apex: LearningGraph
    left: LearningDiagram
    right: LearningDiagram
    left_leg: DiagramHom
    right_leg: DiagramHom


def _fresh(label: str, taken: set[str]) -> str:
    if label not in taken:
        return label
    k = 2
    while f"{label}_{k}" in taken:
        k += 1
    return f"{label}_{k}"


def _rekey(kind, keymap: Mapping[str, str]):
    if isinstance(kind, Parameterized):
        return replace(kind, key=keymap.get(kind.key, kind.key))
    if isinstance(kind, Pairing):
        return Pairing(tuple(_rekey(p, keymap) for p in kind.parts))
    return kind


def check_span(span: Span) -> None:
    for side, leg, foot in (("left", span.left_leg, span.left), ("right", span.right_leg, span.right)):
        if leg.source != span.apex or leg.target != foot.graph:
            raise SemanticMismatch(f"{side} leg does not go from the apex to the {side} foot")
        report = check_hom(leg)
        if not report:
            raise SemanticMismatch(f"{side} leg: " + "; ".join(report.violations))
        if not leg.is_injective():
            raise SemanticMismatch(f"{side} leg is not injective")
    for a, label in enumerate(span.apex.vertices):
        ls = span.left.spaces[span.left_leg.vmap[a]]
        rs = span.right.spaces[span.right_leg.vmap[a]]
        if ls != rs:
            raise SemanticMismatch(f"apex vertex {label!r} is {ls} on the left but {rs} on the right")
    for a, e in enumerate(span.apex.edges):
        lm = span.left.models[span.left_leg.emap[a]]
        rm = span.right.models[span.right_leg.emap[a]]
        if lm != rm:
            raise SemanticMismatch(f"apex edge {e.label!r} has different models in the two feet")


def pushout(span: Span) -> tuple[LearningDiagram, DiagramHom, DiagramHom]:
    """Glue the two feet along the apex.

    Returns the glued diagram and the inclusions of the left and right
    feet. Identified elements keep their left label; right-only labels that
    clash get a numeric suffix, and so do right-only parameter keys.
    """
    check_span(span)
    L, R = span.left, span.right
    lg, rg = L.graph, R.graph

    right_to_left_v = {span.right_leg.vmap[a]: span.left_leg.vmap[a] for a in range(len(span.apex.vertices))}
    right_to_left_e = {span.right_leg.emap[a]: span.left_leg.emap[a] for a in range(len(span.apex.edges))}

    vertices = list(lg.vertices)
    polarity = list(lg.polarity)
    spaces = list(L.spaces)
    taken = set(vertices)
    rv_map: list[int] = []
    for v, label in enumerate(rg.vertices):
        if v in right_to_left_v:
            w = right_to_left_v[v]
            lp, rp = polarity[w], rg.polarity[v]
            if lp is not None and rp is not None and lp is not rp:
                raise SemanticMismatch(f"identified vertex {label!r} has conflicting polarity")
            polarity[w] = lp if lp is not None else rp
            rv_map.append(w)
            continue
        new = _fresh(label, taken)
        taken.add(new)
        rv_map.append(len(vertices))
        vertices.append(new)
        polarity.append(rg.polarity[v])
        spaces.append(R.spaces[v])

    left_keys = set(L.param_specs())
    shared_keys = {k for e in right_to_left_e for k in R.edge_keys(e)}
    keymap: dict[str, str] = {}
    used_keys = set(left_keys)
    for key in sorted(set(R.param_specs())):
        if key in shared_keys:
            keymap[key] = key
            continue
        new = _fresh(key, used_keys)
        used_keys.add(new)
        keymap[key] = new

    edges = list(lg.edges)
    models = list(L.models)
    etaken = {e.label for e in edges}
    re_map: list[int] = []
    for e, edge in enumerate(rg.edges):
        if e in right_to_left_e:
            re_map.append(right_to_left_e[e])
            continue
        new = _fresh(edge.label, etaken)
        etaken.add(new)
        re_map.append(len(edges))
        edges.append(Edge(new, rv_map[edge.src], rv_map[edge.tgt]))
        model = R.models[e]
        models.append(replace(model, kind=_rekey(model.kind, keymap)))

    # a foot without declarations keeps its implicit total order once glued
    left_decl, right_decl = lg.declared, rg.declared
    if left_decl or right_decl:
        left_decl, right_decl = left_decl or lg.effective_order, right_decl or rg.effective_order
    declared = set(left_decl) | {(re_map[a], re_map[b]) for a, b in right_decl}
    try:
        graph = LearningGraph(vertices, edges, declared, polarity, name=f"{lg.name}+{rg.name}")
    except CycleDetected as exc:
        raise CycleCreated(exc.message) from exc

    store = ParamStore()
    for key in L.param_specs():
        store.set(key, L.params[key])
    for key, new in keymap.items():
        if new not in store:
            store.set(new, R.params[key])

    glued = assign_semantics(graph,
                             dict(zip(graph.vertices, spaces)),
                             {e.label: m for e, m in zip(graph.edges, models)},
                             store)
    left_incl = DiagramHom(lg, graph, tuple(range(len(lg.vertices))), tuple(range(len(lg.edges))))
    right_incl = DiagramHom(rg, graph, tuple(rv_map), tuple(re_map))
    return glued, left_incl, right_incl


def iterate_pushouts(base: LearningDiagram, spans: Sequence[Span]) -> tuple[LearningDiagram, list[DiagramHom]]:
    """Fold pushouts over ``spans``, gluing each right foot onto the running result.

    A span's left foot may be the running result itself or ``base``, in
    which case its left leg is pushed along the inclusion of ``base``.
    Returns the result and the inclusions of ``base`` followed by each
    span's right foot.
    """
    result = base
    inclusions = [identity_hom(base.graph)]
    for span in spans:
        if span.left.graph == result.graph:
            left_leg = DiagramHom(span.apex, result.graph, span.left_leg.vmap, span.left_leg.emap)
        elif span.left.graph == base.graph:
            left_leg = compose(inclusions[0], span.left_leg)
        else:
            raise SemanticMismatch("span's left foot is neither the running result nor the base")
        step = Span(span.apex, result, span.right, left_leg, span.right_leg)
        result, left_incl, right_incl = pushout(step)
        inclusions = [compose(left_incl, h) for h in inclusions]
        inclusions.append(right_incl)
    return result, inclusions
