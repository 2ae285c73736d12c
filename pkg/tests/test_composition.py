import numpy as np
import pytest

from learning_diagrams import demos
from learning_diagrams.autodiff import ParamStore
from learning_diagrams.compiler import compile_diagram
from learning_diagrams.composition import (
    DiagramHom,
    Span,
    apply_on_image,
    check_hom,
    compose,
    find_monomorphisms,
    freeze_action,
    hom_from_labels,
    identity_hom,
    iterate_pushouts,
    metric_action,
    pushout,
    swap_action,
    unfreeze_action,
)
from learning_diagrams.dsl import parse_graph
from learning_diagrams.errors import ActionShapeMismatch, CycleCreated, SemanticMismatch
from learning_diagrams.graph import Edge, LearningGraph, build_graph
from learning_diagrams.semantics import (
    Dataset,
    EdgeModel,
    MetricSpec,
    ModelSpec,
    Parameterized,
    Projection,
    PureFn,
    Space,
    assign_semantics,
)

from oracles import random_dag

EDGE = parse_graph("graph edge { vertices: A, B; edge e: A -> B; }")


def square_pattern():
    return build_graph(["N", "X", "Y", "F"],
                       [("x", "N", "X"), ("y", "N", "Y"), ("m", "X", "F"), ("h", "F", "Y")], [("y", "x")])


def make_square(i: int, k: int, params: ParamStore) -> object:
    """A task square N_i, X, Y_i, F built directly (no pushout)."""
    rng = np.random.default_rng(i)
    ds = Dataset(f"task{i}", {"x": rng.standard_normal((6, 2)), "y": np.eye(k)[rng.integers(0, k, 6)]})
    graph = build_graph(
        [f"N{i}", "X", f"Y{i}", "F"],
        [(f"x{i}", f"N{i}", "X"), (f"y{i}", f"N{i}", f"Y{i}"), ("m", "X", "F"), (f"h{i}", "F", f"Y{i}")],
        [(f"y{i}", f"x{i}")],
        {f"N{i}": "indexing", "X": "non_indexing", f"Y{i}": "non_indexing", "F": "non_indexing"},
    )
    return assign_semantics(
        graph,
        {f"N{i}": Space.indexed(ds), "X": Space((2,)), f"Y{i}": Space((k,), MetricSpec("cross_entropy")),
         "F": Space((4,))},
        {f"x{i}": EdgeModel(Projection(("x",))), f"y{i}": EdgeModel(Projection(("y",))),
         "m": EdgeModel(Parameterized(demos.ENCODER, "m")),
         f"h{i}": EdgeModel(Parameterized(ModelSpec("softmax_head", (4, k)), f"h{i}"))},
        params,
    )


def encoder_span(left, right):
    return demos.encoder_span(left, right)


# homs

def test_single_edge_pattern_into_nic_graph():
    d = demos.captionshape(frozen_encoder=False).diagram
    hom = hom_from_labels(EDGE, d.graph, {"A": "N", "B": "Z_I_x_Y"}, {"e": "CNN_x_Y"})
    assert check_hom(hom)


def test_endpoint_violation_reported():
    g = demos.regression().diagram.graph
    hom = hom_from_labels(EDGE, g, {"A": "l", "B": "P"}, {"e": "f"})
    report = check_hom(hom)
    assert not report and "endpoints" in report.violations[0]


def test_identity_hom_and_composition():
    g = demos.distill().diagram.graph
    ident = identity_hom(g)
    assert check_hom(ident)
    assert compose(ident, ident) == ident


def test_order_and_polarity_preservation_checked():
    pattern = build_graph(["a", "b"], [("p", "a", "b"), ("q", "a", "b")], [("p", "q")])
    host = build_graph(["u", "v"], [("r", "u", "v"), ("s", "u", "v")], [("s", "r")])
    bad = hom_from_labels(pattern, host, {"a": "u", "b": "v"}, {"p": "r", "q": "s"})
    assert not check_hom(bad)
    good = hom_from_labels(pattern, host, {"a": "u", "b": "v"}, {"p": "s", "q": "r"})
    assert check_hom(good)
    labeled = build_graph(["a"], [], polarities={"a": "indexing"})
    target = build_graph(["u"], [], polarities={"u": "non_indexing"})
    assert not check_hom(hom_from_labels(labeled, target, {"a": "u"}, {}))


def test_single_edge_matches_each_triangle_edge():
    g = demos.regression().diagram.graph
    matches = find_monomorphisms(EDGE, g)
    assert sorted(m.edge_labels()["e"] for m in matches) == ["X_theta", "Y", "f"]


def test_pattern_larger_than_host():
    host = build_graph(["a"], [])
    assert find_monomorphisms(EDGE, host) == []


def test_square_pattern_matches_two_tasks():
    demo = demos.fewshot()
    glued = demo.diagram.graph
    matches = find_monomorphisms(square_pattern(), glued)
    assert len(matches) == 2
    assert {m.edge_labels()["m"] for m in matches} == {"m"}
    inclusions = demo.extras["inclusions"]
    images = sorted(tuple(sorted(m.edge_labels().values())) for m in matches)
    expected = sorted(tuple(sorted(glued.edges[f].label for f in inc.emap)) for inc in inclusions)
    assert images == expected


def test_partial_assignment_restricts_matches():
    g = demos.regression().diagram.graph
    (only,) = find_monomorphisms(EDGE, g, edges={"e": "f"})
    assert only.vertex_labels() == {"A": "P", "B": "R"}
    assert find_monomorphisms(EDGE, g, vertices={"A": "R"}) == []


def test_matches_invariant_under_relabeling():
    rng = np.random.default_rng(0)
    for _ in range(20):
        host = random_dag(rng, 6, 8)
        pattern = random_dag(rng, 3, 3)
        perm = rng.permutation(len(host.vertices))
        inverse = np.argsort(perm)
        relabeled = LearningGraph([host.vertices[int(p)] for p in perm],
                                  [Edge(e.label, int(inverse[e.src]), int(inverse[e.tgt])) for e in host.edges])
        first = {tuple(sorted(m.vertex_labels().items())) + tuple(sorted(m.edge_labels().items()))
                 for m in find_monomorphisms(pattern, host)}
        second = {tuple(sorted(m.vertex_labels().items())) + tuple(sorted(m.edge_labels().items()))
                  for m in find_monomorphisms(pattern, relabeled)}
        assert first == second
        for m in find_monomorphisms(pattern, host):
            assert check_hom(m) and m.is_injective()


# edits

def test_freeze_only_the_image():
    d = demos.captionshape(frozen_encoder=False).diagram
    (hom,) = find_monomorphisms(EDGE, d.graph, edges={"e": "CNN_x_Y"})
    frozen = apply_on_image(hom, d, freeze_action)
    assert frozen.model("CNN_x_Y").frozen
    assert [m.frozen for m in frozen.models[1:]] == [False] * 3
    assert apply_on_image(hom, frozen, freeze_action) == frozen
    assert apply_on_image(hom, frozen, unfreeze_action) == d


def test_identity_action_keeps_diagram():
    d = demos.distill().diagram
    assert apply_on_image(identity_hom(d.graph), d) == d
    assert apply_on_image(identity_hom(d.graph), d, lambda label, m: m, lambda label, s: s) == d


def test_swap_affine_for_mlp():
    g = build_graph(["a", "b"], [("enc", "a", "b")])
    d = assign_semantics(g, {"a": Space((4,)), "b": Space((3,))},
                         {"enc": EdgeModel(Parameterized(ModelSpec("affine", (4, 3)), "enc"))})
    hom = find_monomorphisms(EDGE, g)[0]
    swapped = apply_on_image(hom, d, swap_action(ModelSpec.parse("mlp:4,8,3")))
    kind = swapped.model("enc").kind
    assert kind.spec == ModelSpec("mlp", (4, 8, 3)) and kind.key == "enc[mlp:4,8,3]"
    assert kind.key in swapped.params
    with pytest.raises(ActionShapeMismatch):
        apply_on_image(hom, d, swap_action(ModelSpec.parse("mlp:5,8,3")))


def test_metric_action_on_vertices():
    d = demos.regression().diagram
    hom = hom_from_labels(build_graph(["v"], []), d.graph, {"v": "R"}, {})
    changed = apply_on_image(hom, d, vertex_action=metric_action(MetricSpec("l1")))
    assert changed.space("R").metric == MetricSpec("l1")
    assert changed.space("P") == d.space("P")


# pushouts

def test_task_square_built_by_pushout():
    params = ParamStore()
    square = demos.task_square(1, params)
    g = square.graph
    assert sorted(g.vertices) == ["F", "N1", "X", "Y1"]
    assert sorted(e.label for e in g.edges) == ["h1", "m", "x1", "y1"]


def test_two_tasks_share_one_encoder():
    demo = demos.fewshot()
    g = demo.diagram.graph
    assert sorted(g.vertices) == ["F", "N1", "N2", "X", "Y1", "Y2"]
    assert sorted(e.label for e in g.edges) == ["h1", "h2", "m", "x1", "x2", "y1", "y2"]
    keys = [k for m in demo.diagram.models for k in m.param_keys()]
    assert keys.count("m") == 1 and sorted(set(keys)) == ["h1", "h2", "m"]


def test_pushout_square_commutes():
    left, right = (make_square(i, k, ParamStore()) for i, k in ((1, 2), (2, 3)))
    span = encoder_span(left, right)
    glued, li, ri = pushout(span)
    a, b = compose(li, span.left_leg), compose(ri, span.right_leg)
    assert a.vmap == b.vmap and a.emap == b.emap
    assert len(glued.graph.vertices) == 4 + 4 - 2 and len(glued.graph.edges) == 4 + 4 - 1


def test_empty_apex_gives_disjoint_union():
    left = demos.regression().diagram
    right = demos.captionshape().diagram
    apex = build_graph([], [])
    span = Span(apex, left, right, DiagramHom(apex, left.graph, (), ()), DiagramHom(apex, right.graph, (), ()))
    glued, _, ri = pushout(span)
    assert len(glued.graph.vertices) == 7 and len(glued.graph.edges) == 7
    assert len(compile_diagram(glued).terms) == 2
    assert glued.params is not left.params


def test_mismatched_semantics_rejected():
    left = make_square(1, 2, ParamStore())
    right = make_square(2, 3, ParamStore())
    right_bad = assign_semantics(right.graph, {**right.vertex_data(), "X": Space((2,), MetricSpec("l2"))},
                                 right.edge_data(), right.params)
    with pytest.raises(SemanticMismatch):
        pushout(encoder_span(left, right_bad))
    other = assign_semantics(right.graph, right.vertex_data(),
                             {**right.edge_data(), "m": EdgeModel(Parameterized(demos.ENCODER, "m2"))})
    with pytest.raises(SemanticMismatch):
        pushout(encoder_span(left, other))


def test_non_injective_leg_rejected():
    apex = build_graph(["a", "b"], [])
    g = build_graph(["u"], [])
    d = assign_semantics(g, {"u": Space((1,))}, {})
    leg = DiagramHom(apex, g, (0, 0), ())
    with pytest.raises(SemanticMismatch):
        pushout(Span(apex, d, d, leg, leg))


def test_gluing_can_create_cycle():
    apex = build_graph(["a", "b"], [])
    left_g = build_graph(["a", "b"], [("f", "a", "b")])
    right_g = build_graph(["a", "b"], [("g", "b", "a")])
    vd = {"a": Space((1,)), "b": Space((1,))}
    left = assign_semantics(left_g, vd, {"f": EdgeModel(PureFn("identity"))})
    right = assign_semantics(right_g, vd, {"g": EdgeModel(PureFn("identity"))})
    legs = {"a": "a", "b": "b"}
    with pytest.raises(CycleCreated):
        pushout(Span(apex, left, right, hom_from_labels(apex, left_g, legs, {}),
                     hom_from_labels(apex, right_g, legs, {})))


def test_right_only_clashes_get_fresh_labels_and_keys():
    params = ParamStore()
    a = make_square(1, 2, params)
    b = make_square(1, 2, ParamStore())
    glued, _, ri = pushout(encoder_span(a, b))
    assert "N1_2" in glued.graph.vertices and "h1_2" in {e.label for e in glued.graph.edges}
    assert glued.model("h1_2").kind.key == "h1_2"
    assert len(compile_diagram(glued).terms) == 2


def _random_span(rng):
    left_g = random_dag(rng, 6, 7)
    nv = len(left_g.vertices)
    shared = sorted(rng.choice(nv, size=int(rng.integers(0, nv + 1)), replace=False).tolist())
    shared_edges = [i for i, e in enumerate(left_g.edges)
                    if e.src in shared and e.tgt in shared and rng.random() < 0.5]
    apex = LearningGraph([left_g.vertices[v] for v in shared],
                         [Edge(left_g.edges[i].label, shared.index(left_g.edges[i].src),
                               shared.index(left_g.edges[i].tgt)) for i in shared_edges])
    extra = int(rng.integers(0, 4))
    right_vertices = [f"r{v}" for v in range(len(shared))] + [f"w{k}" for k in range(extra)]
    right_edges = [Edge(f"c{i}", e.src, e.tgt) for i, e in enumerate(apex.edges)]
    for k in range(int(rng.integers(0, 5))):
        a, b = sorted(rng.choice(len(right_vertices), size=2, replace=False)) if len(right_vertices) > 1 else (0, 0)
        if a != b:
            right_edges.append(Edge(f"n{k}", int(a), int(b)))
    right_g = LearningGraph(right_vertices, right_edges)
    space = Space((1,))
    ident = EdgeModel(PureFn("identity"))
    left = assign_semantics(left_g, dict.fromkeys(left_g.vertices, space), {e.label: ident for e in left_g.edges})
    right = assign_semantics(right_g, dict.fromkeys(right_g.vertices, space), {e.label: ident for e in right_g.edges})
    left_leg = DiagramHom(apex, left_g, tuple(shared), tuple(shared_edges))
    right_leg = DiagramHom(apex, right_g, tuple(range(len(shared))), tuple(range(len(apex.edges))))
    return Span(apex, left, right, left_leg, right_leg)


def _union_find_counts(span):
    parent = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            x = parent[x]
        return x

    for kind, size_l, size_r, lmap, rmap in (
        ("v", len(span.left.graph.vertices), len(span.right.graph.vertices), span.left_leg.vmap, span.right_leg.vmap),
        ("e", len(span.left.graph.edges), len(span.right.graph.edges), span.left_leg.emap, span.right_leg.emap),
    ):
        for i in range(size_l):
            find((kind, "L", i))
        for i in range(size_r):
            find((kind, "R", i))
        for a, b in zip(lmap, rmap):
            parent[find((kind, "L", a))] = find((kind, "R", b))
    roots = {find(x) for x in list(parent)}
    return sum(r[0] == "v" for r in roots), sum(r[0] == "e" for r in roots)


def test_random_pushout_counts_match_union_find():
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(150):
        span = _random_span(rng)
        try:
            glued, li, ri = pushout(span)
        except CycleCreated:
            continue
        checked += 1
        assert (len(glued.graph.vertices), len(glued.graph.edges)) == _union_find_counts(span)
        a, b = compose(li, span.left_leg), compose(ri, span.right_leg)
        assert a.vmap == b.vmap and a.emap == b.emap
    assert checked > 50


def test_iterate_three_heads():
    params = ParamStore()
    base = make_square(1, 2, params)
    spans = [encoder_span(base, make_square(i, 3, params)) for i in (2, 3, 4)]
    glued, incls = iterate_pushouts(base, spans)
    keys = sorted({k for m in glued.models for k in m.param_keys()})
    assert keys == ["h1", "h2", "h3", "h4", "m"]
    assert len(compile_diagram(glued).terms) == 4
    assert len(incls) == 4
    for inc in incls:
        assert check_hom(inc)


def test_iterate_nothing_and_running_result():
    base = make_square(1, 2, ParamStore())
    result, incls = iterate_pushouts(base, [])
    assert result is base and incls == [identity_hom(base.graph)]
    once, _ = iterate_pushouts(base, [encoder_span(base, make_square(2, 3, ParamStore()))])
    twice, _ = iterate_pushouts(base, [encoder_span(base, make_square(2, 3, ParamStore())),
                                       encoder_span(once, make_square(3, 2, ParamStore()))])
    assert len(twice.graph.vertices) == 8


def test_same_head_twice_adds_fresh_copies():
    base = make_square(1, 2, ParamStore())
    head = make_square(2, 3, ParamStore())
    span = encoder_span(base, head)
    glued, _ = iterate_pushouts(base, [span, span])
    assert len(glued.graph.vertices) == 4 + 2 + 2
    assert len(glued.graph.edges) == 4 + 3 + 3
    assert "h2_2" in {e.label for e in glued.graph.edges}
    assert len(compile_diagram(glued).terms) == 3
