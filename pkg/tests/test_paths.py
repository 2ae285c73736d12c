import itertools
import time

import numpy as np
import pytest

from learning_diagrams.errors import NotParallel
from learning_diagrams.graph import build_graph
from learning_diagrams.paths import (
    Order,
    Path,
    adjacency,
    all_paths,
    format_paths,
    identity,
    lift_order,
    matrix_powers,
    parallel_pairs,
    semiring_multiply,
)

from oracles import dfs_paths, divergence_path_preorder, literal_path_preorder, path_endpoints, random_dag


def triangle():
    return build_graph(["l", "P", "R"], [("X_theta", "l", "P"), ("f", "P", "R"), ("Y", "l", "R")],
                       polarities={"l": "indexing", "P": "non_indexing", "R": "non_indexing"})


def kd_graph():
    return build_graph(
        ["N", "X", "S", "T", "G", "Y"],
        [("pi1", "N", "X"), ("pi2", "N", "Y"), ("t", "X", "T"), ("s", "X", "S"),
         ("sigma_tg", "T", "G"), ("sigma_sg", "S", "G"), ("sigma_sy", "S", "Y")],
        [("pi2", "pi1"), ("t", "s")],
        {"N": "indexing", **{v: "non_indexing" for v in "XSTGY"}},
    )


def cells(matrix):
    return {uv: {p.edges for p in ps} for uv, ps in matrix.nonempty()}


def labels(g, path):
    return ".".join(g.edges[e].label for e in path.edges)


def test_adjacency_of_triangle():
    g = triangle()
    a = adjacency(g)
    l, p, r = range(3)
    assert cells(a) == {(l, p): {(0,)}, (p, r): {(1,)}, (l, r): {(2,)}}


def test_adjacency_parallel_edges_and_empty():
    g = build_graph(["u", "v"], [("a", "u", "v"), ("b", "u", "v")])
    assert len(adjacency(g)[0, 1]) == 2
    assert adjacency(build_graph(["u", "v"], [])).is_zero()


def test_square_of_triangle_adjacency():
    g = triangle()
    a = adjacency(g)
    assert cells(semiring_multiply(a, a)) == {(0, 2): {(0, 1)}}
    assert a @ a == semiring_multiply(a, a)


def test_identity_is_neutral():
    rng = np.random.default_rng(1)
    for _ in range(20):
        g = random_dag(rng)
        a = adjacency(g)
        n = len(g.vertices)
        assert identity(n) @ a == a and a @ identity(n) == a


def test_all_paths_of_triangle_and_chain():
    g = triangle()
    assert {labels(g, p) for p in all_paths(g)[0, 2]} == {"Y", "X_theta.f"}
    chain = build_graph(["a", "b", "c"], [("f", "a", "b"), ("g", "b", "c")])
    assert len(all_paths(chain)[0, 2]) == 1


def test_powers_hold_exact_lengths():
    rng = np.random.default_rng(2)
    for _ in range(40):
        g = random_dag(rng)
        oracle = dfs_paths(g)
        for k, power in enumerate(matrix_powers(g), start=1):
            expected = {uv: {p for p in ps if len(p) == k} for uv, ps in oracle.items()}
            expected = {uv: ps for uv, ps in expected.items() if ps}
            assert cells(power) == expected


def test_products_of_powers_are_length_slices():
    rng = np.random.default_rng(3)
    for _ in range(30):
        g = random_dag(rng, 7, 12)
        powers = matrix_powers(g)
        everything = cells(all_paths(g))
        for j, k in itertools.product(range(1, len(powers) + 1), repeat=2):
            if j + k > len(powers):
                continue
            product = cells(powers[j - 1] @ powers[k - 1])
            sliced = {uv: {p for p in ps if len(p) == j + k} for uv, ps in everything.items()}
            assert product == {uv: ps for uv, ps in sliced.items() if ps}


def test_all_paths_equals_dfs_on_random_dags():
    rng = np.random.default_rng(4)
    for _ in range(100):
        g = random_dag(rng)
        assert cells(all_paths(g)) == dfs_paths(g)


def test_max_len_truncates():
    chain = build_graph(["a", "b", "c", "d"], [("f", "a", "b"), ("g", "b", "c"), ("h", "c", "d")])
    assert max(len(p) for p in all_paths(chain, 2).paths()) == 2


def test_format_paths_lines():
    g = triangle()
    assert format_paths(g, all_paths(g)) == [
        "l -> P : X_theta", "l -> R : X_theta.f", "l -> R : Y", "P -> R : f"]


def test_lift_order_kd_declared_direction():
    g = kd_graph()
    e = {x.label: i for i, x in enumerate(g.edges)}
    teacher = Path(0, 4, (e["pi1"], e["t"], e["sigma_tg"]))
    student = Path(0, 4, (e["pi1"], e["s"], e["sigma_sg"]))
    assert lift_order(g, teacher, student) is Order.LESS_EQ
    assert lift_order(g, student, teacher) is Order.GREATER_EQ
    assert lift_order(g, student, student) is Order.EQUIVALENT


def test_lift_order_incomparable_and_not_parallel():
    g = build_graph(["a", "b", "c"], [("p", "a", "b"), ("q", "a", "b"), ("r", "b", "c"), ("s", "b", "c")],
                    [("r", "s")])
    assert lift_order(g, Path(0, 1, (0,)), Path(0, 1, (1,))) is Order.INCOMPARABLE
    with pytest.raises(NotParallel):
        lift_order(g, Path(0, 1, (0,)), Path(1, 2, (2,)))


def _implemented_relation(g):
    rel = set()
    for (u, v), paths in all_paths(g).nonempty():
        for p, q in itertools.product(paths, repeat=2):
            if lift_order(g, p, q) in (Order.LESS_EQ, Order.EQUIVALENT):
                rel.add((p.edges, q.edges))
    return rel


def _random_ordered_dag(rng):
    g = random_dag(rng, 5, 7)
    m = len(g.edges)
    decls = []
    if m and rng.random() < 0.8:
        decls = [(int(a), int(b)) for a, b in rng.integers(0, m, size=(int(rng.integers(1, 4)), 2))]
    return g.replace(declared=frozenset(decls))


def test_lifted_order_equals_fixed_point_closure():
    rng = np.random.default_rng(6)
    for _ in range(60):
        g = _random_ordered_dag(rng)
        assert _implemented_relation(g) == divergence_path_preorder(g)


def test_lifted_order_contains_parallel_edge_generated_order():
    rng = np.random.default_rng(7)
    for _ in range(60):
        g = _random_ordered_dag(rng)
        assert literal_path_preorder(g) <= _implemented_relation(g)


def test_whiskering_monotone():
    rng = np.random.default_rng(8)
    for _ in range(40):
        g = _random_ordered_dag(rng)
        matrix = all_paths(g)
        everything = matrix.paths()
        for (u, v), ps in matrix.nonempty():
            for p, q in itertools.product(ps, repeat=2):
                if lift_order(g, p, q) not in (Order.LESS_EQ, Order.EQUIVALENT):
                    continue
                for pre in [w for w in everything if w.tgt == u] + [Path(u, u)]:
                    for post in [w for w in everything if w.src == v] + [Path(v, v)]:
                        a, b = pre.then(p).then(post), pre.then(q).then(post)
                        assert lift_order(g, a, b) in (Order.LESS_EQ, Order.EQUIVALENT)


def test_kd_has_exactly_two_pairs():
    g = kd_graph()
    search = parallel_pairs(g)
    assert [p.describe(g) for p in search] == [
        "N -> G : pi1.t.sigma_tg <= pi1.s.sigma_sg",
        "N -> Y : pi2 <= pi1.s.sigma_sy",
    ]
    assert search.warnings == []


def test_triangle_has_one_pair():
    g = triangle()
    (pair,) = parallel_pairs(g)
    assert pair.equivalent
    assert labels(g, pair.first) == "X_theta.f" and labels(g, pair.second) == "Y"
    declared = g.replace(declared=frozenset({(2, 0)}))
    (pair,) = parallel_pairs(declared)
    assert labels(g, pair.first) == "Y" and not pair.equivalent


def test_infinite_targets_give_no_pairs():
    diamond = build_graph(["a", "b", "c", "d"], [("f", "a", "b"), ("g", "a", "c"), ("h", "b", "d"), ("k", "c", "d")],
                          polarities={"a": "indexing"})
    assert len(parallel_pairs(diamond)) == 1
    assert len(parallel_pairs(diamond, metric_finite=lambda v: False)) == 0


def test_incomparable_pairs_warn():
    g = build_graph(["a", "b", "c"], [("p", "a", "c"), ("q", "a", "c"), ("r", "b", "c"), ("s", "b", "c")],
                    [("r", "s")], {"a": "indexing", "b": "indexing"})
    search = parallel_pairs(g)
    assert [labels(g, p.first) for p in search] == ["r"]
    assert len(search.warnings) == 1 and "p" in search.warnings[0]


def test_pair_invariants_on_random_graphs():
    rng = np.random.default_rng(10)
    for _ in range(60):
        g = random_dag(rng, 7, 10, indexing=True)
        finite = {v: bool(rng.random() < 0.7) for v in range(len(g.vertices))}
        first = parallel_pairs(g, metric_finite=finite.__getitem__)
        second = parallel_pairs(g, metric_finite=finite.__getitem__)
        assert first.pairs == second.pairs
        assert first.pairs == sorted(first.pairs)
        for pair in first:
            assert g.is_indexing(pair.src) and finite[pair.tgt]
            assert pair.first != pair.second and pair.first.edges and pair.second.edges
            assert path_endpoints(g, pair.first.edges) == (pair.src, pair.tgt)
            assert path_endpoints(g, pair.second.edges) == (pair.src, pair.tgt)
            assert lift_order(g, pair.first, pair.second) in (Order.LESS_EQ, Order.EQUIVALENT)
            if pair.equivalent:
                assert pair.first.edges < pair.second.edges


def test_all_paths_oracle_fast():
    rng = np.random.default_rng(11)
    start = time.perf_counter()
    for _ in range(200):
        g = random_dag(rng)
        assert cells(all_paths(g)) == dfs_paths(g)
    assert time.perf_counter() - start < 10
