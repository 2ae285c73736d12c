"""Self-contained demo diagrams with seeded synthetic data.

* ``regression``: one linear model closing a triangle ``l -> P -> R``, ``l -> R``.
* ``distill``: a frozen teacher and a student tied by a label term and a
  softened-teacher term.
* ``fewshot``: two classifier squares glued along a shared encoder.
* ``captionshape``: an image-captioning shaped graph with MLP stand-ins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import SGD, Adam, ParamStore
from .compiler import compile_diagram, train
from .composition import Span, find_monomorphisms, freeze_action, apply_on_image, hom_from_labels, pushout
from .dsl import parse_graph
from .graph import build_graph
from .semantics import (
    Dataset,
    EdgeModel,
    LearningDiagram,
    MetricSpec,
    ModelSpec,
    Pairing,
    Parameterized,
    Projection,
    PureFn,
    Space,
    assign_semantics,
)

NAMES = ("regression", "distill", "fewshot", "captionshape")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: SGD | Adam
    steps: int
    seed: int = 0


@dataclass
class Demo:
    name: str
    diagram: LearningDiagram
    config: TrainConfig
    extras: dict = field(default_factory=dict)


def one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    return np.eye(k)[labels]


def blobs(rng: np.random.Generator, n: int, centers: np.ndarray, spread: float):
    """``n`` points around the given centers, labels cycling through them."""
    labels = np.arange(n) % len(centers)
    points = centers[labels] + spread * rng.standard_normal((n, centers.shape[1]))
    return points, labels


# regression

def regression_data(seed: int = 0, n: int = 16, noise: float = 0.1):
    rng = np.random.default_rng([seed, 1])
    x = rng.uniform(-1.0, 1.0, size=(n, 2))
    w = np.array([[1.5], [-0.7]])
    y = x @ w + 0.3 + noise * rng.standard_normal((n, 1))
    return x, y


def regression(seed: int = 0) -> Demo:
    x, y = regression_data(seed)
    ds = Dataset("points", {"x": x, "y": y})
    graph = build_graph(
        ["l", "P", "R"],
        [("X_theta", "l", "P"), ("f", "P", "R"), ("Y", "l", "R")],
        polarities={"l": "indexing", "P": "non_indexing", "R": "non_indexing"},
        name="regression",
    )
    diagram = assign_semantics(
        graph,
        {"l": Space.indexed(ds), "P": Space((2,)), "R": Space((1,), MetricSpec("squared_l2"))},
        {"X_theta": EdgeModel(Projection(("x",))),
         "f": EdgeModel(Parameterized(ModelSpec("affine", (2, 1)), "f")),
         "Y": EdgeModel(Projection(("y",)))},
        seed=seed,
    )
    return Demo("regression", diagram, TrainConfig(SGD(0.05), 2000, seed))


def least_squares(diagram: LearningDiagram) -> tuple[np.ndarray, np.ndarray]:
    """Normal-equation weights and bias for the regression demo's data."""
    ds = diagram.space("l").dataset
    x, y = ds.columns["x"], ds.columns["y"]
    design = np.hstack([x, np.ones((len(x), 1))])
    coef = np.linalg.solve(design.T @ design, design.T @ y)
    return coef[:-1], coef[-1]


# distillation

BLOB_CENTERS = np.array([[2.0, 0.0], [-1.0, 1.7], [-1.0, -1.7]])


def distill_data(seed: int = 0, n: int = 60):
    rng = np.random.default_rng([seed, 2])
    x, labels = blobs(rng, n, BLOB_CENTERS, 0.8)
    return Dataset("blobs", {"x": x, "y": one_hot(labels, 3)})


def pretrain_teacher(ds: Dataset, params: ParamStore, seed: int = 0, steps: int = 200) -> list:
    """Fit the teacher ``mlp:2,16,3`` under key ``t`` with a plain label loss."""
    graph = build_graph(
        ["N", "X", "T", "Y"],
        [("pi1", "N", "X"), ("pi2", "N", "Y"), ("t", "X", "T"), ("sigma", "T", "Y")],
        [("pi2", "pi1")],
        {"N": "indexing", "X": "non_indexing", "T": "non_indexing", "Y": "non_indexing"},
        name="teacher",
    )
    diagram = assign_semantics(
        graph,
        {"N": Space.indexed(ds), "X": Space((2,)), "T": Space((3,)),
         "Y": Space((3,), MetricSpec("cross_entropy"))},
        {"pi1": EdgeModel(Projection(("x",))), "pi2": EdgeModel(Projection(("y",))),
         "t": EdgeModel(Parameterized(ModelSpec("mlp", (2, 16, 3)), "t")),
         "sigma": EdgeModel(PureFn("softmax"))},
        params, seed=seed,
    )
    return train(compile_diagram(diagram), diagram, Adam(0.05), steps, seed)


def distill(seed: int = 0, temperature: float = 2.0) -> Demo:
    ds = distill_data(seed)
    params = ParamStore()
    teacher_history = pretrain_teacher(ds, params, seed)
    graph = build_graph(
        ["N", "X", "S", "T", "G", "Y"],
        [("pi1", "N", "X"), ("pi2", "N", "Y"), ("t", "X", "T"), ("s", "X", "S"),
         ("sigma_tg", "T", "G"), ("sigma_sg", "S", "G"), ("sigma_sy", "S", "Y")],
        [("pi2", "pi1"), ("t", "s")],
        {"N": "indexing", **{v: "non_indexing" for v in "XSTGY"}},
        name="distill",
    )
    diagram = assign_semantics(
        graph,
        {"N": Space.indexed(ds), "X": Space((2,)), "S": Space((3,)), "T": Space((3,)),
         "G": Space((3,), MetricSpec("kl", temperature)),
         "Y": Space((3,), MetricSpec("cross_entropy"))},
        {"pi1": EdgeModel(Projection(("x",))), "pi2": EdgeModel(Projection(("y",))),
         "t": EdgeModel(Parameterized(ModelSpec("mlp", (2, 16, 3)), "t"), frozen=True),
         "s": EdgeModel(Parameterized(ModelSpec("mlp", (2, 4, 3)), "s")),
         "sigma_tg": EdgeModel(PureFn("identity")),
         "sigma_sg": EdgeModel(PureFn("identity")),
         "sigma_sy": EdgeModel(PureFn("softmax"))},
        params, seed=seed,
    )
    return Demo("distill", diagram, TrainConfig(Adam(0.02), 300, seed),
                {"teacher_history": teacher_history})


# few-shot gluing

TASK_CLASSES = (2, 3)
ENCODER = ModelSpec("mlp", (2, 8, 4))


def fewshot_task_data(seed: int, task: int, n: int = 24) -> Dataset:
    rng = np.random.default_rng([seed, 3, task])
    k = TASK_CLASSES[task - 1]
    angles = 2 * np.pi * (np.arange(k) / k + 0.1 * task)
    centers = 1.8 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    x, labels = blobs(rng, n, centers, 0.6)
    return Dataset(f"task{task}", {"x": x, "y": one_hot(labels, k)})


def _dataset_foot(ds: Dataset, i: int, seed: int) -> LearningDiagram:
    k = ds.columns["y"].shape[1]
    graph = build_graph([f"N{i}", "X", f"Y{i}"], [(f"x{i}", f"N{i}", "X"), (f"y{i}", f"N{i}", f"Y{i}")],
                        [(f"y{i}", f"x{i}")],
                        {f"N{i}": "indexing", "X": "non_indexing", f"Y{i}": "non_indexing"},
                        name=f"data{i}")
    return assign_semantics(
        graph,
        {f"N{i}": Space.indexed(ds), "X": Space((2,)), f"Y{i}": Space((k,), MetricSpec("cross_entropy"))},
        {f"x{i}": EdgeModel(Projection(("x",))), f"y{i}": EdgeModel(Projection(("y",)))},
        seed=seed,
    )


def _classifier_foot(k: int, i: int, params: ParamStore, seed: int) -> LearningDiagram:
    graph = build_graph(["X", "F", f"Y{i}"], [("m", "X", "F"), (f"h{i}", "F", f"Y{i}")],
                        polarities={v: "non_indexing" for v in ("X", "F", f"Y{i}")},
                        name=f"classifier{i}")
    return assign_semantics(
        graph,
        {"X": Space((2,)), "F": Space((ENCODER.out_size,)),
         f"Y{i}": Space((k,), MetricSpec("cross_entropy"))},
        {"m": EdgeModel(Parameterized(ENCODER, "m")),
         f"h{i}": EdgeModel(Parameterized(ModelSpec("softmax_head", (ENCODER.out_size, k)), f"h{i}"))},
        params, seed=seed,
    )


def task_square(i: int, params: ParamStore, seed: int = 0) -> LearningDiagram:
    """Glue a task's dataset foot to its classifier foot along ``X`` and ``Y_i``."""
    ds = fewshot_task_data(seed, i)
    data = _dataset_foot(ds, i, seed)
    clf = _classifier_foot(TASK_CLASSES[i - 1], i, params, seed)
    apex = build_graph(["X", f"Y{i}"], [], name=f"shared{i}")
    legs = {"X": "X", f"Y{i}": f"Y{i}"}
    span = Span(apex, data, clf, hom_from_labels(apex, data.graph, legs, {}),
                hom_from_labels(apex, clf.graph, legs, {}))
    square, _, _ = pushout(span)
    return square


def encoder_span(left: LearningDiagram, right: LearningDiagram) -> Span:
    apex = build_graph(["X", "F"], [("m", "X", "F")], name="encoder")
    vmap = {"X": "X", "F": "F"}
    return Span(apex, left, right, hom_from_labels(apex, left.graph, vmap, {"m": "m"}),
                hom_from_labels(apex, right.graph, vmap, {"m": "m"}))


def fewshot(seed: int = 0) -> Demo:
    params = ParamStore()
    squares = [task_square(i, params, seed) for i in (1, 2)]
    glued, left_incl, right_incl = pushout(encoder_span(*squares))
    return Demo("fewshot", glued, TrainConfig(SGD(0.01), 300, seed),
                {"squares": squares, "span": encoder_span(*squares), "inclusions": (left_incl, right_incl)})


# image captioning shape

CAPTION_SOURCE = """\
graph captionshape {
    vertices: N, Z_I_x_Y, Z_L, Y;
    edge CNN_x_Y: N -> Z_I_x_Y;
    edge LSTM: Z_I_x_Y -> Z_L;
    edge Label: Z_I_x_Y -> Y;
    edge Prediction: Z_L -> Y;
    order Label <= LSTM;
    indexing: N;
}
"""

ENCODER_PATTERN = """\
graph encoder {
    vertices: A, B;
    edge e: A -> B;
}
"""


def caption_data(seed: int = 0, n: int = 40) -> Dataset:
    rng = np.random.default_rng([seed, 4])
    centers = 2.0 * rng.standard_normal((4, 6))
    images, labels = blobs(rng, n, centers, 0.5)
    return Dataset("captions", {"image": images, "caption": one_hot(labels, 4)})


def captionshape(seed: int = 0, frozen_encoder: bool = True) -> Demo:
    ds = caption_data(seed)
    graph = parse_graph(CAPTION_SOURCE)
    diagram = assign_semantics(
        graph,
        {"N": Space.indexed(ds), "Z_I_x_Y": Space(((3,), (4,))), "Z_L": Space((5,)),
         "Y": Space((4,), MetricSpec("cross_entropy"))},
        {"CNN_x_Y": EdgeModel(Pairing((Parameterized(ModelSpec("mlp", (6, 8, 3)), "cnn", ("image",)),
                                       Projection(("caption",))))),
         "LSTM": EdgeModel(Parameterized(ModelSpec("mlp", (7, 8, 5)), "lstm")),
         "Label": EdgeModel(Projection((1,))),
         "Prediction": EdgeModel(Parameterized(ModelSpec("softmax_head", (5, 4)), "prediction"))},
        seed=seed,
    )
    extras = {"unfrozen": diagram}
    if frozen_encoder:
        pattern = parse_graph(ENCODER_PATTERN)
        (hom,) = find_monomorphisms(pattern, graph, edges={"e": "CNN_x_Y"})
        diagram = apply_on_image(hom, diagram, freeze_action)
    return Demo("captionshape", diagram, TrainConfig(Adam(0.02), 300, seed), extras)


BUILDERS = {"regression": regression, "distill": distill, "fewshot": fewshot, "captionshape": captionshape}


def build(name: str, seed: int = 0) -> Demo:
    return BUILDERS[name](seed)
