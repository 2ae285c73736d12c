"""Vertex spaces, metrics, edge models and learning diagrams.

Points are evaluated in batches: a flat space of shape ``(d,)`` holds an
``(n, d)`` tensor and a product space holds a tuple of such values. The
point of an indexing vertex is the tuple of its dataset's columns.
"""

from __future__ import annotations

import zlib
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .errors import (
    DatasetOnNonIndexing,
    DomainError,
    MissingAssignment,
    NoDatasetOnIndexing,
    ShapeMismatch,
    SharedKeySpecMismatch,
    UnknownEndpoint,
)
from .graph import LearningGraph
from .paths import Path

Shape = tuple  # (d,) for flat spaces, (shape, shape, ...) for products


def is_product(shape: Shape) -> bool:
    return len(shape) > 0 and all(isinstance(s, tuple) for s in shape)


def check_shape(shape: Shape) -> Shape:
    if is_product(shape):
        return tuple(check_shape(s) for s in shape)
    if len(shape) != 1 or not isinstance(shape[0], (int, np.integer)) or shape[0] <= 0:
        raise ShapeMismatch(f"point shapes must be (d,) with d > 0 or products of those, got {shape}")
    return (int(shape[0]),)


def flat_size(shape: Shape) -> int:
    if is_product(shape):
        return sum(flat_size(s) for s in shape)
    return shape[0]


def flatten(value) -> Tensor:
    if isinstance(value, tuple):
        return ad.concat([flatten(v) for v in value], axis=1)
    return value


def _rows(value) -> int:
    while isinstance(value, tuple):
        value = value[0]
    return value.shape[0]


# metrics

_LAWVERE = {"l2", "l1", "asymmetric_gap", "infinite"}
METRIC_KINDS = ("infinite", "l2", "l1", "squared_l2", "cross_entropy", "kl", "asymmetric_gap", "custom")


@dataclass(frozen=True)
class MetricSpec:
    """A distance on points of one space.

    ``kl`` needs a ``temperature``. ``custom`` metrics take ``fn(a, b)``
    over ``(n, d)`` tensors returning the ``(n,)`` row distances, and are
    only available programmatically.
    """

    kind: str = "infinite"
    temperature: float | None = None
    fn: Callable | None = field(default=None, compare=False, repr=False)
    name: str | None = None
    lawvere: bool = False

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == "kl" and not (self.temperature and self.temperature > 0):
            raise ValueError("kl metric needs a positive temperature")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom metric needs a function")

    @property
    def is_finite(self) -> bool:
        return self.kind != "infinite"

    @property
    def is_lawvere(self) -> bool:
        if self.kind == "custom":
            return self.lawvere
        return self.kind in _LAWVERE

    def rows(self, a: Tensor, b: Tensor) -> Tensor:
        """Distances ``d(a[i], b[i])`` for every row, as an ``(n,)`` tensor."""
        if a.shape != b.shape:
            raise ShapeMismatch(f"metric arguments have shapes {a.shape} and {b.shape}")
        k = self.kind
        if k == "infinite":
            same = np.all(a.value == b.value, axis=1)
            return ad.constant(np.where(same, 0.0, np.inf))
        if k == "l2":
            diff = a - b
            return ad.sqrt(ad.sum_(diff * diff, axis=1))
        if k == "squared_l2":
            diff = a - b
            return ad.sum_(diff * diff, axis=1)
        if k == "l1":
            return ad.sum_(ad.abs_(a - b), axis=1)
        if k == "asymmetric_gap":
            return ad.sum_(ad.relu(b - a), axis=1)
        if k == "cross_entropy":
            if np.any(b.value <= 0):
                raise DomainError("cross-entropy needs a strictly positive second argument")
            return -ad.sum_(a * ad.log(b), axis=1)
        if k == "kl":
            t = self.temperature
            log_p = ad.log_softmax(a, t)
            log_q = ad.log_softmax(b, t)
            return ad.sum_(ad.softmax(a, t) * (log_p - log_q), axis=1)
        return self.fn(a, b)

    def __str__(self) -> str:
        if self.kind == "kl":
            return f"kl(T={self.temperature:g})"
        if self.kind == "custom":
            return f"custom({self.name or 'fn'})"
        return self.kind


INFINITE = MetricSpec("infinite")


def metric_eval(spec: MetricSpec, a, b) -> float:
    """Distance between two single points."""
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise ShapeMismatch(f"metric arguments have shapes {a.shape} and {b.shape}")
    return float(spec.rows(Tensor(a[None, :]), Tensor(b[None, :])).value[0])


# data

class Dataset:
    """A finite indexed collection of rows with named 2-D columns."""

    def __init__(self, name: str, columns: Mapping[str, np.ndarray], batch_size: int | None = None,
                 source: str | None = None):
        if not columns:
            raise ShapeMismatch(f"dataset {name!r} has no columns")
        cols = {}
        for cname, data in columns.items():
            arr = np.array(data, dtype=np.float64)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.ndim != 2 or arr.shape[1] == 0:
                raise ShapeMismatch(f"column {cname!r} of {name!r} must be (n, d), got {arr.shape}")
            cols[cname] = arr
        sizes = {arr.shape[0] for arr in cols.values()}
        if len(sizes) != 1:
            raise ShapeMismatch(f"columns of dataset {name!r} have different lengths {sorted(sizes)}")
        n = sizes.pop()
        if n < 1:
            raise ShapeMismatch(f"dataset {name!r} is empty")
        b = n if batch_size is None else int(batch_size)
        if not 1 <= b <= n:
            raise ShapeMismatch(f"batch size {b} not in [1, {n}] for dataset {name!r}")
        self.name = name
        self.columns = cols
        self.batch_size = b
        self.source = source

    @property
    def n(self) -> int:
        return next(iter(self.columns.values())).shape[0]

    @property
    def column_names(self) -> list[str]:
        return list(self.columns)

    @property
    def shape(self) -> Shape:
        return tuple((arr.shape[1],) for arr in self.columns.values())

    def batch(self, rows: np.ndarray | None = None) -> tuple[Tensor, ...]:
        if rows is None:
            return tuple(ad.constant(arr) for arr in self.columns.values())
        return tuple(ad.constant(arr[rows]) for arr in self.columns.values())

    def row(self, i: int) -> tuple[np.ndarray, ...]:
        return tuple(arr[i] for arr in self.columns.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.name == other.name and self.batch_size == other.batch_size
                and list(self.columns) == list(other.columns)
                and all(np.array_equal(self.columns[c], other.columns[c]) for c in self.columns))

    def __hash__(self) -> int:
        return hash((self.name, self.n))

    def __repr__(self) -> str:
        return f"Dataset({self.name!r}, n={self.n}, columns={self.column_names})"


@dataclass(frozen=True)
class Space:
    shape: Shape
    metric: MetricSpec = INFINITE
    dataset: Dataset | None = None

    @classmethod
    def indexed(cls, dataset: Dataset, metric: MetricSpec = INFINITE) -> Space:
        return cls(dataset.shape, metric, dataset)

    def __str__(self) -> str:
        data = f", data={self.dataset.name}" if self.dataset is not None else ""
        return f"{_shape_str(self.shape)} {self.metric}{data}"


def _shape_str(shape: Shape) -> str:
    if is_product(shape):
        return " x ".join(_shape_str(s) for s in shape)
    return f"R^{shape[0]}"


# models

ARCHS = ("affine", "mlp", "softmax_head")


@dataclass(frozen=True)
class ModelSpec:
    """A built-in parameterized architecture.

    ``affine`` has sizes ``(in, out)``, ``mlp`` has ``(in, hidden..., out)``
    with ReLU between layers, ``softmax_head`` is an affine map followed
    by a softmax.
    """

    arch: str
    sizes: tuple[int, ...]

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}")
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if any(s <= 0 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if self.arch == "mlp" and len(sizes) < 2 or self.arch != "mlp" and len(sizes) != 2:
            raise ValueError(f"{self.arch} needs {'at least ' if self.arch == 'mlp' else ''}2 sizes, got {sizes}")

    @classmethod
    def parse(cls, text: str) -> ModelSpec:
        """Parse ``"mlp:4,8,3"`` style specs."""
        arch, _, sizes = text.partition(":")
        try:
            return cls(arch.strip(), tuple(int(s) for s in sizes.split(",")))
        except ValueError as exc:
            raise ValueError(f"bad model spec {text!r}: {exc}") from None

    def __str__(self) -> str:
        return f"{self.arch}:{','.join(map(str, self.sizes))}"

    @property
    def in_size(self) -> int:
        return self.sizes[0]

    @property
    def out_size(self) -> int:
        return self.sizes[-1]

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            shapes[f"W{i}"] = (a, b)
            shapes[f"b{i}"] = (b,)
        return shapes

    def init(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        params = {}
        for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = 1.0 / np.sqrt(a)
            params[f"W{i}"] = rng.uniform(-bound, bound, size=(a, b))
            params[f"b{i}"] = np.zeros(b)
        return params

    def forward(self, params: Mapping[str, Tensor], x: Tensor) -> Tensor:
        layers = len(self.sizes) - 1
        for i in range(layers):
            x = ad.add_bias(ad.matmul(x, params[f"W{i}"]), params[f"b{i}"])
            if self.arch == "mlp" and i < layers - 1:
                x = ad.relu(x)
        if self.arch == "softmax_head":
            x = ad.softmax(x)
        return x


# edge kinds

Field = Union[str, int]


@dataclass(frozen=True)
class Projection:
    """Select components of a product point (by dataset column name or index)."""

    fields: tuple[Field, ...]


class Constant:
    """The same point for every input row."""

    def __init__(self, value):
        self.value = np.atleast_1d(np.array(value, dtype=np.float64))

    def __eq__(self, other):
        return isinstance(other, Constant) and np.array_equal(self.value, other.value)

    def __hash__(self):
        return hash(self.value.tobytes())

    def __repr__(self):
        return f"Constant({self.value.tolist()})"


@dataclass(frozen=True)
class PureFn:
    name: str
    temperature: float = 1.0


@dataclass(frozen=True)
class Parameterized:
    spec: ModelSpec
    key: str
    select: tuple[Field, ...] | None = None


@dataclass(frozen=True)
class Pairing:
    """``<f, g, ...>``: one part per component of a product target."""

    parts: tuple


EdgeKind = Union[Projection, Constant, PureFn, Parameterized, Pairing]


@dataclass(frozen=True)
class EdgeModel:
    kind: EdgeKind
    frozen: bool = False

    def param_keys(self) -> list[str]:
        return _param_keys(self.kind)


def _param_keys(kind) -> list[str]:
    if isinstance(kind, Parameterized):
        return [kind.key]
    if isinstance(kind, Pairing):
        return [k for part in kind.parts for k in _param_keys(part)]
    return []


def _parameterized(kind) -> list[Parameterized]:
    if isinstance(kind, Parameterized):
        return [kind]
    if isinstance(kind, Pairing):
        return [p for part in kind.parts for p in _parameterized(part)]
    return []


def _same_shape_fn(f):
    def shape(s: Shape) -> Shape:
        if is_product(s):
            raise ShapeMismatch("function needs a flat input space")
        return s
    return f, shape


def _concat_shape(s: Shape) -> Shape:
    return (flat_size(s),)


PURE_FUNCTIONS: dict[str, tuple[Callable, Callable[[Shape], Shape]]] = {
    "identity": (lambda x, t: x, lambda s: s),
    "relu": _same_shape_fn(lambda x, t: ad.relu(x)),
    "softmax": _same_shape_fn(lambda x, t: ad.softmax(x, t)),
    "log_softmax": _same_shape_fn(lambda x, t: ad.log_softmax(x, t)),
    "concat": (lambda x, t: flatten(x), _concat_shape),
}


def register_function(name: str, fn: Callable[[Tensor, float], Tensor],
                      shape: Callable[[Shape], Shape]) -> None:
    """Make a differentiable pure function available to ``PureFn(name)`` edges."""
    PURE_FUNCTIONS[name] = (fn, shape)


def _resolve_fields(fields: tuple[Field, ...], src: Space) -> list[int]:
    if not is_product(src.shape):
        raise ShapeMismatch("projection needs a product or indexed source space")
    names = src.dataset.column_names if src.dataset is not None else []
    out = []
    for f in fields:
        if isinstance(f, str):
            if f not in names:
                raise ShapeMismatch(f"no column {f!r} in source dataset")
            out.append(names.index(f))
        else:
            if not 0 <= f < len(src.shape):
                raise ShapeMismatch(f"projection index {f} out of range for {len(src.shape)} components")
            out.append(int(f))
    if not out:
        raise ShapeMismatch("projection selects nothing")
    return out


def _select_shape(idx: list[int], shape: Shape) -> Shape:
    if len(idx) == 1:
        return shape[idx[0]]
    return tuple(shape[i] for i in idx)


def _select(idx: list[int], value):
    if len(idx) == 1:
        return value[idx[0]]
    return tuple(value[i] for i in idx)


def output_shape(kind, src: Space) -> Shape:
    if isinstance(kind, Projection):
        return _select_shape(_resolve_fields(kind.fields, src), src.shape)
    if isinstance(kind, Constant):
        return kind.value.shape
    if isinstance(kind, PureFn):
        if kind.name not in PURE_FUNCTIONS:
            raise ShapeMismatch(f"unknown function {kind.name!r}")
        return PURE_FUNCTIONS[kind.name][1](src.shape)
    if isinstance(kind, Parameterized):
        shape = src.shape
        if kind.select is not None:
            shape = _select_shape(_resolve_fields(kind.select, src), shape)
        if flat_size(shape) != kind.spec.in_size:
            raise ShapeMismatch(f"model {kind.spec} takes {kind.spec.in_size} inputs, "
                                f"source provides {flat_size(shape)}")
        return (kind.spec.out_size,)
    if isinstance(kind, Pairing):
        return tuple(output_shape(p, src) for p in kind.parts)
    raise TypeError(f"not an edge kind: {kind!r}")


def apply_edge(kind, src: Space, value, params: Mapping[str, Mapping[str, Tensor]]):
    if isinstance(kind, Projection):
        return _select(_resolve_fields(kind.fields, src), value)
    if isinstance(kind, Constant):
        n = _rows(value)
        return ad.constant(np.tile(kind.value, (n, 1)))
    if isinstance(kind, PureFn):
        return PURE_FUNCTIONS[kind.name][0](value, kind.temperature)
    if isinstance(kind, Parameterized):
        if kind.select is not None:
            value = _select(_resolve_fields(kind.select, src), value)
        return kind.spec.forward(params[kind.key], flatten(value))
    if isinstance(kind, Pairing):
        return tuple(apply_edge(p, src, value, params) for p in kind.parts)
    raise TypeError(f"not an edge kind: {kind!r}")


# diagrams

class LearningDiagram:
    """A learning graph with a space on every vertex and a model on every edge.

    ``spaces`` and ``models`` are tuples indexed by vertex and edge id. The
    parameter store is the only mutable part.
    """

    def __init__(self, graph: LearningGraph, spaces, models, params: ParamStore):
        self.graph = graph
        self.spaces: tuple[Space, ...] = tuple(spaces)
        self.models: tuple[EdgeModel, ...] = tuple(models)
        self.params = params

    def space(self, label: str) -> Space:
        return self.spaces[self.graph.vertex_id(label)]

    def model(self, label: str) -> EdgeModel:
        return self.models[self.graph.edge_id(label)]

    def param_specs(self) -> dict[str, ModelSpec]:
        specs = {}
        for m in self.models:
            for p in _parameterized(m.kind):
                specs[p.key] = p.spec
        return specs

    def edge_keys(self, e: int) -> list[str]:
        return self.models[e].param_keys()

    def trainable_keys(self, edges=None) -> list[str]:
        edges = range(len(self.models)) if edges is None else edges
        return sorted({k for e in edges if not self.models[e].frozen for k in self.edge_keys(e)})

    def vertex_data(self) -> dict[str, Space]:
        return dict(zip(self.graph.vertices, self.spaces))

    def edge_data(self) -> dict[str, EdgeModel]:
        return {e.label: m for e, m in zip(self.graph.edges, self.models)}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LearningDiagram):
            return NotImplemented
        return (self.graph == other.graph and self.spaces == other.spaces
                and self.models == other.models and self.params == other.params)

    def __repr__(self) -> str:
        return f"LearningDiagram({self.graph!r})"


def param_seed(seed: int, key: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(key.encode())])


def assign_semantics(
    graph: LearningGraph,
    vertex_data: Mapping[str, Space],
    edge_data: Mapping[str, EdgeModel],
    params: ParamStore | None = None,
    seed: int = 0,
) -> LearningDiagram:
    """Attach spaces and models by label and validate the result.

    Parameter keys missing from ``params`` are initialized from ``seed``.
    """
    for label in vertex_data:
        if not graph.has_vertex(label):
            raise UnknownEndpoint(f"space given for unknown vertex {label!r}")
    for label in edge_data:
        if not graph.has_edge(label):
            raise UnknownEndpoint(f"model given for unknown edge {label!r}")
    spaces = []
    for v, label in enumerate(graph.vertices):
        if label not in vertex_data:
            raise MissingAssignment(f"vertex {label!r} has no space")
        space = vertex_data[label]
        if graph.is_indexing(v):
            if space.dataset is None:
                raise NoDatasetOnIndexing(f"indexing vertex {label!r} has no dataset")
            if space.shape != space.dataset.shape:
                raise ShapeMismatch(f"vertex {label!r}: shape {space.shape} does not match its "
                                    f"dataset {space.dataset.shape}")
        elif space.dataset is not None:
            raise DatasetOnNonIndexing(f"non-indexing vertex {label!r} carries dataset "
                                       f"{space.dataset.name!r}")
        check_shape(space.shape)
        if space.metric.kind not in ("infinite", "custom") and is_product(space.shape):
            raise ShapeMismatch(f"vertex {label!r}: metric {space.metric} needs a flat space")
        spaces.append(space)
    models = []
    for e in graph.edges:
        if e.label not in edge_data:
            raise MissingAssignment(f"edge {e.label!r} has no model")
        model = edge_data[e.label]
        if not isinstance(model, EdgeModel):
            model = EdgeModel(model)
        out = output_shape(model.kind, spaces[e.src])
        want = spaces[e.tgt].shape
        if out != want:
            raise ShapeMismatch(f"edge {e.label!r} produces {_shape_str(out)} but "
                                f"{graph.vertices[e.tgt]!r} is {_shape_str(want)}")
        models.append(model)

    specs: dict[str, ModelSpec] = {}
    for e, m in zip(graph.edges, models):
        for p in _parameterized(m.kind):
            if specs.setdefault(p.key, p.spec) != p.spec:
                raise SharedKeySpecMismatch(f"key {p.key!r} is used with {specs[p.key]} and {p.spec} "
                                            f"(edge {e.label!r})")
    params = ParamStore() if params is None else params
    for key, spec in specs.items():
        if key not in params:
            params.set(key, spec.init(param_seed(seed, key)))
            continue
        have = {n: t.shape for n, t in params[key].items()}
        if have != spec.param_shapes():
            raise ShapeMismatch(f"stored parameters for {key!r} do not fit {spec}")
    return LearningDiagram(graph, spaces, models, params)


def with_models(diagram: LearningDiagram, updates: Mapping[str, EdgeModel],
                spaces: Mapping[str, Space] | None = None) -> LearningDiagram:
    """Copy of ``diagram`` with some edge models or spaces replaced (revalidated)."""
    vdata = diagram.vertex_data()
    vdata.update(spaces or {})
    edata = diagram.edge_data()
    edata.update(updates)
    return assign_semantics(diagram.graph, vdata, edata, diagram.params)


def leaf_params(diagram: LearningDiagram, tape: ad.Tape | None, keys) -> dict[str, dict[str, Tensor]]:
    """Parameters as tensors; keys in ``keys`` are watched on ``tape``."""
    out = {}
    for key in diagram.param_specs():
        tensors = diagram.params[key]
        if tape is not None and key in keys:
            out[key] = {n: tape.leaf(v) for n, v in tensors.items()}
        else:
            out[key] = {n: ad.constant(v) for n, v in tensors.items()}
    return out


def run_path(diagram: LearningDiagram, path: Path, value, params, cache: dict | None = None):
    """Push a batch ``value`` at ``path.src`` along ``path``.

    ``cache`` maps edge-id prefixes to already computed values, so paths
    that share a prefix share its computation.
    """
    graph = diagram.graph
    prefix: tuple[int, ...] = ()
    for e in path.edges:
        prefix = prefix + (e,)
        if cache is not None and prefix in cache:
            value = cache[prefix]
            continue
        value = apply_edge(diagram.models[e].kind, diagram.spaces[graph.src(e)], value, params)
        if cache is not None:
            cache[prefix] = value
    return value


def _batch_of_one(point):
    if isinstance(point, tuple):
        return tuple(_batch_of_one(p) for p in point)
    return ad.constant(np.atleast_1d(np.asarray(point, dtype=np.float64))[None, :])


def _unbatch(value):
    if isinstance(value, tuple):
        return tuple(_unbatch(v) for v in value)
    return value.value[0]


def eval_path(diagram: LearningDiagram, path: Path, sample):
    """Evaluate ``path`` on one point of its source space."""
    params = leaf_params(diagram, None, ())
    value = _batch_of_one(tuple(sample) if isinstance(sample, list) else sample)
    return _unbatch(run_path(diagram, path, value, params))


def freeze(model: EdgeModel) -> EdgeModel:
    return replace(model, frozen=True)


def unfreeze(model: EdgeModel) -> EdgeModel:
    return replace(model, frozen=False)
