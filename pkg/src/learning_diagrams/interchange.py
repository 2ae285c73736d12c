"""JSON interchange documents for diagrams (``.ldd.json``) and spans
(``.lds.json``), plus hom serialization.

Documents are validated against a JSON schema that rejects unknown
fields; cross references are then resolved by hand. Floats are written
with ``repr`` precision, so saving and loading is bit-exact.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Mapping
from pathlib import Path as FsPath

import jsonschema
import numpy as np

from .autodiff import ParamStore
from .composition import DiagramHom, Span, check_span, hom_from_labels
from .dsl import parse_graph
from .errors import DiagramError, SchemaError, ShapeMismatch, UnknownEndpoint
from .graph import LearningGraph, build_graph
from .semantics import (
    METRIC_KINDS,
    Constant,
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
    is_product,
)

VERSION = 1

_FIELD = {"type": ["string", "integer"]}
_DEFS = {
    "shape": {
        "oneOf": [
            {"type": "array", "minItems": 1, "maxItems": 1, "items": {"type": "integer", "minimum": 1}},
            {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/shape"}},
        ]
    },
    "graph": {
        "type": "object",
        "additionalProperties": False,
        "required": ["vertices", "edges"],
        "properties": {
            "name": {"type": "string"},
            "vertices": {"type": "array", "items": {"type": "string", "minLength": 1}},
            "edges": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["label", "src", "tgt"],
                    "properties": {"label": {"type": "string", "minLength": 1},
                                   "src": {"type": "string"}, "tgt": {"type": "string"}},
                },
            },
            "order": {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                                  "items": {"type": "string"}}},
            "polarity": {"type": "object",
                         "additionalProperties": {"enum": ["indexing", "non_indexing"]}},
        },
    },
    "metric": {
        "type": "object",
        "additionalProperties": False,
        "required": ["kind"],
        "properties": {
            "kind": {"enum": [k for k in METRIC_KINDS if k != "custom"]},
            "temperature": {"type": "number", "exclusiveMinimum": 0},
        },
    },
    "kind": {
        "oneOf": [
            {"type": "object", "additionalProperties": False, "required": ["kind", "fields"],
             "properties": {"kind": {"const": "projection"}, "frozen": {"type": "boolean"},
                            "fields": {"type": "array", "minItems": 1, "items": _FIELD}}},
            {"type": "object", "additionalProperties": False, "required": ["kind", "value"],
             "properties": {"kind": {"const": "constant"}, "frozen": {"type": "boolean"},
                            "value": {"type": "array", "minItems": 1, "items": {"type": "number"}}}},
            {"type": "object", "additionalProperties": False, "required": ["kind", "name"],
             "properties": {"kind": {"const": "function"}, "frozen": {"type": "boolean"},
                            "name": {"type": "string"},
                            "temperature": {"type": "number", "exclusiveMinimum": 0}}},
            {"type": "object", "additionalProperties": False, "required": ["kind", "spec", "key"],
             "properties": {"kind": {"const": "model"}, "frozen": {"type": "boolean"},
                            "spec": {"type": "string"}, "key": {"type": "string", "minLength": 1},
                            "select": {"type": "array", "minItems": 1, "items": _FIELD}}},
            {"type": "object", "additionalProperties": False, "required": ["kind", "parts"],
             "properties": {"kind": {"const": "pairing"}, "frozen": {"type": "boolean"},
                            "parts": {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/kind"}}}},
        ]
    },
    "tensor": {
        "type": "object",
        "additionalProperties": False,
        "required": ["shape", "data"],
        "properties": {"shape": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                       "data": {"type": "array", "items": {"type": "number"}}},
    },
    "dataset": {
        "oneOf": [
            {"type": "object", "additionalProperties": False, "required": ["columns"],
             "properties": {
                 "batch_size": {"type": "integer", "minimum": 1},
                 "columns": {"type": "array", "minItems": 1, "items": {
                     "type": "object", "additionalProperties": False, "required": ["name", "data"],
                     "properties": {"name": {"type": "string"},
                                    "data": {"type": "array", "items": {
                                        "type": "array", "items": {"type": "number"}}}}}}}},
            {"type": "object", "additionalProperties": False, "required": ["csv", "columns"],
             "properties": {
                 "batch_size": {"type": "integer", "minimum": 1},
                 "csv": {"type": "string"},
                 "columns": {"type": "array", "minItems": 1, "items": {
                     "type": "object", "additionalProperties": False, "required": ["name", "fields"],
                     "properties": {"name": {"type": "string"},
                                    "fields": {"type": "array", "minItems": 1,
                                               "items": {"type": "string"}}}}}}},
        ]
    },
    "diagram": {
        "type": "object",
        "additionalProperties": False,
        "required": ["version", "graph", "spaces", "models"],
        "properties": {
            "version": {"const": VERSION},
            "graph": {"$ref": "#/$defs/graph"},
            "spaces": {"type": "object", "additionalProperties": {
                "type": "object", "additionalProperties": False,
                "properties": {"shape": {"$ref": "#/$defs/shape"},
                               "metric": {"$ref": "#/$defs/metric"},
                               "dataset": {"type": "string"}}}},
            "models": {"type": "object", "additionalProperties": {"$ref": "#/$defs/kind"}},
            "datasets": {"type": "object", "additionalProperties": {"$ref": "#/$defs/dataset"}},
            "params": {"type": "object", "additionalProperties": {
                "type": "object", "additionalProperties": {"$ref": "#/$defs/tensor"}}},
        },
    },
    "leg": {
        "type": "object",
        "additionalProperties": False,
        "required": ["vertices", "edges"],
        "properties": {"vertices": {"type": "object", "additionalProperties": {"type": "string"}},
                       "edges": {"type": "object", "additionalProperties": {"type": "string"}}},
    },
}

DIAGRAM_SCHEMA = {"$defs": _DEFS, "$ref": "#/$defs/diagram"}
SPAN_SCHEMA = {
    "$defs": _DEFS,
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "apex", "left", "right", "left_leg", "right_leg"],
    "properties": {
        "version": {"const": VERSION},
        "apex": {"$ref": "#/$defs/graph"},
        "left": {"oneOf": [{"type": "string"}, {"$ref": "#/$defs/diagram"}]},
        "right": {"oneOf": [{"type": "string"}, {"$ref": "#/$defs/diagram"}]},
        "left_leg": {"$ref": "#/$defs/leg"},
        "right_leg": {"$ref": "#/$defs/leg"},
    },
}


def _validate(doc, schema, what: str) -> None:
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"invalid {what} at {where}: {exc.message}") from None


# graph section

def graph_to_doc(graph: LearningGraph) -> dict:
    doc = {
        "name": graph.name,
        "vertices": list(graph.vertices),
        "edges": [{"label": e.label, "src": graph.vertices[e.src], "tgt": graph.vertices[e.tgt]}
                  for e in graph.edges],
        "order": [[graph.edges[a].label, graph.edges[b].label] for a, b in sorted(graph.declared)],
        "polarity": {v: p.value for v, p in zip(graph.vertices, graph.polarity) if p is not None},
    }
    return doc


def graph_from_doc(doc: Mapping) -> LearningGraph:
    """Graph section of a document; dangling labels are schema errors."""
    try:
        return build_graph(
            doc["vertices"],
            [(e["label"], e["src"], e["tgt"]) for e in doc["edges"]],
            [tuple(p) for p in doc.get("order", [])],
            doc.get("polarity", {}),
            name=doc.get("name", "g"),
        )
    except UnknownEndpoint as exc:
        raise SchemaError(exc.message) from None


# pieces

def _shape_to_doc(shape) -> list:
    if is_product(shape):
        return [_shape_to_doc(s) for s in shape]
    return list(shape)


def _shape_from_doc(doc) -> tuple:
    if all(isinstance(s, int) for s in doc):
        return tuple(doc)
    return tuple(_shape_from_doc(s) for s in doc)


def _metric_to_doc(metric: MetricSpec) -> dict:
    if metric.kind == "custom":
        raise SchemaError("custom metrics cannot be written to a file")
    doc = {"kind": metric.kind}
    if metric.temperature is not None:
        doc["temperature"] = metric.temperature
    return doc


def _metric_from_doc(doc: Mapping) -> MetricSpec:
    try:
        return MetricSpec(doc["kind"], doc.get("temperature"))
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


def _kind_to_doc(kind) -> dict:
    if isinstance(kind, Projection):
        return {"kind": "projection", "fields": list(kind.fields)}
    if isinstance(kind, Constant):
        return {"kind": "constant", "value": kind.value.tolist()}
    if isinstance(kind, PureFn):
        doc = {"kind": "function", "name": kind.name}
        if kind.temperature != 1.0:
            doc["temperature"] = kind.temperature
        return doc
    if isinstance(kind, Parameterized):
        doc = {"kind": "model", "spec": str(kind.spec), "key": kind.key}
        if kind.select is not None:
            doc["select"] = list(kind.select)
        return doc
    if isinstance(kind, Pairing):
        return {"kind": "pairing", "parts": [_kind_to_doc(p) for p in kind.parts]}
    raise SchemaError(f"cannot serialize edge kind {kind!r}")


def _kind_from_doc(doc: Mapping):
    k = doc["kind"]
    if k == "projection":
        return Projection(tuple(doc["fields"]))
    if k == "constant":
        return Constant(doc["value"])
    if k == "function":
        return PureFn(doc["name"], float(doc.get("temperature", 1.0)))
    if k == "model":
        try:
            spec = ModelSpec.parse(doc["spec"])
        except ValueError as exc:
            raise SchemaError(str(exc)) from None
        select = tuple(doc["select"]) if "select" in doc else None
        return Parameterized(spec, doc["key"], select)
    return Pairing(tuple(_kind_from_doc(p) for p in doc["parts"]))


def _dataset_to_doc(ds: Dataset) -> dict:
    return {"batch_size": ds.batch_size,
            "columns": [{"name": n, "data": arr.tolist()} for n, arr in ds.columns.items()]}


def _read_csv(path: str, columns) -> dict[str, np.ndarray]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise SchemaError(f"cannot read dataset file {path!r}: {exc}") from None
    out = {}
    for col in columns:
        try:
            out[col["name"]] = np.array([[float(r[f]) for f in col["fields"]] for r in rows])
        except KeyError as exc:
            raise SchemaError(f"dataset file {path!r} has no field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"non-numeric value in {path!r}: {exc}") from None
    return out


def _dataset_from_doc(name: str, doc: Mapping) -> Dataset:
    if "csv" in doc:
        columns = _read_csv(doc["csv"], doc["columns"])
        source = doc["csv"]
    else:
        columns = {}
        for col in doc["columns"]:
            if col["name"] in columns:
                raise SchemaError(f"dataset {name!r} repeats column {col['name']!r}")
            widths = {len(r) for r in col["data"]}
            if len(widths) > 1:
                raise SchemaError(f"column {col['name']!r} of dataset {name!r} is ragged")
            columns[col["name"]] = np.array(col["data"], dtype=np.float64).reshape(len(col["data"]), -1)
        source = None
    try:
        return Dataset(name, columns, doc.get("batch_size"), source)
    except ShapeMismatch as exc:
        raise SchemaError(exc.message) from None


def _params_to_doc(store: ParamStore, keys) -> dict:
    return {k: {n: {"shape": list(v.shape), "data": v.ravel().tolist()}
                for n, v in sorted(store[k].items())} for k in sorted(keys)}


def _params_from_doc(doc: Mapping) -> ParamStore:
    store = ParamStore()
    for key, tensors in doc.items():
        arrays = {}
        for name, t in tensors.items():
            size = int(np.prod(t["shape"])) if t["shape"] else 1
            if len(t["data"]) != size:
                raise SchemaError(f"parameter {key}.{name}: {len(t['data'])} values for shape {t['shape']}")
            arrays[name] = np.array(t["data"], dtype=np.float64).reshape(t["shape"])
        store.set(key, arrays)
    return store


# diagrams

def save_diagram(diagram: LearningDiagram) -> dict:
    g = diagram.graph
    datasets: dict[str, Dataset] = {}
    spaces = {}
    for label, space in zip(g.vertices, diagram.spaces):
        entry: dict = {"metric": _metric_to_doc(space.metric)}
        if space.dataset is not None:
            ds = space.dataset
            if datasets.setdefault(ds.name, ds) != ds:
                raise SchemaError(f"two different datasets are named {ds.name!r}")
            entry["dataset"] = ds.name
        else:
            entry["shape"] = _shape_to_doc(space.shape)
        spaces[label] = entry
    models = {}
    for e, m in zip(g.edges, diagram.models):
        doc = _kind_to_doc(m.kind)
        doc["frozen"] = m.frozen
        models[e.label] = doc
    return {
        "version": VERSION,
        "graph": graph_to_doc(g),
        "spaces": spaces,
        "models": models,
        "datasets": {n: _dataset_to_doc(ds) for n, ds in sorted(datasets.items())},
        "params": _params_to_doc(diagram.params, diagram.param_specs()),
    }


def load_diagram(doc: Mapping, seed: int = 0) -> LearningDiagram:
    """Diagram from a parsed ``.ldd.json`` document.

    Parameter keys absent from the document are initialized from ``seed``.
    """
    _validate(doc, DIAGRAM_SCHEMA, "diagram document")
    graph = graph_from_doc(doc["graph"])
    datasets = {name: _dataset_from_doc(name, d) for name, d in doc.get("datasets", {}).items()}
    vdata = {}
    for label, entry in doc["spaces"].items():
        metric = _metric_from_doc(entry.get("metric", {"kind": "infinite"}))
        if "dataset" in entry:
            if entry["dataset"] not in datasets:
                raise SchemaError(f"vertex {label!r} refers to unknown dataset {entry['dataset']!r}")
            ds = datasets[entry["dataset"]]
            shape = _shape_from_doc(entry["shape"]) if "shape" in entry else ds.shape
            vdata[label] = Space(shape, metric, ds)
        else:
            if "shape" not in entry:
                raise SchemaError(f"vertex {label!r} needs a shape or a dataset")
            vdata[label] = Space(_shape_from_doc(entry["shape"]), metric)
    edata = {label: EdgeModel(_kind_from_doc(m), bool(m.get("frozen", False)))
             for label, m in doc["models"].items()}
    params = _params_from_doc(doc.get("params", {}))
    try:
        return assign_semantics(graph, vdata, edata, params, seed=seed)
    except UnknownEndpoint as exc:
        raise SchemaError(exc.message) from None


def dumps(doc: Mapping) -> str:
    return json.dumps(doc, indent=1) + "\n"


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc.msg})", (exc.lineno, exc.colno)) from None


def write_json(path, doc: Mapping) -> None:
    FsPath(path).write_text(dumps(doc), encoding="utf-8")


def read_diagram(path, seed: int = 0) -> LearningDiagram:
    return load_diagram(read_json(path), seed=seed)


def write_diagram(path, diagram: LearningDiagram) -> None:
    write_json(path, save_diagram(diagram))


# homs and spans

def hom_to_doc(hom: DiagramHom) -> dict:
    return {"vertices": hom.vertex_labels(), "edges": hom.edge_labels()}


def _hom_from_leg(apex: LearningGraph, foot: LearningGraph, leg: Mapping, side: str) -> DiagramHom:
    for label in leg["vertices"].values():
        if not foot.has_vertex(label):
            raise SchemaError(f"{side} leg maps to nonexistent vertex {label!r}")
    for label in leg["edges"].values():
        if not foot.has_edge(label):
            raise SchemaError(f"{side} leg maps to nonexistent edge {label!r}")
    for label in leg["vertices"]:
        if not apex.has_vertex(label):
            raise SchemaError(f"{side} leg maps unknown apex vertex {label!r}")
    for label in leg["edges"]:
        if not apex.has_edge(label):
            raise SchemaError(f"{side} leg maps unknown apex edge {label!r}")
    try:
        return hom_from_labels(apex, foot, leg["vertices"], leg["edges"])
    except DiagramError as exc:
        raise SchemaError(f"{side} leg: {exc.message}") from None


def load_span(doc: Mapping, seed: int = 0) -> Span:
    """Span from a parsed ``.lds.json`` document.

    Feet are inline diagram documents or paths to ``.ldd.json`` files.
    """
    _validate(doc, SPAN_SCHEMA, "span document")
    apex = graph_from_doc(doc["apex"])
    feet = []
    for side in ("left", "right"):
        ref = doc[side]
        if isinstance(ref, str):
            feet.append(read_diagram(ref, seed))
        else:
            feet.append(load_diagram(ref, seed))
    left_leg = _hom_from_leg(apex, feet[0].graph, doc["left_leg"], "left")
    right_leg = _hom_from_leg(apex, feet[1].graph, doc["right_leg"], "right")
    span = Span(apex, feet[0], feet[1], left_leg, right_leg)
    check_span(span)
    return span


def save_span(span: Span) -> dict:
    return {
        "version": VERSION,
        "apex": graph_to_doc(span.apex),
        "left": save_diagram(span.left),
        "right": save_diagram(span.right),
        "left_leg": hom_to_doc(span.left_leg),
        "right_leg": hom_to_doc(span.right_leg),
    }


def read_graph_file(path) -> LearningGraph:
    """A bare graph from ``.ldg`` source or from the graph section of a document."""
    path = str(path)
    if path.endswith(".ldg"):
        with open(path, encoding="utf-8") as fh:
            return parse_graph(fh.read())
    return read_diagram(path).graph
