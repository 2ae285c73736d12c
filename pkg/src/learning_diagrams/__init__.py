"""Learning diagrams: compile commuting-diagram specifications into losses and train them."""

from .autodiff import SGD, Adam, ParamStore
from .compiler import compile_diagram, evaluate, gradient, run_contractivity, train, value_and_grad
from .composition import Span, apply_on_image, find_monomorphisms, iterate_pushouts, pushout
from .dsl import format_graph, parse_graph
from .errors import DiagramError
from .graph import LearningGraph, build_graph
from .interchange import load_diagram, read_diagram, save_diagram, write_diagram
from .paths import all_paths, parallel_pairs
from .semantics import (
    Dataset,
    EdgeModel,
    LearningDiagram,
    MetricSpec,
    ModelSpec,
    Parameterized,
    Projection,
    Space,
    assign_semantics,
)

__all__ = [
    "SGD", "Adam", "ParamStore",
    "compile_diagram", "evaluate", "gradient", "run_contractivity", "train", "value_and_grad",
    "Span", "apply_on_image", "find_monomorphisms", "iterate_pushouts", "pushout",
    "format_graph", "parse_graph",
    "DiagramError",
    "LearningGraph", "build_graph",
    "load_diagram", "read_diagram", "save_diagram", "write_diagram",
    "all_paths", "parallel_pairs",
    "Dataset", "EdgeModel", "LearningDiagram", "MetricSpec", "ModelSpec", "Parameterized", "Projection",
    "Space", "assign_semantics",
]
