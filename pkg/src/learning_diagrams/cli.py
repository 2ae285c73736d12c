"""``ldiag``: validate, inspect, compile, train and edit learning diagrams.

Exit status is 0 on success, 1 when a diagram or file is rejected and 2
on usage errors. ``LD_THREADS`` caps the threads of the numeric backend.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
import warnings
from pathlib import Path as FsPath

from . import demos, interchange
from .autodiff import SGD, Adam
from .compiler import compile_diagram, evaluate, history_csv, run_contractivity, train
from .composition import (
    apply_on_image,
    find_monomorphisms,
    freeze_action,
    pushout,
    swap_action,
    unfreeze_action,
)
from .dsl import parse_graph
from .errors import DiagramError
from .graph import LearningGraph, polarity_check
from .paths import all_paths, format_paths, parallel_pairs
from .semantics import LearningDiagram, ModelSpec


class UsageError(Exception):
    pass


def _out(text: str = "") -> None:
    print(text)


def _load(path: str) -> LearningGraph | LearningDiagram:
    """A bare graph for ``.ldg`` files, a diagram for anything else."""
    if path.endswith(".ldg"):
        return parse_graph(FsPath(path).read_text(encoding="utf-8"))
    return interchange.read_diagram(path)


def _load_diagram(path: str) -> LearningDiagram:
    loaded = _load(path)
    if isinstance(loaded, LearningGraph):
        raise UsageError(f"{path}: a diagram document (.ldd.json) is needed, not a bare graph")
    return loaded


def _graph(obj) -> LearningGraph:
    return obj if isinstance(obj, LearningGraph) else obj.graph


# commands

def cmd_validate(args) -> int:
    if args.file.endswith(".lds.json"):
        span = interchange.load_span(interchange.read_json(args.file))
        _out(f"ok: span with {len(span.apex.vertices)} apex vertices and {len(span.apex.edges)} apex edges")
        return 0
    obj = _load(args.file)
    g = _graph(obj)
    issues = polarity_check(g)
    for issue in issues:
        _out(f"polarity: {issue}")
    kind = "graph" if isinstance(obj, LearningGraph) else "diagram"
    _out(f"ok: {kind} {g.name} with {len(g.vertices)} vertices and {len(g.edges)} edges")
    return 0


def cmd_paths(args) -> int:
    obj = _load(args.file)
    g = _graph(obj)
    matrix = all_paths(g, args.max_len)
    lines = format_paths(g, matrix)
    _out(f"{len(lines)} paths")
    for line in lines:
        _out(line)
    if args.max_len is not None:
        return 0
    search = parallel_pairs(obj)
    _out(f"{len(search)} admissible pair{'s' if len(search) != 1 else ''}")
    for pair in search:
        _out(pair.describe(g))
    for w in search.warnings:
        _out(f"warning: {w}")
    return 0


def cmd_compile(args) -> int:
    diagram = _load_diagram(args.file)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        compiled = compile_diagram(diagram)
    _out(compiled.report(diagram))
    return 0


def _optimizer(name: str, lr: float):
    return SGD(lr) if name == "sgd" else Adam(lr)


def _train_and_write(diagram: LearningDiagram, optimizer, steps: int, seed: int, out: FsPath,
                     batch: int | None = None, scale_to_full: bool = False) -> list:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        compiled = compile_diagram(diagram)
    _out(compiled.report(diagram))
    history = train(compiled, diagram, optimizer, steps, seed=seed, batch_size=batch,
                    scale_to_full=scale_to_full)
    out.mkdir(parents=True, exist_ok=True)
    (out / "history.csv").write_text(history_csv(history, len(compiled.terms)), encoding="utf-8")
    interchange.write_diagram(out / "trained.ldd.json", diagram)
    final, per_term = evaluate(compiled, diagram)
    if history:
        _out(f"step 0 total {history[0].total:.6g}")
    _out(f"final total {final:.6g} " + " ".join(f"term_{i}={v:.6g}" for i, v in enumerate(per_term)))
    _out(f"wrote {out / 'history.csv'} and {out / 'trained.ldd.json'}")
    return history


def cmd_train(args) -> int:
    diagram = _load_diagram(args.file)
    _train_and_write(diagram, _optimizer(args.opt, args.lr), args.steps, args.seed, FsPath(args.out),
                     args.batch, args.scale_to_full)
    return 0


def _inclusions_path(out: str) -> str:
    for suffix in (".ldd.json", ".json"):
        if out.endswith(suffix):
            return out[: -len(suffix)] + ".inclusions.json"
    return out + ".inclusions.json"


def cmd_compose(args) -> int:
    span = interchange.load_span(interchange.read_json(args.spanfile))
    glued, left_incl, right_incl = pushout(span)
    interchange.write_diagram(args.out, glued)
    incl = _inclusions_path(args.out)
    interchange.write_json(incl, {"left": interchange.hom_to_doc(left_incl),
                                  "right": interchange.hom_to_doc(right_incl)})
    g = glued.graph
    _out(f"glued {len(g.vertices)} vertices and {len(g.edges)} edges")
    _out(f"wrote {args.out} and {incl}")
    return 0


def _parse_assign(text: str | None, pattern: LearningGraph) -> tuple[dict, dict]:
    vertices: dict[str, str] = {}
    edges: dict[str, str] = {}
    if not text:
        return vertices, edges
    for item in text.split(","):
        name, sep, target = item.partition("=")
        name, target = name.strip(), target.strip()
        if not sep or not name or not target:
            raise UsageError(f"bad assignment {item!r}; expected NAME=LABEL")
        is_v, is_e = pattern.has_vertex(name), pattern.has_edge(name)
        if is_v and is_e:
            raise UsageError(f"{name!r} names both a vertex and an edge of the pattern")
        if not (is_v or is_e):
            raise UsageError(f"{name!r} is not a vertex or edge of the pattern")
        (vertices if is_v else edges)[name] = target
    return vertices, edges


def _action(text: str | None):
    if text is None:
        return None
    if text == "freeze":
        return freeze_action
    if text == "unfreeze":
        return unfreeze_action
    if text.startswith("swap:"):
        try:
            return swap_action(ModelSpec.parse(text[len("swap:"):]))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    raise UsageError(f"unknown action {text!r}; use freeze, unfreeze or swap:SPEC")


def cmd_hom(args) -> int:
    action = _action(args.action)
    pattern = interchange.read_graph_file(args.pattern)
    host = _load_diagram(args.host)
    vertices, edges = _parse_assign(args.assign, pattern)
    for target in vertices.values():
        host.graph.vertex_id(target)
    for target in edges.values():
        host.graph.edge_id(target)
    matches = find_monomorphisms(pattern, host.graph, vertices, edges)
    _out(f"{len(matches)} match{'es' if len(matches) != 1 else ''}")
    for hom in matches:
        _out(hom.describe())
    if action is None:
        interchange.write_json(args.out, {"matches": [interchange.hom_to_doc(h) for h in matches]})
    else:
        if not matches:
            raise DiagramError("pattern has no match in the host; nothing to edit")
        edited = host
        for hom in matches:
            edited = apply_on_image(hom, edited, action)
        interchange.write_diagram(args.out, edited)
    _out(f"wrote {args.out}")
    return 0


def cmd_check(args) -> int:
    report = run_contractivity(args.trials, args.seed)
    _out(f"trials {report.trials}  violations {report.violations}  "
         f"identity max gap {report.identity_max_gap:.3g}")
    _out("contractivity holds" if report.ok else "contractivity FAILED")
    return 0 if report.ok else 1


def cmd_demo(args) -> int:
    out = FsPath(args.out)
    demo = demos.build(args.name, args.seed)
    out.mkdir(parents=True, exist_ok=True)
    interchange.write_diagram(out / f"{demo.name}.ldd.json", demo.diagram)
    if demo.name == "captionshape":
        interchange.write_diagram(out / "captionshape_unfrozen.ldd.json", demo.extras["unfrozen"])
        (out / "encoder.ldg").write_text(demos.ENCODER_PATTERN, encoding="utf-8")
    cfg = demo.config
    _train_and_write(demo.diagram, cfg.optimizer, cfg.steps, cfg.seed, out)
    return 0


# argument parsing

def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonnegative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldiag", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("validate", help="check a graph, diagram or span file")
    p.add_argument("file")
    p.set_defaults(run=cmd_validate)

    p = sub.add_parser("paths", help="list all paths and admissible pairs")
    p.add_argument("file")
    p.add_argument("--max-len", type=_positive, default=None)
    p.set_defaults(run=cmd_paths)

    p = sub.add_parser("compile", help="print the loss terms of a diagram")
    p.add_argument("file")
    p.set_defaults(run=cmd_compile)

    p = sub.add_parser("train", help="train a diagram and write its history")
    p.add_argument("file")
    p.add_argument("--steps", type=_nonnegative, required=True)
    p.add_argument("--lr", type=float, required=True)
    p.add_argument("--opt", choices=("sgd", "adam"), default="sgd")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=_positive, default=None)
    p.add_argument("--scale-to-full", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_train)

    p = sub.add_parser("compose", help="glue the two feet of a span")
    p.add_argument("spanfile")
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_compose)

    p = sub.add_parser("hom", help="match a pattern in a diagram and edit the matches")
    p.add_argument("pattern")
    p.add_argument("host")
    p.add_argument("--assign", default=None, help="NAME=LABEL,... fixing pattern vertices or edges")
    p.add_argument("--action", default=None, help="freeze, unfreeze or swap:SPEC")
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_hom)

    p = sub.add_parser("check", help="randomized contractivity check")
    p.add_argument("--trials", type=_positive, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(run=cmd_check)

    p = sub.add_parser("demo", help="build and train a built-in demo")
    p.add_argument("name", choices=demos.NAMES)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(run=cmd_demo)
    return parser


def _thread_limit():
    value = os.environ.get("LD_THREADS")
    if not value:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    try:
        limit = int(value)
    except ValueError:
        raise UsageError(f"LD_THREADS must be an integer, got {value!r}") from None
    return threadpool_limits(limits=limit)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with _thread_limit():
            return args.run(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ldiag: error: {exc}", file=sys.stderr)
        return 2
    except DiagramError as exc:
        name = type(exc).__name__
        where = getattr(args, "file", None) or getattr(args, "spanfile", None) or getattr(args, "host", None)
        prefix = f"{where}:" if where and exc.location else ""
        print(f"{prefix}{exc} [{name}]", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ldiag: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
