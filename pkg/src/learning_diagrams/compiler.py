"""Compile a learning diagram into a composite loss and train on it.

Each admissible parallel pair ``(f, g)`` contributes the term
``sum over rows x of d(f(x), g(x))``, where ``d`` is the metric at the
common target. The total loss is the sum of all terms.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import SGD, Adam, Tape, optimizer_step
from .errors import NoLossTerms, NoTrainableParams, PreconditionViolated, IncomparablePaths
from .paths import ParallelPair, parallel_pairs
from .semantics import Dataset, LearningDiagram, MetricSpec, leaf_params, run_path


@dataclass(frozen=True)
class LossTerm:
    pair: ParallelPair
    dataset: Dataset
    metric: MetricSpec
    weight: float = 1.0


@dataclass
class CompiledLoss:
    terms: list[LossTerm]
    param_keys: list[str]
    warnings: list[str] = field(default_factory=list)

    def involved_edges(self) -> list[int]:
        return sorted({e for t in self.terms for p in (t.pair.first, t.pair.second) for e in p.edges})

    def report(self, diagram: LearningDiagram) -> str:
        g = diagram.graph
        lines = [f"{len(self.terms)} loss term{'s' if len(self.terms) != 1 else ''}"]
        for i, t in enumerate(self.terms):
            lines.append(f"  term_{i}: {t.pair.describe(g)}  metric={t.metric}  "
                         f"data={t.dataset.name}  weight={t.weight:g}")
        lines.append("edges: " + (", ".join(g.edges[e].label for e in self.involved_edges()) or "-"))
        lines.append("trainable: " + (", ".join(self.param_keys) or "-"))
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines)


def compile_diagram(diagram: LearningDiagram, weights: Sequence[float] | None = None) -> CompiledLoss:
    """One loss term per admissible parallel pair, in pair order."""
    search = parallel_pairs(diagram)
    notes = list(search.warnings)
    for w in search.warnings:
        warnings.warn(w, IncomparablePaths, stacklevel=2)
    if weights is not None and len(weights) != len(search.pairs):
        raise ValueError(f"{len(weights)} weights for {len(search.pairs)} terms")
    terms = []
    for i, pair in enumerate(search.pairs):
        weight = 1.0 if weights is None else float(weights[i])
        if not weight > 0:
            raise ValueError("term weights must be positive")
        terms.append(LossTerm(pair, diagram.spaces[pair.src].dataset,
                              diagram.spaces[pair.tgt].metric, weight))
    edges = {e for t in terms for p in (t.pair.first, t.pair.second) for e in p.edges}
    keys = diagram.trainable_keys(sorted(edges))
    if not terms:
        msg = "diagram has no admissible parallel pairs; its loss is constantly 0"
        notes.append(msg)
        warnings.warn(msg, NoLossTerms, stacklevel=2)
    return CompiledLoss(terms, keys, notes)


# batching modes

@dataclass(frozen=True)
class FullBatch:
    pass


@dataclass(frozen=True)
class MiniBatch:
    """One batch per indexing vertex, drawn from a per-epoch seeded shuffle.

    ``batch_size`` overrides every dataset's own batch size (clipped to
    the dataset size). With ``scale_to_full`` each term is multiplied by
    ``n / b``.
    """

    seed: int
    step: int
    batch_size: int | None = None
    scale_to_full: bool = False


@dataclass(frozen=True)
class Rows:
    """Explicit row indices per indexing vertex id; other vertices use all rows."""

    rows: Mapping[int, Sequence[int]]


def batch_rows(dataset: Dataset, vertex: int, mode: MiniBatch) -> np.ndarray:
    n = dataset.n
    b = dataset.batch_size if mode.batch_size is None else min(mode.batch_size, n)
    per_epoch = n // b
    epoch, pos = divmod(mode.step, per_epoch)
    perm = np.random.default_rng([mode.seed, vertex, epoch]).permutation(n)
    return np.sort(perm[pos * b:(pos + 1) * b])


def _forward(compiled: CompiledLoss, diagram: LearningDiagram, mode, params):
    batches: dict[int, tuple] = {}
    scales: dict[int, float] = {}
    caches: dict[int, dict] = {}
    per_term = []
    for term in compiled.terms:
        src = term.pair.src
        if src not in batches:
            rows = None
            scales[src] = 1.0
            if isinstance(mode, MiniBatch):
                rows = batch_rows(term.dataset, src, mode)
                if mode.scale_to_full:
                    scales[src] = term.dataset.n / len(rows)
            elif isinstance(mode, Rows) and src in mode.rows:
                rows = np.asarray(mode.rows[src], dtype=int)
            elif not isinstance(mode, (FullBatch, Rows)):
                raise TypeError(f"unknown evaluation mode {mode!r}")
            batches[src] = term.dataset.batch(rows)
            caches[src] = {}
        x = batches[src]
        a = run_path(diagram, term.pair.first, x, params, caches[src])
        b = run_path(diagram, term.pair.second, x, params, caches[src])
        value = ad.sum_(term.metric.rows(a, b))
        factor = term.weight * scales[src]
        if factor != 1.0:
            value = ad.scale(value, factor)
        per_term.append(value)
    total = None
    for v in per_term:
        total = v if total is None else ad.add(total, v)
    return total, per_term


def evaluate(compiled: CompiledLoss, diagram: LearningDiagram, mode=FullBatch()) -> tuple[float, list[float]]:
    params = leaf_params(diagram, None, ())
    total, per_term = _forward(compiled, diagram, mode, params)
    return (0.0 if total is None else float(total.value)), [float(t.value) for t in per_term]


def value_and_grad(compiled: CompiledLoss, diagram: LearningDiagram, mode=FullBatch()):
    """``(total, per_term, grads)`` with ``grads[key][name]`` for every trainable key."""
    tape = Tape()
    keys = set(compiled.param_keys)
    params = leaf_params(diagram, tape, keys)
    total, per_term = _forward(compiled, diagram, mode, params)
    grads = {k: {n: np.zeros_like(v) for n, v in diagram.params[k].items()} for k in sorted(keys)}
    if total is None:
        return 0.0, [], grads
    values = (float(total.value), [float(t.value) for t in per_term])
    if total.tape is not None:
        node_grads = ad.backward(tape, total)
        for k in grads:
            for n, leaf in params[k].items():
                grads[k][n] = node_grads[leaf.node]
    return values[0], values[1], grads


def gradient(compiled: CompiledLoss, diagram: LearningDiagram, mode=FullBatch()):
    return value_and_grad(compiled, diagram, mode)[2]


@dataclass(frozen=True)
class HistoryRow:
    step: int
    total: float
    per_term: tuple[float, ...]


def train(compiled: CompiledLoss, diagram: LearningDiagram, optimizer: SGD | Adam, steps: int,
          seed: int = 0, batch_size: int | None = None, minibatch: bool = False,
          scale_to_full: bool = False) -> list[HistoryRow]:
    """Optimize the trainable parameters in place; returns the pre-update loss per step.

    Full-batch unless ``minibatch`` is set or ``batch_size`` is given.
    """
    if not compiled.param_keys:
        raise NoTrainableParams("no trainable parameters appear in any loss term")
    history = []
    for step in range(steps):
        if minibatch or batch_size is not None:
            mode = MiniBatch(seed, step, batch_size, scale_to_full)
        else:
            mode = FullBatch()
        total, per_term, grads = value_and_grad(compiled, diagram, mode)
        history.append(HistoryRow(step, total, tuple(per_term)))
        optimizer_step(diagram.params, grads, optimizer)
    return history


def history_csv(history: Sequence[HistoryRow], n_terms: int) -> str:
    lines = [",".join(["step", "total"] + [f"term_{i}" for i in range(n_terms)])]
    for row in history:
        lines.append(",".join([str(row.step), repr(row.total)] + [repr(v) for v in row.per_term]))
    return "\n".join(lines) + "\n"


# contractivity on finite spaces

def pair_loss(f: Sequence[int], g: Sequence[int], d: np.ndarray) -> float:
    """Sum over the finite domain of ``d(f(x), g(x))``, correctly rounded."""
    return math.fsum(float(d[a, b]) for a, b in zip(f, g))


def contractivity_check(f, g, f2, g2, p, q, d_y, d_y2) -> bool:
    """Whether the loss of ``(f, g)`` dominates that of ``(f2, g2)``.

    Functions between finite sets are integer arrays; ``d_y`` and ``d_y2``
    are the distance matrices of the codomains. ``p`` maps the domain of
    ``f`` onto that of ``f2`` and ``q`` maps ``Y`` onto ``Y2``; both must be
    surjective, ``q`` must be 1-Lipschitz and the squares must commute.
    """
    f, g, f2, g2, p, q = (np.asarray(a, dtype=int) for a in (f, g, f2, g2, p, q))
    d_y = np.asarray(d_y, dtype=np.float64)
    d_y2 = np.asarray(d_y2, dtype=np.float64)
    nx, nx2, ny, ny2 = len(f), len(f2), d_y.shape[0], d_y2.shape[0]
    if len(g) != nx or len(p) != nx or len(g2) != nx2 or len(q) != ny:
        raise PreconditionViolated("function arrays have inconsistent domain sizes")
    if set(p.tolist()) != set(range(nx2)):
        raise PreconditionViolated("p is not surjective")
    if set(q.tolist()) != set(range(ny2)):
        raise PreconditionViolated("q is not surjective")
    if np.any(d_y2[np.ix_(q, q)] > d_y):
        raise PreconditionViolated("q is not 1-Lipschitz")
    if np.any(f2[p] != q[f]) or np.any(g2[p] != q[g]):
        raise PreconditionViolated("squares do not commute")
    return pair_loss(f, g, d_y) >= pair_loss(f2, g2, d_y2)


def lawvere_closure(d: np.ndarray) -> np.ndarray:
    """Largest Lawvere metric below ``d``: zero diagonal, min-plus closed."""
    d = np.array(d, dtype=np.float64)
    np.fill_diagonal(d, 0.0)
    for k in range(d.shape[0]):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d


def quotient_metric(d: np.ndarray, q: np.ndarray, k: int) -> np.ndarray:
    """The quotient Lawvere metric on ``k`` classes; ``q`` is 1-Lipschitz onto it."""
    out = np.full((k, k), np.inf)
    for a in range(d.shape[0]):
        for b in range(d.shape[0]):
            out[q[a], q[b]] = min(out[q[a], q[b]], d[a, b])
    return lawvere_closure(out)


@dataclass
class ContractivityTrial:
    f: np.ndarray
    g: np.ndarray
    f2: np.ndarray
    g2: np.ndarray
    p: np.ndarray
    q: np.ndarray
    d_y: np.ndarray
    d_y2: np.ndarray

    def args(self):
        return self.f, self.g, self.f2, self.g2, self.p, self.q, self.d_y, self.d_y2

    def losses(self) -> tuple[float, float]:
        return pair_loss(self.f, self.g, self.d_y), pair_loss(self.f2, self.g2, self.d_y2)


def random_trial(rng: np.random.Generator, identity: bool = False,
                 max_x: int = 12, max_y: int = 10) -> ContractivityTrial:
    """A random finite instance satisfying every precondition.

    ``Y`` is a random asymmetric Lawvere space; ``q`` is a random quotient
    (scaled by a factor in (0, 1]); ``p`` splits the classes of
    ``x -> (q f x, q g x)`` at random, which keeps both squares commuting.
    """
    nx = int(rng.integers(1, max_x + 1))
    ny = int(rng.integers(1, max_y + 1))
    raw = rng.uniform(0.0, 5.0, size=(ny, ny))
    raw[rng.random((ny, ny)) < 0.15] = 0.0
    d_y = lawvere_closure(raw)
    f = rng.integers(0, ny, size=nx)
    g = rng.integers(0, ny, size=nx)
    if identity:
        ident_x, ident_y = np.arange(nx), np.arange(ny)
        return ContractivityTrial(f, g, f.copy(), g.copy(), ident_x, ident_y, d_y, d_y.copy())
    k = int(rng.integers(1, ny + 1))
    q = np.concatenate([rng.permutation(k), rng.integers(0, k, size=ny - k)])[rng.permutation(ny)]
    d_y2 = quotient_metric(d_y, q, k) * rng.uniform(0.0, 1.0)
    classes: dict[tuple[int, int, int], int] = {}
    p = np.empty(nx, dtype=int)
    splits = int(rng.integers(1, 3))
    for x in range(nx):
        label = (int(q[f[x]]), int(q[g[x]]), int(rng.integers(0, splits)))
        p[x] = classes.setdefault(label, len(classes))
    f2 = np.empty(len(classes), dtype=int)
    g2 = np.empty(len(classes), dtype=int)
    for x in range(nx):
        f2[p[x]] = q[f[x]]
        g2[p[x]] = q[g[x]]
    return ContractivityTrial(f, g, f2, g2, p, q, d_y, d_y2)


@dataclass
class ContractivityReport:
    trials: int
    violations: int
    identity_max_gap: float

    @property
    def ok(self) -> bool:
        return self.violations == 0 and self.identity_max_gap <= 1e-12


def run_contractivity(trials: int, seed: int) -> ContractivityReport:
    """Random quotient trials plus an identity trial for each."""
    rng = np.random.default_rng(seed)
    violations = 0
    gap = 0.0
    for _ in range(trials):
        trial = random_trial(rng)
        if not contractivity_check(*trial.args()):
            violations += 1
        ident = random_trial(rng, identity=True)
        if not contractivity_check(*ident.args()):
            violations += 1
        before, after = ident.losses()
        gap = max(gap, abs(before - after))
    return ContractivityReport(trials, violations, gap)
