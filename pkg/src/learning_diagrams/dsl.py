"""Parser for the textual graph language.

    graph NAME {
        vertices: A, B, C;
        edge f: A -> B;          # zero or more
        order f <= g;            # zero or more
        indexing: A;             # optional
    }

Identifiers are ``[A-Za-z_][A-Za-z0-9_]*``, ``#`` starts a line comment,
and ``→`` may be written for ``->``. With an ``indexing`` clause every
other vertex is non-indexing; without one all vertices are unlabeled.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import DiagramError, DslSyntaxError, DuplicateLabel, UnknownEndpoint
from .graph import Edge, LearningGraph, Polarity

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<arrow>->|→)
  | (?P<leq><=)
  | (?P<punct>[{}:;,])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # ident, arrow, leq, punct, eof
    text: str
    line: int
    col: int

    @property
    def where(self) -> tuple[int, int]:
        return (self.line, self.col)


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DslSyntaxError(f"unexpected character {text[pos]!r}", (line, pos - line_start + 1),
                                 "a token")
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def fail(self, expected: str):
        tok = self.peek()
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise DslSyntaxError(f"expected {expected}, found {found}", tok.where, expected)

    def take(self, kind: str, text: str | None = None, expected: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            self.fail(expected or (repr(text) if text else kind))
        self.i += 1
        return tok

    def ident(self) -> Token:
        return self.take("ident", expected="identifier")

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text == word

    def ident_list(self) -> list[Token]:
        out = [self.ident()]
        while self.peek().text == "," and self.peek().kind == "punct":
            self.i += 1
            out.append(self.ident())
        return out

    def parse(self):
        self.take("ident", "graph", "'graph'")
        name = self.ident()
        self.take("punct", "{")
        self.take("ident", "vertices", "'vertices'")
        self.take("punct", ":")
        vertices = self.ident_list()
        self.take("punct", ";")
        edges = []
        while self.at_keyword("edge"):
            self.i += 1
            label = self.ident()
            self.take("punct", ":")
            src = self.ident()
            self.take("arrow", expected="'->'")
            tgt = self.ident()
            self.take("punct", ";")
            edges.append((label, src, tgt))
        orders = []
        while self.at_keyword("order"):
            self.i += 1
            a = self.ident()
            self.take("leq", expected="'<='")
            b = self.ident()
            self.take("punct", ";")
            orders.append((a, b))
        indexing = None
        if self.at_keyword("indexing"):
            self.i += 1
            self.take("punct", ":")
            indexing = self.ident_list()
            self.take("punct", ";")
        if self.peek().kind == "ident" and self.peek().text in ("edge", "order", "indexing", "vertices"):
            self.fail("'}' (clauses must appear in the order vertices, edge, order, indexing)")
        self.take("punct", "}")
        self.take("eof", expected="end of input")
        return name, vertices, edges, orders, indexing


def parse_graph(text: str) -> LearningGraph:
    """Parse graph source text into a validated graph.

    Syntax errors and label errors carry the 1-based line and column of
    the offending token.
    """
    name, vertices, edges, orders, indexing = _Parser(text).parse()
    vindex: dict[str, int] = {}
    for tok in vertices:
        if tok.text in vindex:
            raise DuplicateLabel(f"duplicate vertex {tok.text!r}", tok.where)
        vindex[tok.text] = len(vindex)
    eindex: dict[str, int] = {}
    edge_list = []
    for label, src, tgt in edges:
        if label.text in eindex:
            raise DuplicateLabel(f"duplicate edge {label.text!r}", label.where)
        for end in (src, tgt):
            if end.text not in vindex:
                raise UnknownEndpoint(f"edge {label.text!r} refers to unknown vertex {end.text!r}", end.where)
        eindex[label.text] = len(eindex)
        edge_list.append(Edge(label.text, vindex[src.text], vindex[tgt.text]))
    declared = []
    for a, b in orders:
        for tok in (a, b):
            if tok.text not in eindex:
                raise UnknownEndpoint(f"order refers to unknown edge {tok.text!r}", tok.where)
        declared.append((eindex[a.text], eindex[b.text]))
    polarity: list[Polarity | None] = [None] * len(vindex)
    if indexing is not None:
        polarity = [Polarity.NON_INDEXING] * len(vindex)
        for tok in indexing:
            if tok.text not in vindex:
                raise UnknownEndpoint(f"indexing refers to unknown vertex {tok.text!r}", tok.where)
            polarity[vindex[tok.text]] = Polarity.INDEXING
    try:
        return LearningGraph(list(vindex), edge_list, declared, polarity, name=name.text)
    except DiagramError as exc:
        if exc.location is None:
            exc.location = name.where
        raise


def format_graph(graph: LearningGraph) -> str:
    """Source text that parses back to ``graph``.

    Graphs whose labeled vertices are all non-indexing lose those labels.
    """
    lines = [f"graph {graph.name} {{", f"    vertices: {', '.join(graph.vertices)};"]
    for e in graph.edges:
        lines.append(f"    edge {e.label}: {graph.vertices[e.src]} -> {graph.vertices[e.tgt]};")
    for a, b in sorted(graph.declared):
        lines.append(f"    order {graph.edges[a].label} <= {graph.edges[b].label};")
    indexing = [v for v, p in zip(graph.vertices, graph.polarity) if p is Polarity.INDEXING]
    if indexing:
        lines.append(f"    indexing: {', '.join(indexing)};")
    lines.append("}")
    return "\n".join(lines) + "\n"
