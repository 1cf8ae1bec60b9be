"""Textual query language.

Grammar::

    query    := source { stage }
    source   := IDENT "(" [ STRING ] ")"
    stage    := "~>" [ "-" ] IDENT
              | "prop" IDENT
              | "filter" "(" IDENT CMP literal ")"
              | "neighborAt"    "(" INT [ "," edges ] ")"
              | "neighborWithin" "(" INT [ "," edges ] ")"
              | "path" "(" STRING [ "," INT ] ")"
              | "groupBy" "(" IDENT "," IDENT ")"
              | agg
    agg      := "count" | "sum" | "product" | "max" | "min" | "distinct"
              | "mkString" "(" STRING ")"
    CMP      := "==" | "!=" | "<" | "<=" | ">" | ">="
    edges    := "[" IDENT { "," IDENT } "]"
    literal  := STRING | INT | REAL | "true" | "false"

Numeric literals may carry a leading ``-``.  A ``path`` target is an
instance id, optionally qualified as ``"nodeType:id"``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from . import engine
from .engine import EdgePath, InstanceSet, ValueSequence
from .errors import KindMismatch, ParseError, PlanError, QueryError, RelGraphError, UnknownInstance
from .schema import INT, REAL, TEXT, Kind, NodeType

# ---------------------------------------------------------------------- lexer


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT STRING INT REAL OP EOF
    value: object
    pos: int
    text: str = ""


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<real>\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==>|~>|==|!=|<=|>=|<|>|[()\[\],\-:])
""", re.VERBOSE)

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        ch = text[pos]
        if ch == '"':
            start = pos
            pos += 1
            buf = []
            while True:
                if pos >= n:
                    raise ParseError("unterminated string", text, start)
                c = text[pos]
                if c == "\\":
                    if pos + 1 >= n:
                        raise ParseError("unterminated string", text, start)
                    esc = text[pos + 1]
                    if esc not in _ESCAPES:
                        raise ParseError(f"unknown escape \\{esc}", text, pos)
                    buf.append(_ESCAPES[esc])
                    pos += 2
                    continue
                if c == '"':
                    pos += 1
                    break
                buf.append(c)
                pos += 1
            tokens.append(Token("STRING", "".join(buf), start, text[start:pos]))
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {ch!r}", text, pos)
        kind = m.lastgroup
        lexeme = m.group()
        if kind == "real":
            tokens.append(Token("REAL", float(lexeme), pos, lexeme))
        elif kind == "int":
            tokens.append(Token("INT", int(lexeme), pos, lexeme))
        elif kind == "ident":
            tokens.append(Token("IDENT", lexeme, pos, lexeme))
        elif kind == "op":
            tokens.append(Token("OP", lexeme, pos, lexeme))
        pos = m.end()
    tokens.append(Token("EOF", None, n, ""))
    return tokens


# ---------------------------------------------------------------------- plan


@dataclass(frozen=True)
class Source:
    node: str
    id: Optional[str] = None
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Traverse:
    edge: str
    reverse: bool = False
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Prop:
    name: str
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Filter:
    prop: str
    op: str
    literal: Union[str, int, float, bool]
    pos: int = field(default=0, compare=False)

    def __eq__(self, other):
        # 1 == 1.0 == True in Python; literal kinds must match too
        return (isinstance(other, Filter) and (self.prop, self.op) == (other.prop, other.op)
                and type(self.literal) is type(other.literal) and self.literal == other.literal)

    def __hash__(self):
        return hash((self.prop, self.op, type(self.literal).__name__, self.literal))


@dataclass(frozen=True)
class NeighborAt:
    n: int
    edges: Optional[tuple] = None
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class NeighborWithin:
    n: int
    edges: Optional[tuple] = None
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Path:
    target: str
    max_len: Optional[int] = None
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class GroupBy:
    key: str
    value: str
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Aggregate:
    fn: str
    sep: Optional[str] = None
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Join:
    """Builder-only stage: explicit join with another plan's result."""

    other: "QueryPlan"
    predicate: Callable = field(compare=False)
    name: Optional[str] = None
    pos: int = field(default=0, compare=False)


Stage = Union[Traverse, Prop, Filter, NeighborAt, NeighborWithin, Path, GroupBy, Aggregate, Join]


@dataclass(frozen=True)
class QueryPlan:
    source: Source
    stages: tuple = ()
    text: str = field(default="", compare=False)

    def then(self, *stages) -> "QueryPlan":
        return QueryPlan(self.source, self.stages + tuple(stages), self.text)

    def pivot(self, instance) -> "QueryPlan":
        """Re-anchor the plan at a single instance of its source type."""
        if instance.type.name != self.source.node:
            raise PlanError(f"cannot pivot a {self.source.node!r} query at {instance!r}",
                            self.text, self.source.pos)
        return QueryPlan(Source(self.source.node, instance.id, self.source.pos), self.stages, self.text)

    def __str__(self):
        return to_text(self)


AGG_NAMES = ("count", "sum", "product", "max", "min", "distinct")
STAGE_WORDS = ("~>", "prop", "filter", "neighborAt", "neighborWithin", "path", "groupBy",
               "mkString") + AGG_NAMES
CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")


# ---------------------------------------------------------------------- parser


class Parser:
    """Recursive-descent parser over a token list.

    Also used by the constraint parser, which embeds queries.
    """

    def __init__(self, text: str, tokens: Optional[list] = None, start: int = 0):
        self.text = text
        self.tokens = tokenize(text) if tokens is None else tokens
        self.i = start

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        if t.kind != "EOF":
            self.i += 1
        return t

    def error(self, message, expected=()):
        t = self.tok
        found = "end of input" if t.kind == "EOF" else repr(t.text)
        raise ParseError(f"{message}, found {found}", self.text, t.pos, expected)

    def is_op(self, value) -> bool:
        return self.tok.kind == "OP" and self.tok.value == value

    def is_word(self, value) -> bool:
        return self.tok.kind == "IDENT" and self.tok.value == value

    def expect_op(self, value) -> Token:
        if not self.is_op(value):
            self.error(f"expected {value!r}", [value])
        return self.advance()

    def expect_ident(self, what="identifier") -> Token:
        if self.tok.kind != "IDENT":
            self.error(f"expected {what}", ["IDENT"])
        return self.advance()

    def expect_string(self) -> Token:
        if self.tok.kind != "STRING":
            self.error("expected string", ["STRING"])
        return self.advance()

    def expect_int(self) -> Token:
        if self.tok.kind != "INT":
            self.error("expected integer", ["INT"])
        return self.advance()

    def parse_query(self) -> QueryPlan:
        source = self.parse_source()
        stages = self.parse_stages()
        if self.tok.kind != "EOF":
            self.error("expected a stage or end of query", STAGE_WORDS + ("EOF",))
        return QueryPlan(source, stages, self.text)

    def parse_source(self) -> Source:
        name = self.expect_ident("node type name")
        self.expect_op("(")
        ident = None
        if self.tok.kind == "STRING":
            ident = self.advance().value
        if not self.is_op(")"):
            self.error("expected ')' or an instance id string", [")", "STRING"])
        self.advance()
        return Source(name.value, ident, name.pos)

    def at_stage(self) -> bool:
        t = self.tok
        if t.kind == "OP":
            return t.value == "~>"
        return t.kind == "IDENT" and t.value in STAGE_WORDS

    def parse_stages(self) -> tuple:
        stages = []
        while self.at_stage():
            stages.append(self.parse_stage())
        return tuple(stages)

    def parse_stage(self) -> Stage:
        t = self.tok
        pos = t.pos
        if self.is_op("~>"):
            self.advance()
            reverse = False
            if self.is_op("-"):
                self.advance()
                reverse = True
            edge = self.expect_ident("edge name")
            return Traverse(edge.value, reverse, pos)
        word = self.advance().value
        if word == "prop":
            return Prop(self.expect_ident("property name").value, pos)
        if word == "filter":
            self.expect_op("(")
            prop = self.expect_ident("property name").value
            if not (self.tok.kind == "OP" and self.tok.value in CMP_OPS):
                self.error("expected comparison operator", CMP_OPS)
            op = self.advance().value
            lit = self.parse_literal()
            self.expect_op(")")
            return Filter(prop, op, lit, pos)
        if word in ("neighborAt", "neighborWithin"):
            self.expect_op("(")
            n = self.expect_int().value
            edges = None
            if self.is_op(","):
                self.advance()
                edges = self.parse_edge_list()
            self.expect_op(")")
            cls = NeighborAt if word == "neighborAt" else NeighborWithin
            return cls(n, edges, pos)
        if word == "path":
            self.expect_op("(")
            target = self.expect_string().value
            max_len = None
            if self.is_op(","):
                self.advance()
                max_len = self.expect_int().value
            self.expect_op(")")
            return Path(target, max_len, pos)
        if word == "groupBy":
            self.expect_op("(")
            key = self.expect_ident("property name").value
            self.expect_op(",")
            value = self.expect_ident("property name").value
            self.expect_op(")")
            return GroupBy(key, value, pos)
        if word == "mkString":
            self.expect_op("(")
            sep = self.expect_string().value
            self.expect_op(")")
            return Aggregate("mkString", sep, pos)
        return Aggregate(word, None, pos)

    def parse_edge_list(self) -> tuple:
        self.expect_op("[")
        names = [self.expect_ident("edge name").value]
        while self.is_op(","):
            self.advance()
            names.append(self.expect_ident("edge name").value)
        self.expect_op("]")
        return tuple(names)

    def parse_literal(self):
        t = self.tok
        if t.kind == "STRING":
            return self.advance().value
        if t.kind in ("INT", "REAL"):
            return self.advance().value
        if t.kind == "IDENT" and t.value in ("true", "false"):
            self.advance()
            return t.value == "true"
        if self.is_op("-"):
            self.advance()
            if self.tok.kind not in ("INT", "REAL"):
                self.error("expected number after '-'", ["INT", "REAL"])
            return -self.advance().value
        self.error("expected literal", ["STRING", "INT", "REAL", "true", "false"])


def parse(text: str) -> QueryPlan:
    return Parser(text).parse_query()


# ---------------------------------------------------------------------- printer


def quote(s: str) -> str:
    out = ['"']
    for c in s:
        if c in '"\\':
            out.append("\\" + c)
        elif c == "\n":
            out.append("\\n")
        elif c == "\t":
            out.append("\\t")
        elif c == "\r":
            out.append("\\r")
        else:
            out.append(c)
    out.append('"')
    return "".join(out)


def _literal_text(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return quote(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            raise PlanError(f"non-finite literal {v!r} has no textual form")
        return repr(v)
    return str(v)


def stage_text(stage) -> str:
    if isinstance(stage, Traverse):
        return f"~> {'-' if stage.reverse else ''}{stage.edge}"
    if isinstance(stage, Prop):
        return f"prop {stage.name}"
    if isinstance(stage, Filter):
        return f"filter({stage.prop} {stage.op} {_literal_text(stage.literal)})"
    if isinstance(stage, (NeighborAt, NeighborWithin)):
        word = "neighborAt" if isinstance(stage, NeighborAt) else "neighborWithin"
        edges = f", [{', '.join(stage.edges)}]" if stage.edges else ""
        return f"{word}({stage.n}{edges})"
    if isinstance(stage, Path):
        bound = f", {stage.max_len}" if stage.max_len is not None else ""
        return f"path({quote(stage.target)}{bound})"
    if isinstance(stage, GroupBy):
        return f"groupBy({stage.key}, {stage.value})"
    if isinstance(stage, Aggregate):
        if stage.fn == "mkString":
            return f"mkString({quote(stage.sep)})"
        return stage.fn
    raise PlanError(f"{type(stage).__name__} stages have no textual form")


def to_text(plan: QueryPlan) -> str:
    src = plan.source
    head = f"{src.node}({quote(src.id) if src.id is not None else ''})"
    return " ".join([head] + [stage_text(s) for s in plan.stages])


# ---------------------------------------------------------------------- types


@dataclass(frozen=True)
class ResultType:
    """Static shape of an intermediate result.

    ``node`` is None for mixed-type instance collections (neighborhoods);
    stages on those are checked at evaluation time instead.
    """

    shape: str  # instances | values | scalar | path | groups
    node: Optional[NodeType] = None
    kind: Optional[Kind] = None
    ordered: bool = False

    def __str__(self):
        if self.shape == "instances":
            return f"instances<{self.node.name if self.node else '*'}>"
        if self.shape in ("values", "scalar", "groups"):
            return f"{self.shape}<{self.kind if self.kind else '*'}>"
        return self.shape


@dataclass(frozen=True)
class TypedPlan:
    plan: QueryPlan
    types: tuple  # one per source + stage

    @property
    def result(self) -> ResultType:
        return self.types[-1]


def typecheck(plan: QueryPlan, catalog) -> TypedPlan:
    """Annotate every stage with its result type against a schema or graph."""
    text = plan.text

    def fail(msg, pos):
        raise PlanError(msg, text, pos)

    try:
        node = catalog.node(plan.source.node)
    except RelGraphError as exc:
        fail(str(exc), plan.source.pos)
    cur = ResultType("instances", node)
    types = [cur]
    for st in plan.stages:
        cur = _check_stage(st, cur, catalog, fail)
        types.append(cur)
    return TypedPlan(plan, tuple(types))


def _lookup_prop(catalog, node, name, pos, fail):
    try:
        return catalog.property(node, name)
    except RelGraphError as exc:
        fail(str(exc), pos)


def _check_stage(st, cur: ResultType, catalog, fail) -> ResultType:
    pos = st.pos
    if cur.shape == "scalar":
        fail(f"{stage_text(st) if not isinstance(st, Join) else 'join'} cannot follow a scalar result", pos)
    if isinstance(st, Join):
        if cur.shape != "instances":
            fail("join needs an instance collection", pos)
        other = typecheck(st.other, catalog).result
        if other.shape != "instances":
            fail("join partner must be an instance collection", pos)
        name = st.name or f"{cur.node.name if cur.node else 'mixed'}×{other.node.name if other.node else 'mixed'}"
        return ResultType("instances", NodeType(name, cur.node, other.node))
    if isinstance(st, Aggregate):
        return _check_aggregate(st, cur, fail)
    if cur.shape != "instances":
        fail(f"{stage_text(st)} needs an instance collection, got {cur}", pos)
    if isinstance(st, Traverse):
        try:
            edge = catalog.edge(st.edge)
        except RelGraphError as exc:
            fail(str(exc), pos)
        start, end = (edge.destination, edge.source) if st.reverse else (edge.source, edge.destination)
        if cur.node is not None and cur.node != start:
            way = "reverse of " if st.reverse else ""
            fail(f"{way}edge {edge.name!r} starts at {start.name!r}, not {cur.node.name!r}", pos)
        return ResultType("instances", end)
    if isinstance(st, (NeighborAt, NeighborWithin)):
        if st.n < 0:
            fail("neighborhood radius must be non-negative", pos)
        for e in st.edges or ():
            try:
                catalog.edge(e)
            except RelGraphError as exc:
                fail(str(exc), pos)
        return ResultType("instances", None)
    if isinstance(st, Path):
        return ResultType("path")
    if cur.node is None:
        # mixed collection: resolved per member at evaluation time
        if isinstance(st, Prop):
            return ResultType("values", None, None)
        if isinstance(st, Filter):
            return ResultType("instances", None)
        if isinstance(st, GroupBy):
            return ResultType("groups", None, None)
    if isinstance(st, Prop):
        prop = _lookup_prop(catalog, cur.node, st.name, pos, fail)
        return ResultType("values", None, prop.kind, prop.ordered)
    if isinstance(st, Filter):
        prop = _lookup_prop(catalog, cur.node, st.prop, pos, fail)
        try:
            engine.check_comparable(prop.kind, st.op, st.literal)
        except KindMismatch as exc:
            fail(f"KindMismatch: {exc}", pos)
        return cur
    if isinstance(st, GroupBy):
        _lookup_prop(catalog, cur.node, st.key, pos, fail)
        value = _lookup_prop(catalog, cur.node, st.value, pos, fail)
        return ResultType("groups", None, value.kind)
    fail(f"unsupported stage {st!r}", pos)


def _check_aggregate(st: Aggregate, cur: ResultType, fail) -> ResultType:
    fn = st.fn
    if fn == "count":
        return ResultType("scalar", None, INT)
    if cur.shape != "values":
        fail(f"{fn} needs a value sequence, got {cur}", st.pos)
    kind = cur.kind
    if fn == "distinct":
        return ResultType("values", None, kind.element() if kind else None)
    if fn == "mkString":
        return ResultType("scalar", None, TEXT)
    if kind is not None and not kind.numeric:
        fail(f"KindMismatch: {fn} needs numeric values, got {kind}", st.pos)
    if fn in ("sum", "product") and kind is not None:
        return ResultType("scalar", None, INT if kind.scalar == "int" else REAL)
    return ResultType("scalar", None, kind.element() if kind else None)


# ---------------------------------------------------------------------- evaluation


def _resolve_target(graph, target: str):
    if ":" in target:
        node, _, ident = target.partition(":")
        if node in graph.schema.nodes:
            return graph.get(node, ident)
    found = graph.find(target)
    if not found:
        raise UnknownInstance(f"no instance with id {target!r}")
    if len(found) > 1:
        raise QueryError(f"id {target!r} is ambiguous; qualify it as 'type:{target}'")
    return found[0]


def _by_type(graph, input: InstanceSet, fn):
    """Apply ``fn(subset)`` to each homogeneous slice of a mixed collection."""
    if input.node_type is not None or not input.members:
        return [fn(input)]
    order = []
    groups = {}
    for m in input.members:
        if m.type.name not in groups:
            order.append(m.type.name)
            groups[m.type.name] = []
        groups[m.type.name].append(m)
    return [fn(InstanceSet(graph.node_type(t), tuple(groups[t]))) for t in order]


def run_stage(graph, st, value):
    if isinstance(st, Traverse):
        return engine.traverse(graph, value, st.edge, "rev" if st.reverse else "fwd")
    if isinstance(st, Prop):
        parts = _by_type(graph, value, lambda s: engine.project(graph, s, st.name))
        if len(parts) == 1:
            return parts[0]
        return ValueSequence(None, tuple(v for p in parts for v in p.values))
    if isinstance(st, Filter):
        if value.node_type is None and value.members:
            keep = set()
            for part in _by_type(graph, value, lambda s: engine.filter_set(graph, s, st.prop, st.op, st.literal)):
                keep.update(m.key for m in part.members)
            return InstanceSet.of(m for m in value.members if m.key in keep)
        return engine.filter_set(graph, value, st.prop, st.op, st.literal)
    if isinstance(st, NeighborAt):
        return engine.neighbors_of_set(graph, value, st.n, st.edges, within=False)
    if isinstance(st, NeighborWithin):
        return engine.neighbors_of_set(graph, value, st.n, st.edges, within=True)
    if isinstance(st, Path):
        if len(value) != 1:
            raise QueryError(f"path needs exactly one start instance, got {len(value)}")
        return engine.path(graph, value.members[0], _resolve_target(graph, st.target), st.max_len)
    if isinstance(st, GroupBy):
        parts = _by_type(graph, value, lambda s: engine.group_by(graph, s, st.key, st.value))
        merged = {}
        for part in parts:
            for k, vs in part.items():
                merged.setdefault(k, []).extend(vs)
        return merged
    if isinstance(st, Aggregate):
        if st.fn == "count":
            if isinstance(value, (dict, EdgePath)):
                return len(value)
            return engine.aggregate(value, "size")
        return engine.aggregate(value, st.fn, st.sep if st.sep is not None else ",")
    if isinstance(st, Join):
        other = evaluate(st.other, graph)
        node = NodeType(st.name, value.node_type, other.node_type) if st.name else None
        return engine.join(value, other, st.predicate, node)
    raise QueryError(f"unsupported stage {st!r}")


def evaluate(plan, graph, root=None):
    """Evaluate a (typed) plan; ``root`` re-anchors the source at one instance."""
    typed = plan if isinstance(plan, TypedPlan) else typecheck(plan, graph)
    qp = typed.plan
    if root is not None:
        qp = qp.pivot(root)
    src = qp.source
    if src.id is None:
        value = engine.all_of(graph, src.node)
    else:
        value = engine.single(graph, src.node, src.id)
    for st in qp.stages:
        value = run_stage(graph, st, value)
    return value


def query(graph, text: str):
    """Parse, type-check and evaluate ``text`` against ``graph``."""
    return evaluate(typecheck(parse(text), graph), graph)


def format_result(result) -> str:
    """Render a result in the fixed CLI output format."""
    if isinstance(result, InstanceSet):
        return "\n".join(result.ids)
    if isinstance(result, ValueSequence):
        return "\n".join(engine.format_value(v) for v in result.values)
    if isinstance(result, EdgePath):
        if not result.found:
            return "NotFound"
        if not result.steps:
            return "Found(0)"
        return "\n".join(f"{'~>' if s.direction == 'fwd' else '~>-'}{s.edge} {s.node.id}"
                         for s in result.steps)
    if isinstance(result, dict):
        lines = []
        for k in sorted(result, key=lambda x: (str(type(x)), x)):
            lines.append(f"{engine.format_value(k)}: " + ",".join(engine.format_value(v) for v in result[k]))
        return "\n".join(lines)
    return engine.format_value(result)
