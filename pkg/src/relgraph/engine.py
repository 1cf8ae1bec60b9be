"""Query combinators over a populated :class:`InstanceGraph`.

Instance collections behave as ordered sets (first-encounter order, no
duplicates); property projections are plain sequences so aggregations see
multiplicities.
"""

from __future__ import annotations

import operator
from collections import deque
from dataclasses import dataclass
from functools import reduce
from typing import Callable, Iterable, Optional, Sequence

from .errors import EmptyAggregate, KindMismatch, OwnerMismatch, QueryError, TypeMismatch, UnknownInstance
from .graph import InstanceGraph, NodeInstance, compose
from .schema import BOOL, EdgeType, Kind, NodeType, PropertyType, scalar_kind_of


@dataclass(frozen=True)
class InstanceSet:
    node_type: Optional[NodeType]
    members: tuple = ()

    @classmethod
    def of(cls, members: Iterable[NodeInstance], node_type: Optional[NodeType] = None):
        seen = set()
        out = []
        for m in members:
            if m.key not in seen:
                seen.add(m.key)
                out.append(m)
        if node_type is None:
            types = {m.type for m in out}
            node_type = types.pop() if len(types) == 1 else None
        return cls(node_type, tuple(out))

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.members]

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, item):
        return item in self.members


@dataclass(frozen=True)
class ValueSequence:
    kind: Optional[Kind]
    values: tuple = ()

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class PathStep:
    edge: str
    direction: str
    node: NodeInstance


@dataclass(frozen=True)
class EdgePath:
    """Result of a shortest-path query.

    ``found`` separates "x == y" (empty steps, found) from "unreachable"
    (empty steps, not found).
    """

    source: NodeInstance
    target: NodeInstance
    steps: tuple = ()
    found: bool = False

    def __len__(self):
        return len(self.steps)


def all_of(graph: InstanceGraph, node) -> InstanceSet:
    node = graph.node_type(node)
    return InstanceSet(node, tuple(graph.instances_of(node)))


def single(graph: InstanceGraph, node, id) -> InstanceSet:
    inst = graph.get(node, id)
    return InstanceSet(inst.type, (inst,))


def _as_edge(graph, edge) -> EdgeType:
    return graph.schema.edge(edge) if isinstance(edge, str) else edge


def _as_prop(graph, node_type, prop) -> PropertyType:
    if isinstance(prop, str):
        if node_type is None:
            raise OwnerMismatch(f"cannot resolve property {prop!r} on a mixed-type collection")
        return graph.property(node_type, prop)
    return prop


def traverse(graph: InstanceGraph, input: InstanceSet, edge, direction: str = "fwd") -> InstanceSet:
    edge = _as_edge(graph, edge)
    if direction not in ("fwd", "rev"):
        raise QueryError(f"direction must be 'fwd' or 'rev', got {direction!r}")
    start, end = (edge.source, edge.destination) if direction == "fwd" else (edge.destination, edge.source)
    if not input.members:
        return InstanceSet(end, ())
    if input.node_type != start:
        got = input.node_type.name if input.node_type else "mixed"
        raise TypeMismatch(f"edge {edge.name!r} ({direction}) starts at {start.name!r}, input is {got!r}")
    step = graph.forward if direction == "fwd" else graph.reverse
    seen = set()
    out = []
    for m in input.members:
        for key in step(edge, m.key):
            if key not in seen:
                seen.add(key)
                out.append(graph.by_key(key))
    return InstanceSet(end, tuple(out))


def project(graph: InstanceGraph, input: InstanceSet, prop) -> ValueSequence:
    if not input.members and isinstance(prop, str) and input.node_type is None:
        return ValueSequence(None, ())
    prop = _as_prop(graph, input.node_type, prop)
    if input.members and input.node_type != prop.owner:
        raise OwnerMismatch(f"{prop} does not apply to {input.node_type}")
    return ValueSequence(prop.kind, tuple(graph.property_value(m, prop) for m in input.members))


_CMP = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


def check_comparable(kind: Kind, op: str, literal) -> None:
    """Raise KindMismatch unless ``kind op literal`` is well-typed."""
    if op not in _CMP:
        raise KindMismatch(f"unknown comparison {op!r}")
    if kind.is_list:
        raise KindMismatch(f"cannot compare list-valued property ({kind}) with a literal")
    lit = scalar_kind_of(literal)
    if kind.numeric and lit.numeric:
        return
    if kind != lit:
        raise KindMismatch(f"cannot compare {kind} with {lit} literal {literal!r}")
    if kind == BOOL and op not in ("==", "!="):
        raise KindMismatch(f"booleans support only == and !=, not {op}")


def filter_set(graph: InstanceGraph, input: InstanceSet, prop, op: str, literal) -> InstanceSet:
    if not input.members:
        return input
    prop = _as_prop(graph, input.node_type, prop)
    if input.node_type != prop.owner:
        raise OwnerMismatch(f"{prop} does not apply to {input.node_type}")
    check_comparable(prop.kind, op, literal)
    cmp = _CMP[op]
    keep = tuple(m for m in input.members if cmp(graph.property_value(m, prop), literal))
    return InstanceSet(input.node_type, keep)


def filter_by(input: InstanceSet, predicate: Callable[[NodeInstance], bool]) -> InstanceSet:
    """Order-preserving selection with an arbitrary Python predicate."""
    return InstanceSet(input.node_type, tuple(m for m in input.members if predicate(m)))


def join(left: InstanceSet, right: InstanceSet, predicate: Callable[[NodeInstance, NodeInstance], bool],
         node_type: Optional[NodeType] = None) -> InstanceSet:
    """Explicit join: composed instances for every pair satisfying ``predicate``."""
    if node_type is None:
        lname = left.node_type.name if left.node_type else "mixed"
        rname = right.node_type.name if right.node_type else "mixed"
        node_type = NodeType(f"{lname}×{rname}", left.node_type, right.node_type)
    out = [compose(node_type, l, r) for l in left.members for r in right.members if predicate(l, r)]
    return InstanceSet(node_type, tuple(out))


def _bfs_levels(graph, start_key, edges, directed, limit):
    """Distances from ``start_key`` up to ``limit`` hops, in discovery order."""
    dist = {start_key: 0}
    order = [start_key]
    frontier = [start_key]
    d = 0
    while frontier and (limit is None or d < limit):
        d += 1
        nxt = []
        for key in frontier:
            for _, _, nbr in graph.neighbors(key, edges, directed):
                if nbr not in dist:
                    dist[nbr] = d
                    order.append(nbr)
                    nxt.append(nbr)
        frontier = nxt
    return dist, order


def _check_member(graph, x: NodeInstance):
    if not graph.contains(x):
        raise UnknownInstance(f"{x!r} is not in the graph")


def neighbor_at(graph: InstanceGraph, x: NodeInstance, n: int, edges: Optional[Iterable] = None,
                directed: bool = False) -> InstanceSet:
    """Instances exactly ``n`` hops from ``x`` (undirected view by default)."""
    _check_member(graph, x)
    if n < 0:
        raise QueryError("neighborhood radius must be non-negative")
    edges = None if edges is None else [_as_edge(graph, e).name for e in edges]
    dist, order = _bfs_levels(graph, x.key, edges, directed, n)
    return InstanceSet.of(graph.by_key(k) for k in order if dist[k] == n)


def neighbor_within(graph: InstanceGraph, x: NodeInstance, n: int, edges: Optional[Iterable] = None,
                    directed: bool = False) -> InstanceSet:
    """Instances between 1 and ``n`` hops from ``x``; ``x`` itself excluded."""
    _check_member(graph, x)
    if n < 0:
        raise QueryError("neighborhood radius must be non-negative")
    edges = None if edges is None else [_as_edge(graph, e).name for e in edges]
    dist, order = _bfs_levels(graph, x.key, edges, directed, n)
    return InstanceSet.of(graph.by_key(k) for k in order if 1 <= dist[k] <= n)


def neighbors_of_set(graph, input: InstanceSet, n: int, edges=None, within=False, directed=False) -> InstanceSet:
    fn = neighbor_within if within else neighbor_at
    out = []
    for m in input.members:
        out.extend(fn(graph, m, n, edges, directed).members)
    return InstanceSet.of(out)


def path(graph: InstanceGraph, x: NodeInstance, y: NodeInstance, max_len: Optional[int] = None,
         edges: Optional[Iterable] = None, directed: bool = False) -> EdgePath:
    """Shortest edge sequence from ``x`` to ``y``; ``max_len`` is inclusive."""
    _check_member(graph, x)
    _check_member(graph, y)
    if x.key == y.key:
        return EdgePath(x, y, (), True)
    edges = None if edges is None else [_as_edge(graph, e).name for e in edges]
    parent = {x.key: None}
    queue = deque([(x.key, 0)])
    target = y.key
    while queue:
        key, d = queue.popleft()
        if max_len is not None and d >= max_len:
            continue
        for name, direction, nbr in graph.neighbors(key, edges, directed):
            if nbr in parent:
                continue
            parent[nbr] = (key, name, direction)
            if nbr == target:
                steps = []
                cur = nbr
                while parent[cur] is not None:
                    prev, ename, edir = parent[cur]
                    steps.append(PathStep(ename, edir, graph.by_key(cur)))
                    cur = prev
                return EdgePath(x, y, tuple(reversed(steps)), True)
            queue.append((nbr, d + 1))
    return EdgePath(x, y, (), False)


AGGREGATES = ("sum", "product", "max", "min", "size", "count", "mkString", "distinct")


def flatten(values: Sequence) -> list:
    """One level of list flattening; scalars pass through."""
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            out.extend(v)
        else:
            out.append(v)
    return out


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(format_value(x) for x in v) + "]"
    return str(v)


def aggregate(input, fn: str, sep: str = ","):
    """Apply an aggregation to a ValueSequence (or plain list).

    Sequences of list values are flattened one level first.  ``size``/``count``
    of an InstanceSet is its cardinality.
    """
    if isinstance(input, InstanceSet):
        if fn in ("size", "count"):
            return len(input)
        raise KindMismatch(f"{fn} needs values, got an instance collection")
    values = flatten(input.values if isinstance(input, ValueSequence) else input)
    if fn in ("size", "count"):
        return len(values)
    if fn == "distinct":
        seen = []
        marks = set()
        for v in values:
            if v not in marks:
                marks.add(v)
                seen.append(v)
        kind = input.kind.element() if isinstance(input, ValueSequence) and input.kind else None
        return ValueSequence(kind, tuple(seen))
    if fn == "mkString":
        return sep.join(format_value(v) for v in values)
    if fn not in ("sum", "product", "max", "min"):
        raise QueryError(f"unknown aggregation {fn!r}")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise KindMismatch(f"{fn} needs numeric values, got {v!r}")
    if fn == "sum":
        return sum(values) if values else 0
    if fn == "product":
        return reduce(operator.mul, values, 1)
    if not values:
        raise EmptyAggregate(f"{fn} of an empty collection")
    return max(values) if fn == "max" else min(values)


def group_by(graph: InstanceGraph, input: InstanceSet, key_prop, value_prop) -> dict:
    """Map each key value to the ordered list of value-property values.

    A list-valued key places the instance under every element.
    """
    if not input.members:
        return {}
    key_prop = _as_prop(graph, input.node_type, key_prop)
    value_prop = _as_prop(graph, input.node_type, value_prop)
    for p in (key_prop, value_prop):
        if p.owner != input.node_type:
            raise OwnerMismatch(f"{p} does not apply to {input.node_type}")
    groups: dict = {}
    for m in input.members:
        k = graph.property_value(m, key_prop)
        v = graph.property_value(m, value_prop)
        keys = k if isinstance(k, (list, tuple)) else [k]
        done = set()
        for key in keys:
            if key in done:
                continue
            done.add(key)
            groups.setdefault(key, []).append(v)
    return groups
