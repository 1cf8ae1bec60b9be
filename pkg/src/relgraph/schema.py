"""First-order data model: node, property and edge types plus the sensors
that compute them.

A schema is declared once, frozen, and then used as the template for an
:class:`~relgraph.graph.InstanceGraph`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .errors import (
    DuplicateName,
    KindMismatch,
    ModeMismatch,
    SchemaFrozen,
    SignatureMismatch,
    UnknownEdgeType,
    UnknownNodeType,
    UnknownProperty,
)

SCALARS = ("bool", "int", "real", "text")


@dataclass(frozen=True)
class Kind:
    scalar: str
    is_list: bool = False

    def __post_init__(self):
        if self.scalar not in SCALARS:
            raise KindMismatch(f"unknown scalar kind {self.scalar!r}")

    @property
    def numeric(self) -> bool:
        return self.scalar in ("int", "real")

    def element(self) -> "Kind":
        return Kind(self.scalar)

    def __str__(self):
        return f"list[{self.scalar}]" if self.is_list else self.scalar


BOOL = Kind("bool")
INT = Kind("int")
REAL = Kind("real")
TEXT = Kind("text")


def ListOf(element: Kind) -> Kind:
    if element.is_list:
        raise KindMismatch("nested lists are not supported")
    return Kind(element.scalar, True)


def parse_kind(text: str) -> Kind:
    """Parse ``"real"``, ``"list[text]"`` and friends."""
    t = text.strip().lower()
    if t.startswith("list[") and t.endswith("]"):
        inner = t[5:-1].strip()
        if inner.startswith("list["):
            raise KindMismatch("nested lists are not supported")
        return ListOf(Kind(inner))
    aliases = {"float": "real", "str": "text", "string": "text", "integer": "int", "boolean": "bool"}
    return Kind(aliases.get(t, t))


def scalar_kind_of(value) -> Kind:
    # bool first: bool is a subclass of int
    if isinstance(value, bool):
        return BOOL
    if isinstance(value, int):
        return INT
    if isinstance(value, float):
        return REAL
    if isinstance(value, str):
        return TEXT
    raise KindMismatch(f"unsupported value {value!r}")


# fast path for the builtin scalar types
EXACT_SCALAR = {bool: "bool", int: "int", float: "real", str: "text"}


def conforms(value, kind: Kind) -> bool:
    """True when ``value`` is a valid instance of ``kind``.

    Ints are accepted where reals are expected.
    """
    if kind.is_list:
        if not isinstance(value, (list, tuple)):
            return False
        elem = kind.element()
        return all(conforms(v, elem) for v in value)
    exact = EXACT_SCALAR.get(type(value))
    if exact is not None:
        return exact == kind.scalar or (exact == "int" and kind.scalar == "real")
    if isinstance(value, (list, tuple)):
        return False
    try:
        actual = scalar_kind_of(value)
    except KindMismatch:
        return False
    if actual == kind:
        return True
    return kind == REAL and actual == INT


@dataclass(frozen=True)
class NodeType:
    name: str
    left: Optional["NodeType"] = None
    right: Optional["NodeType"] = None

    @property
    def composed(self) -> bool:
        return self.left is not None

    def __str__(self):
        return self.name


class Sensor:
    """A named black-box function attached to the schema.

    ``mode`` is one of ``property`` (instance -> value), ``matching``
    ((source, destination) -> bool) or ``generating`` (source -> list of
    ``(id, attributes)`` records for the destination type).

    ``source``/``destination`` optionally pin the node type names the sensor
    accepts; ``None`` means any.  ``key_pair`` marks a matching sensor that is
    plain attribute equality so population may use a hash join.  Sensors with
    ``needs_graph`` receive ``(graph, instance)``.  ``volatile`` values are
    never memoized.
    """

    MODES = ("property", "matching", "generating")

    def __init__(self, name, mode, fn, *, output=None, source=None, destination=None,
                 args=(), key_pair=None, needs_graph=False, volatile=False):
        if mode not in self.MODES:
            raise ModeMismatch(f"unknown sensor mode {mode!r}")
        self.name = name
        self.mode = mode
        self.fn = fn
        self.output = output
        self.source = source
        self.destination = destination
        self.args = tuple(args)
        self.key_pair = key_pair
        self.needs_graph = needs_graph
        self.volatile = volatile

    @property
    def signature(self):
        return (self.name, self.mode, self.args)

    def __eq__(self, other):
        return isinstance(other, Sensor) and self.signature == other.signature

    def __hash__(self):
        return hash(self.signature)

    def __repr__(self):
        args = ", ".join(repr(a) for a in self.args)
        return f"Sensor<{self.mode}>{self.name}({args})"


@dataclass(frozen=True)
class PropertyType:
    owner: NodeType
    name: str
    kind: Kind
    sensor: Sensor
    ordered: bool = False

    def __str__(self):
        return f"{self.owner.name}.{self.name}"


@dataclass(eq=False)
class EdgeType:
    name: str
    source: NodeType
    destination: NodeType
    sensors: list = field(default_factory=list)

    def signature(self):
        return (self.name, self.source, self.destination, tuple(self.sensors))

    def __eq__(self, other):
        return isinstance(other, EdgeType) and self.signature() == other.signature()

    def __hash__(self):
        return hash((self.name, self.source, self.destination))

    def __str__(self):
        return self.name


class SchemaGraph:
    """Typed schema of a heterogeneous information network."""

    def __init__(self):
        self.nodes: dict[str, NodeType] = {}
        self.properties: dict[tuple[str, str], PropertyType] = {}
        self.edges: dict[str, EdgeType] = {}
        self.frozen = False

    def _check_mutable(self):
        if self.frozen:
            raise SchemaFrozen("schema is frozen")

    def _resolve_node(self, node) -> NodeType:
        name = node.name if isinstance(node, NodeType) else node
        try:
            found = self.nodes[name]
        except KeyError:
            raise UnknownNodeType(f"unknown node type {name!r}") from None
        if isinstance(node, NodeType) and node != found:
            raise UnknownNodeType(f"node type {name!r} does not belong to this schema")
        return found

    # declarations

    def declare_node(self, name: str) -> NodeType:
        self._check_mutable()
        if name in self.nodes:
            raise DuplicateName(f"node type {name!r} already declared")
        node = NodeType(name)
        self.nodes[name] = node
        return node

    def declare_join(self, left, right, name: Optional[str] = None) -> NodeType:
        """Declare a composed node type housing (left, right) pairs."""
        self._check_mutable()
        left = self._resolve_node(left)
        right = self._resolve_node(right)
        name = name or f"{left.name}×{right.name}"
        if name in self.nodes:
            raise DuplicateName(f"node type {name!r} already declared")
        node = NodeType(name, left, right)
        self.nodes[name] = node
        return node

    def declare_property(self, owner, name: str, kind: Kind, sensor: Sensor,
                         ordered: bool = False) -> PropertyType:
        self._check_mutable()
        owner = self._resolve_node(owner)
        if (owner.name, name) in self.properties:
            raise DuplicateName(f"property {name!r} already declared on {owner.name!r}")
        if sensor.mode != "property":
            raise ModeMismatch(f"{sensor!r} is not a property sensor")
        if sensor.output is not None and sensor.output != kind:
            raise KindMismatch(f"{sensor!r} produces {sensor.output}, property declared {kind}")
        if sensor.source is not None and sensor.source != owner.name:
            raise SignatureMismatch(f"{sensor!r} reads {sensor.source}, not {owner.name}")
        prop = PropertyType(owner, name, kind, sensor, bool(ordered) and kind.is_list)
        self.properties[(owner.name, name)] = prop
        return prop

    def declare_edge(self, name: str, source, destination) -> EdgeType:
        self._check_mutable()
        if name in self.edges:
            raise DuplicateName(f"edge type {name!r} already declared")
        edge = EdgeType(name, self._resolve_node(source), self._resolve_node(destination))
        self.edges[name] = edge
        return edge

    def add_sensor(self, edge, sensor: Sensor) -> EdgeType:
        self._check_mutable()
        edge = self.edge(edge.name if isinstance(edge, EdgeType) else edge)
        if sensor.mode not in ("matching", "generating"):
            raise ModeMismatch(f"{sensor!r} cannot populate edges")
        if sensor.source is not None and sensor.source != edge.source.name:
            raise SignatureMismatch(
                f"{sensor!r} expects source {sensor.source}, edge has {edge.source.name}")
        if sensor.destination is not None and sensor.destination != edge.destination.name:
            raise SignatureMismatch(
                f"{sensor!r} expects destination {sensor.destination}, "
                f"edge has {edge.destination.name}")
        edge.sensors.append(sensor)
        return edge

    def freeze(self) -> "SchemaGraph":
        for edge in self.edges.values():
            edge.sensors = tuple(edge.sensors)
        self.frozen = True
        return self

    # lookups

    def node(self, name: str) -> NodeType:
        return self._resolve_node(name)

    def edge(self, name: str) -> EdgeType:
        try:
            return self.edges[name]
        except KeyError:
            raise UnknownEdgeType(f"unknown edge type {name!r}") from None

    def property(self, owner, name: str) -> PropertyType:
        owner_name = owner.name if isinstance(owner, NodeType) else owner
        try:
            return self.properties[(owner_name, name)]
        except KeyError:
            raise UnknownProperty(f"unknown property {name!r} on {owner_name!r}") from None

    def properties_of(self, owner) -> list[PropertyType]:
        owner = self._resolve_node(owner)
        return [p for (o, _), p in self.properties.items() if o == owner.name]

    def edges_from(self, node) -> list[EdgeType]:
        node = self._resolve_node(node)
        return [e for e in self.edges.values() if e.source == node]

    def edges_to(self, node) -> list[EdgeType]:
        node = self._resolve_node(node)
        return [e for e in self.edges.values() if e.destination == node]

    def edge_index(self, name: str) -> int:
        return list(self.edges).index(name)

    def __eq__(self, other):
        if not isinstance(other, SchemaGraph):
            return NotImplemented
        return (set(self.nodes.values()) == set(other.nodes.values())
                and set(self.properties.values()) == set(other.properties.values())
                and {e.signature() for e in self.edges.values()}
                == {e.signature() for e in other.edges.values()})

    __hash__ = None

    def __repr__(self):
        return (f"SchemaGraph(nodes={list(self.nodes)}, edges={list(self.edges)}, "
                f"properties={len(self.properties)}, frozen={self.frozen})")


def property_sensor(name: str, fn: Callable[[Any], Any], output: Kind, **kw) -> Sensor:
    return Sensor(name, "property", fn, output=output, **kw)


def matching_sensor(name: str, fn: Callable[[Any, Any], bool], **kw) -> Sensor:
    return Sensor(name, "matching", fn, **kw)


def generating_sensor(name: str, fn: Callable[[Any], list], **kw) -> Sensor:
    return Sensor(name, "generating", fn, **kw)
