"""Populated instance graph.

Instances are generic records (type, id, attribute map).  Edges are created
exclusively by sensors at population time; every edge is indexed in both
directions so reverse traversal is free.
"""

from __future__ import annotations

import builtins
import threading
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import (
    DuplicateInstanceId,
    DuplicateName,
    GenerationDepthExceeded,
    GraphSealed,
    KindMismatch,
    OwnerMismatch,
    SchemaError,
    SensorFailure,
    TypeMismatch,
    UnknownInstance,
    UnknownProperty,
)
from .schema import (
    EXACT_SCALAR,
    REAL,
    Kind,
    NodeType,
    PropertyType,
    SchemaGraph,
    Sensor,
    conforms,
    scalar_kind_of,
    ListOf,
)

MAX_GENERATION_DEPTH = 8


class NodeInstance:
    """One data item of a node type.  Identity is ``(type name, id)``."""

    __slots__ = ("type", "id", "attributes", "left", "right", "key")

    def __init__(self, type: NodeType, id, attributes=None, left=None, right=None):
        self.type = type
        self.id = str(id)
        self.attributes = dict(attributes or {})
        self.left = left
        self.right = right
        self.key = (type.name, self.id)

    def get(self, name, default=None):
        return self.attributes.get(name, default)

    def __getitem__(self, name):
        return self.attributes[name]

    def __eq__(self, other):
        return isinstance(other, NodeInstance) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"{self.type.name}({self.id!r})"


def compose(node_type: NodeType, left: NodeInstance, right: NodeInstance) -> NodeInstance:
    """Build the composed instance for a join pair.

    Member attributes are exposed as ``left.<attr>`` and ``right.<attr>``.
    """
    attrs = {f"left.{k}": v for k, v in left.attributes.items()}
    attrs.update({f"right.{k}": v for k, v in right.attributes.items()})
    return NodeInstance(node_type, f"{left.id}|{right.id}", attrs, left=left, right=right)


@dataclass
class PopulationReport:
    added: int = 0
    edges: int = 0
    generated: int = 0

    def __iadd__(self, other):
        self.added += other.added
        self.edges += other.edges
        self.generated += other.generated
        return self


class InstanceGraph:
    """Propositionalized graph over a frozen :class:`SchemaGraph`."""

    def __init__(self, schema: SchemaGraph):
        if not schema.frozen:
            raise SchemaError("schema must be frozen before population")
        self.schema = schema
        self._instances = {name: {} for name in schema.nodes}
        self._fwd = {name: defaultdict(list) for name in schema.edges}
        self._rev = {name: defaultdict(list) for name in schema.edges}
        self._edge_set = set()
        self._memo = {}
        self._derived = {}
        self._version = 0
        self._adjacency_cache = {}
        self._journal = None
        self._lock = threading.RLock()
        self.sealed = False

    # ------------------------------------------------------------------ lookup

    def node_type(self, node) -> NodeType:
        return self.schema.node(node.name if isinstance(node, NodeType) else node)

    def instances_of(self, node) -> list[NodeInstance]:
        node = self.node_type(node)
        return list(self._instances[node.name].values())

    def count(self, node) -> int:
        return len(self._instances[self.node_type(node).name])

    def get(self, node, id) -> NodeInstance:
        node = self.node_type(node)
        try:
            return self._instances[node.name][str(id)]
        except KeyError:
            raise UnknownInstance(f"no instance {id!r} of {node.name!r}") from None

    def by_key(self, key) -> NodeInstance:
        try:
            return self._instances[key[0]][key[1]]
        except KeyError:
            raise UnknownInstance(f"no instance {key!r}") from None

    def contains(self, instance: NodeInstance) -> bool:
        return instance.id in self._instances.get(instance.type.name, ())

    def find(self, id) -> list[NodeInstance]:
        """All instances with this id, across node types."""
        return [inst[str(id)] for inst in self._instances.values() if str(id) in inst]

    def property(self, node, name: str) -> PropertyType:
        owner = node.name if isinstance(node, NodeType) else node
        try:
            return self.schema.property(owner, name)
        except UnknownProperty:
            pass
        try:
            return self._derived[(owner, name)]
        except KeyError:
            raise UnknownProperty(f"unknown property {name!r} on {owner!r}") from None

    def properties_of(self, node) -> list[PropertyType]:
        node = self.node_type(node)
        out = self.schema.properties_of(node)
        out.extend(p for (o, _), p in self._derived.items() if o == node.name)
        return out

    # also lets the type-checker treat a graph as a catalog
    def node(self, name):
        return self.schema.node(name)

    def edge(self, name):
        return self.schema.edge(name)

    @builtins.property
    def edges(self):
        return self.schema.edges

    # ------------------------------------------------------------------ edges

    def forward(self, edge, key) -> list:
        return self._fwd[_edge_name(edge)].get(key, [])

    def reverse(self, edge, key) -> list:
        return self._rev[_edge_name(edge)].get(key, [])

    def edge_records(self, edge=None):
        """Yield ``(edge name, source key, destination key)`` in insertion order."""
        names = [_edge_name(edge)] if edge is not None else list(self._fwd)
        for name in names:
            for src, dsts in self._fwd[name].items():
                for dst in dsts:
                    yield (name, src, dst)

    def has_edge(self, edge, src_key, dst_key) -> bool:
        return (_edge_name(edge), src_key, dst_key) in self._edge_set

    def _add_edge(self, edge_name, src_key, dst_key) -> bool:
        rec = (edge_name, src_key, dst_key)
        if rec in self._edge_set:
            return False
        self._edge_set.add(rec)
        self._fwd[edge_name][src_key].append(dst_key)
        self._rev[edge_name][dst_key].append(src_key)
        if self._journal is not None:
            self._journal.append(("edge", rec))
        return True

    def neighbors(self, key, edges: Optional[Iterable[str]] = None, directed: bool = False):
        """Adjacency of one instance on the undirected view.

        Returns ``(edge name, direction, neighbor key)`` triples ordered by edge
        declaration order, forward before reverse, then insertion order.
        ``directed=True`` keeps forward steps only.
        """
        restrict = None if edges is None else frozenset(edges)
        cache_key = (restrict, directed)
        cache = self._adjacency_cache.get(cache_key)
        if cache is None or cache[0] != self._version:
            cache = (self._version, {})
            self._adjacency_cache[cache_key] = cache
        table = cache[1]
        out = table.get(key)
        if out is None:
            out = []
            for name in self.schema.edges:
                if restrict is not None and name not in restrict:
                    continue
                for nbr in self._fwd[name].get(key, ()):
                    out.append((name, "fwd", nbr))
                if not directed:
                    for nbr in self._rev[name].get(key, ()):
                        out.append((name, "rev", nbr))
            out = tuple(out)
            table[key] = out
        return out

    # ------------------------------------------------------------------ mutation

    def seal(self) -> "InstanceGraph":
        """End the population phase; further ``populate`` calls are rejected."""
        self.sealed = True
        return self

    def populate(self, node, instances: Iterable[NodeInstance]) -> PopulationReport:
        """Add a batch of instances and fire the sensors they trigger.

        The call is atomic: on any error the graph is restored to its prior
        state.
        """
        with self._lock:
            if self.sealed:
                raise GraphSealed("graph is sealed")
            node = self.node_type(node)
            instances = list(instances)
            self._journal = []
            try:
                report = self._populate(node, instances, depth=0)
            except Exception:
                self._rollback(self._journal)
                raise
            finally:
                self._journal = None
            self._version += 1
            return report

    def _rollback(self, journal):
        for action, item in reversed(journal):
            if action == "edge":
                name, src, dst = item
                self._edge_set.discard(item)
                self._fwd[name][src].remove(dst)
                if not self._fwd[name][src]:
                    del self._fwd[name][src]
                self._rev[name][dst].remove(src)
                if not self._rev[name][dst]:
                    del self._rev[name][dst]
            else:
                tname, id = item
                del self._instances[tname][id]
        self._version += 1

    def _populate(self, node: NodeType, batch: list, depth: int) -> PopulationReport:
        report = PopulationReport()
        store = self._instances[node.name]
        seen = set()
        for inst in batch:
            if not isinstance(inst, NodeInstance) or inst.type != node:
                raise TypeMismatch(f"{inst!r} is not an instance of {node.name!r}")
            if inst.id in store or inst.id in seen:
                raise DuplicateInstanceId(f"duplicate id {inst.id!r} for {node.name!r}")
            seen.add(inst.id)
        if not batch:
            return report
        for inst in batch:
            store[inst.id] = inst
            self._journal.append(("node", inst.key))
        report.added = len(batch)
        self._version += 1

        for edge in self.schema.edges.values():
            matching = [s for s in edge.sensors if s.mode == "matching"]
            if matching and node in (edge.source, edge.destination):
                report.edges += self._run_matching(edge, matching, node, batch)

        for edge in self.schema.edges_from(node):
            generating = [s for s in edge.sensors if s.mode == "generating"]
            if generating:
                report += self._run_generating(edge, generating, batch, depth)
        return report

    def _run_matching(self, edge, sensors, node, batch) -> int:
        added = 0
        src_all = self._instances[edge.source.name]
        dst_all = self._instances[edge.destination.name]
        # pairs involving at least one new instance: new sources x all
        # destinations, then old sources x new destinations
        new_ids = {inst.id for inst in batch}
        for sensor in sensors:
            pairs = []
            if edge.source == node:
                pairs.append((batch, list(dst_all.values())))
            if edge.destination == node:
                olds = [u for u in src_all.values()
                        if not (edge.source == node and u.id in new_ids)]
                pairs.append((olds, batch))
            # _add_edge inlined; this loop dominates loading large tables
            fwd, rev = self._fwd[edge.name], self._rev[edge.name]
            edge_set, journal = self._edge_set, self._journal
            for sources, dests in pairs:
                for u, v in _matching_pairs(sensor, sources, dests):
                    rec = (edge.name, u.key, v.key)
                    if rec in edge_set:
                        continue
                    edge_set.add(rec)
                    fwd[u.key].append(v.key)
                    rev[v.key].append(u.key)
                    if journal is not None:
                        journal.append(("edge", rec))
                    added += 1
        return added

    def _run_generating(self, edge, sensors, batch, depth) -> PopulationReport:
        report = PopulationReport()
        dest = edge.destination
        if depth + 1 > MAX_GENERATION_DEPTH:
            # only an error if something would actually be generated
            for u in batch:
                for sensor in sensors:
                    if _call_generator(sensor, u):
                        raise GenerationDepthExceeded(
                            f"generation deeper than {MAX_GENERATION_DEPTH} levels via {edge.name!r}")
            return report
        store = self._instances[dest.name]
        fresh = {}
        links = []
        for u in batch:
            for sensor in sensors:
                for rec_id, attrs in _call_generator(sensor, u):
                    rec_id = str(rec_id)
                    if rec_id not in store and rec_id not in fresh:
                        fresh[rec_id] = NodeInstance(dest, rec_id, attrs)
                    links.append((u.key, (dest.name, rec_id)))
        if fresh:
            sub = self._populate(dest, list(fresh.values()), depth + 1)
            report.generated += sub.added + sub.generated
            report.edges += sub.edges
        for src_key, dst_key in links:
            if self._add_edge(edge.name, src_key, dst_key):
                report.edges += 1
        return report

    def populate_join(self, node, predicate, left=None, right=None) -> PopulationReport:
        """Populate a composed node type with every satisfying (left, right) pair."""
        node = self.node_type(node)
        if not node.composed:
            raise TypeMismatch(f"{node.name!r} is not a composed node type")
        left = self.instances_of(node.left) if left is None else list(left)
        right = self.instances_of(node.right) if right is None else list(right)
        batch = [compose(node, l, r) for l in left for r in right if predicate(l, r)]
        return self.populate(node, batch)

    # ------------------------------------------------------------------ properties

    def property_value(self, instance: NodeInstance, prop):
        if isinstance(prop, str):
            prop = self.property(instance.type, prop)
        elif prop.owner != instance.type:
            raise OwnerMismatch(f"{prop} is not defined on {instance.type.name!r}")
        sensor = prop.sensor
        memo_key = (instance.key, prop.name)
        if not sensor.volatile:
            hit = self._memo.get(memo_key, _MISSING)
            if hit is not _MISSING:
                return hit
        try:
            value = sensor.fn(self, instance) if sensor.needs_graph else sensor.fn(instance)
        except (KeyError, AttributeError) as exc:
            raise SensorFailure(f"{sensor!r} failed on {instance!r}: missing {exc}") from None
        value = _coerce(value, prop.kind)
        if not sensor.volatile:
            self._memo[memo_key] = value
        return value

    def _register_derived(self, node, name, kind, sensor, ordered=False) -> PropertyType:
        node = self.node_type(node)
        if (node.name, name) in self.schema.properties or (node.name, name) in self._derived:
            raise DuplicateName(f"property {name!r} already exists on {node.name!r}")
        prop = PropertyType(node, name, kind, sensor, bool(ordered) and kind.is_list)
        self._derived[(node.name, name)] = prop
        return prop

    def define_property(self, node, name: str, kind: Kind, fn, ordered=False,
                        volatile=False, needs_graph=True) -> PropertyType:
        """Name a query-computed property on an already-populated graph.

        ``fn`` receives ``(graph, instance)`` unless ``needs_graph`` is False.
        """
        sensor = Sensor(f"defined:{name}", "property", fn, output=kind,
                        needs_graph=needs_graph, volatile=volatile)
        return self._register_derived(node, name, kind, sensor, ordered)

    def write_prediction(self, node, name: str, values: dict, kind: Optional[Kind] = None) -> PropertyType:
        """Store model outputs as a new queryable property of ``node``."""
        with self._lock:
            node = self.node_type(node)
            store = self._instances[node.name]
            missing = [i for i in values if str(i) not in store]
            if missing:
                raise UnknownInstance(f"no instance {missing[0]!r} of {node.name!r}")
            if (node.name, name) in self.schema.properties or (node.name, name) in self._derived:
                raise DuplicateName(f"property {name!r} already exists on {node.name!r}")
            table = {str(k): v for k, v in values.items()}
            if kind is None:
                kind = _infer_kind(list(table.values()))

            def read(instance, table=table):
                return table[instance.id]

            sensor = Sensor(f"prediction:{name}", "property", read, output=kind, volatile=True)
            return self._register_derived(node, name, kind, sensor)


_MISSING = object()


def _edge_name(edge):
    return edge if isinstance(edge, str) else edge.name


def _matching_pairs(sensor: Sensor, sources, dests):
    if sensor.key_pair is not None:
        a, b = sensor.key_pair
        index = defaultdict(list)
        for v in dests:
            if b in v.attributes:
                index[v.attributes[b]].append(v)
        for u in sources:
            if a in u.attributes:
                for v in index.get(u.attributes[a], ()):
                    yield u, v
        return
    for u in sources:
        for v in dests:
            if sensor.fn(u, v):
                yield u, v


def _call_generator(sensor, instance):
    try:
        return list(sensor.fn(instance))
    except (KeyError, AttributeError) as exc:
        raise SensorFailure(f"{sensor!r} failed on {instance!r}: missing {exc}") from None


def _coerce(value, kind: Kind):
    exact = EXACT_SCALAR.get(type(value))
    if exact is not None and not kind.is_list:
        if exact == kind.scalar:
            return value
        if exact == "int" and kind.scalar == "real":
            return float(value)
        raise KindMismatch(f"value {value!r} does not conform to {kind}")
    if not conforms(value, kind):
        raise KindMismatch(f"value {value!r} does not conform to {kind}")
    if kind == REAL and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind.is_list:
        if kind.scalar == "real":
            return [float(v) for v in value]
        return list(value)
    return value


def _infer_kind(values) -> Kind:
    kinds = set()
    is_list = False
    for v in values:
        if isinstance(v, (list, tuple)):
            is_list = True
            kinds.update(scalar_kind_of(x) for x in v)
        else:
            kinds.add(scalar_kind_of(v))
    if not kinds:
        return REAL
    if kinds <= {Kind("int"), REAL} and len(kinds) == 2:
        kinds = {REAL}
    if len(kinds) != 1:
        raise KindMismatch(f"mixed value kinds {sorted(map(str, kinds))}")
    (k,) = kinds
    return ListOf(k) if is_list else k
