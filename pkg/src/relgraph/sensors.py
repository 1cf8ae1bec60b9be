"""Built-in sensors and query-defined property builders."""

from __future__ import annotations

import weakref
from typing import Callable, Optional

from . import engine, lang
from .errors import LearningError, ModeMismatch, RelGraphError, SchemaError
from .schema import REAL, Kind, ListOf, Sensor


def attr(name: str, kind: Optional[Kind] = None) -> Sensor:
    """Property sensor returning one attribute verbatim."""

    def read(inst):
        return inst.attributes[name]

    return Sensor("attr", "property", read, output=kind, args=(name,))


def const_list(name: str, kind: Optional[Kind] = None) -> Sensor:
    """List property: the attribute as a list (scalars are wrapped, text split on ';')."""

    def read(inst):
        v = inst.attributes[name]
        if isinstance(v, (list, tuple)):
            return list(v)
        if isinstance(v, str):
            return [p for p in v.split(";") if p] if v else []
        return [v]

    return Sensor("const_list", "property", read, output=kind, args=(name,))


def key_eq(source_attr: str, destination_attr: str) -> Sensor:
    """Matching sensor: edge when the two attributes are equal."""

    def match(u, v):
        if source_attr not in u.attributes or destination_attr not in v.attributes:
            return False
        return u.attributes[source_attr] == v.attributes[destination_attr]

    return Sensor("key_eq", "matching", match, args=(source_attr, destination_attr),
                  key_pair=(source_attr, destination_attr))


def tokenize_ws(text_attr: str) -> Sensor:
    """Generating sensor: one token per whitespace-separated word.

    Token ids are scoped by the source id (``<source>.tok<i>``).
    """

    def generate(inst):
        words = str(inst.attributes[text_attr]).split()
        return [(f"{inst.id}.tok{i}", {"text": w, "position": i}) for i, w in enumerate(words)]

    return Sensor("tokenize_ws", "generating", generate, args=(text_attr,))


class SensorRegistry:
    """Name -> sensor factory.  Factories take positional args and ``kind``."""

    def __init__(self):
        self._factories: dict[str, Callable] = {}

    def register(self, name: str, factory: Callable) -> None:
        self._factories[name] = factory

    def __contains__(self, name):
        return name in self._factories

    def names(self):
        return sorted(self._factories)

    def build(self, name: str, args=(), kind: Optional[Kind] = None) -> Sensor:
        try:
            factory = self._factories[name]
        except KeyError:
            raise SchemaError(f"unknown sensor {name!r}") from None
        sensor = factory(*args, kind=kind) if kind is not None else factory(*args)
        if not isinstance(sensor, Sensor):
            raise ModeMismatch(f"factory {name!r} did not produce a sensor")
        return sensor


def builtin_sensors() -> SensorRegistry:
    reg = SensorRegistry()
    reg.register("attr", attr)
    reg.register("const_list", const_list)
    reg.register("key_eq", lambda a, b, kind=None: key_eq(a, b))
    reg.register("tokenize_ws", lambda a, kind=None: tokenize_ws(a))
    return reg


# ---------------------------------------------------------------------- query-defined properties


# graph -> {(rows text, row_key, row_value): (version, {root key: {key: value}})}
_ROW_TABLES: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _row_table(graph, plan, row_key, row_value, inst) -> dict:
    per_graph = _ROW_TABLES.setdefault(graph, {})
    slot = (str(plan.plan), row_key, row_value)
    cached = per_graph.get(slot)
    if cached is None or cached[0] != graph._version:
        cached = per_graph[slot] = (graph._version, {})
    table = cached[1].get(inst.key)
    if table is None:
        table = {}
        key_prop, value_prop = row_key, row_value
        if plan.result.node is not None:
            key_prop = graph.property(plan.result.node, row_key)
            value_prop = graph.property(plan.result.node, row_value)
        value_of = graph.property_value
        for r in lang.evaluate(plan, graph, root=inst).members:
            table.setdefault(value_of(r, key_prop), value_of(r, value_prop))
        cached[1][inst.key] = table
    return table


def grouped_values(graph, node, name: str, *, group_node: str, group_key: str, group_value: str,
                   group: str, rows: str, row_key: str, row_value: str):
    """Ordered real-valued list property built from a grouping plus a row query.

    Members are ``groupBy(group_key, group_value)[group]`` over all
    ``group_node`` instances.  For each root, ``rows`` (a query rooted at
    ``node``) yields row instances; the value is ``row_value`` of the row whose
    ``row_key`` equals each member, in member order (absent members skipped).
    """
    groups = engine.group_by(graph, engine.all_of(graph, group_node), group_key, group_value)
    members = list(groups.get(group, []))
    plan = lang.typecheck(lang.parse(rows), graph)
    if plan.plan.source.node != graph.node_type(node).name:
        raise LearningError(f"rows query must be rooted at {node!r}")
    if plan.result.shape != "instances":
        raise LearningError("rows query must return instances")

    def compute(g, inst):
        # the row table is shared by every property built from the same rows query
        table = _row_table(g, plan, row_key, row_value, inst)
        return [table[m] for m in members if m in table]

    return graph.define_property(node, name, ListOf(REAL), compute, ordered=True)


PROPERTY_BUILDERS = {"grouped_values": grouped_values}


def build_property(graph, spec: dict, substitutions: Optional[dict] = None):
    """Register a query-defined property described by a config mapping."""
    subs = substitutions or {}

    def sub(v):
        if isinstance(v, str):
            for k, val in subs.items():
                v = v.replace("{" + k + "}", str(val))
        return v

    try:
        builder = PROPERTY_BUILDERS[spec["builder"]]
    except KeyError:
        raise RelGraphError(f"unknown property builder {spec.get('builder')!r}") from None
    args = {k: sub(v) for k, v in (spec.get("args") or {}).items()}
    return builder(graph, sub(spec["node"]), sub(spec["name"]), **args)
