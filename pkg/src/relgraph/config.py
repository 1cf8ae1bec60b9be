"""YAML schema and learner documents.

Schema document::

    nodes: [patients, genes, patientGene]
    joins:                       # optional composed node types
      - {name: wordPair, left: words, right: words, sensor: key_eq, args: [pos, pos]}
    sensors:                     # optional named sensor references
      byPid: {sensor: key_eq, args: [id, pid]}
    properties:
      - {node: genes, name: KEGG, kind: "list[text]", sensor: attr, args: [KEGG]}
    edges:
      - {name: patientToPatientGene, source: patients, destination: patientGene,
         sensors: [byPid]}
    columns:                     # optional explicit column kinds
      patientGene: {expression: real}

Column kinds default to the kind of the ``attr``/``const_list`` property that
reads them, else text.

Learner document: see :class:`LearnerConfig`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import lang
from .constraints import ConstrainedClassifier, parse_constraint
from .errors import DataError, RelGraphError, SchemaError
from .graph import InstanceGraph, PopulationReport
from .learning import LearnableSpec, SgdConfig
from .schema import SchemaGraph, parse_kind
from .sensors import SensorRegistry, builtin_sensors
from .tables import read_table, TableSource


# libyaml's loader when compiled in; same safe semantics
_LOADER = getattr(yaml, "CSafeLoader", yaml.SafeLoader)


def read_yaml(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read: {exc.strerror}", path) from None
    try:
        doc = yaml.load(text, Loader=_LOADER)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise DataError(f"invalid YAML: {getattr(exc, 'problem', exc)}", path,
                        mark.line + 1 if mark else None) from None
    if not isinstance(doc, dict):
        raise DataError("document must be a mapping", path)
    return doc


@dataclass
class SchemaDocument:
    schema: SchemaGraph
    column_kinds: dict  # node name -> {column: Kind}
    joins: list  # (node name, predicate sensor)


def _sensor_ref(ref, named: dict, registry: SensorRegistry, kind=None):
    if isinstance(ref, str):
        if ref in named:
            ref = named[ref]
        else:
            return registry.build(ref, (), kind)
    if not isinstance(ref, dict) or "sensor" not in ref:
        raise SchemaError(f"bad sensor reference {ref!r}")
    return registry.build(ref["sensor"], tuple(ref.get("args") or ()), kind)


def build_schema(doc: dict, registry: Optional[SensorRegistry] = None) -> SchemaDocument:
    registry = registry or builtin_sensors()
    schema = SchemaGraph()
    for entry in doc.get("nodes") or []:
        schema.declare_node(entry["name"] if isinstance(entry, dict) else entry)
    joins = []
    for j in doc.get("joins") or []:
        node = schema.declare_join(j["left"], j["right"], j.get("name"))
        joins.append((node.name, _sensor_ref(j, {}, registry) if "sensor" in j else None))
    named = doc.get("sensors") or {}
    columns: dict = {}
    for p in doc.get("properties") or []:
        kind = parse_kind(p["kind"])
        sensor = _sensor_ref(p if "sensor" in p else p.get("sensor_ref"), named, registry, kind)
        schema.declare_property(p["node"], p["name"], kind, sensor, bool(p.get("ordered", False)))
        if sensor.name in ("attr", "const_list") and sensor.args:
            columns.setdefault(p["node"], {})[sensor.args[0]] = kind
    for e in doc.get("edges") or []:
        edge = schema.declare_edge(e["name"], e["source"], e["destination"])
        for ref in e.get("sensors") or []:
            schema.add_sensor(edge, _sensor_ref(ref, named, registry))
    for node, cols in (doc.get("columns") or {}).items():
        schema.node(node)
        for col, kind in cols.items():
            columns.setdefault(node, {})[col] = parse_kind(kind)
    schema.freeze()
    return SchemaDocument(schema, columns, joins)


def load_schema(path, registry: Optional[SensorRegistry] = None) -> SchemaDocument:
    try:
        return build_schema(read_yaml(path), registry)
    except KeyError as exc:
        raise DataError(f"missing field {exc}", Path(path)) from None


def _table_for(data_dir: Path, node: str) -> Optional[Path]:
    for ext in (".csv", ".tsv"):
        p = data_dir / f"{node}{ext}"
        if p.exists():
            return p
    return None


def load_graph(schema_path, data_dir, registry: Optional[SensorRegistry] = None):
    """Build, populate and seal a graph: one table per node type."""
    doc = load_schema(schema_path, registry)
    schema = doc.schema
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError("data directory not found", data_dir)
    generated = {e.destination.name for e in schema.edges.values()
                 if any(s.mode == "generating" for s in e.sensors)}
    join_names = {name for name, _ in doc.joins}
    graph = InstanceGraph(schema)
    report = PopulationReport()
    for node in schema.nodes.values():
        if node.name in join_names:
            continue
        table = _table_for(data_dir, node.name)
        if table is None:
            if node.name in generated:
                continue
            raise DataError(f"no table for node type {node.name!r}", data_dir)
        rows = read_table(TableSource.for_file(table), node, doc.column_kinds.get(node.name))
        report += graph.populate(node, rows)
    for name, sensor in doc.joins:
        if sensor is None:
            raise SchemaError(f"join {name!r} needs a predicate sensor")
        report += graph.populate_join(name, sensor.fn)
    graph.seal()
    return graph, report


def _constraint_section(section, path) -> Optional[dict]:
    """Parse rule texts up front so syntax errors surface at load time."""
    if not section:
        return None
    if not isinstance(section, dict):
        raise DataError("'constraints' must be a mapping with scope, decision and rules", path)
    out = dict(section)
    out["rules"] = [parse_constraint(r) for r in section.get("rules") or []]
    out["decision"] = lang.parse(section["decision"])
    return out


@dataclass
class LearnerConfig:
    """Parsed learner document.

    Fields: ``schema``, ``data`` (paths relative to the document), ``model``
    (where train writes weights), ``seed``, ``learner`` (root, label,
    features, filter, task, sgd, name), ``split`` (``train_fraction`` +
    ``seed`` or explicit ``train_ids``/``test_ids``), ``properties``
    (query-defined properties to build after loading), and ``family``
    (``source`` query whose distinct values parameterize the learner;
    ``{param}`` in names and queries is substituted), and ``constraints``
    (``scope`` node, ``decision`` query, ``rules`` in constraint syntax,
    optional ``scope_var``).
    """

    path: Path
    schema: Path
    data: Path
    model: Path
    seed: int
    learner: dict
    split: dict = field(default_factory=dict)
    properties: list = field(default_factory=list)
    family: Optional[dict] = None
    constraints: Optional[dict] = None

    @classmethod
    def load(cls, path) -> "LearnerConfig":
        path = Path(path)
        doc = read_yaml(path)
        base = path.parent
        try:
            learner = doc["learner"]
            return cls(
                path=path,
                schema=base / doc["schema"],
                data=base / doc.get("data", "."),
                model=base / doc.get("model", f"{path.stem}.model.json"),
                seed=int(doc.get("seed", 42)),
                learner=learner,
                split=doc.get("split") or {},
                properties=doc.get("properties") or [],
                family=doc.get("family"),
                constraints=_constraint_section(doc.get("constraints"), path),
            )
        except KeyError as exc:
            raise DataError(f"missing field {exc}", path) from None

    def constrained(self, classifiers: dict):
        """A :class:`ConstrainedClassifier` over ``classifiers`` from the constraints section."""
        c = self.constraints
        if not c:
            raise RelGraphError(f"{self.path}: no 'constraints' section")
        return ConstrainedClassifier(classifiers, c["rules"], c["scope"], c["decision"],
                                     scope_var=c.get("scope_var", "s"), seed=int(c.get("seed", self.seed)))

    def spec(self, param=None) -> LearnableSpec:
        lc = self.learner

        def sub(v):
            if param is not None and isinstance(v, str):
                return v.replace("{param}", str(param))
            return v

        sgd = SgdConfig(**(lc.get("sgd") or {}))
        features = lc.get("features") or []
        names = None
        if features and isinstance(features[0], dict):
            names = [sub(f["name"]) for f in features]
            features = [f["query"] for f in features]
        return LearnableSpec(
            root=lc["root"],
            label=sub(lc["label"]),
            features=[sub(f) for f in features],
            task=lc.get("task", "regression"),
            example_filter=sub(lc.get("filter")),
            sgd=sgd,
            name=sub(lc.get("name", "")),
            feature_names=names,
        )

    def split_roots(self, graph):
        """Deterministic (train, test) root lists."""
        root = self.learner["root"]
        instances = graph.instances_of(root)
        if "train_ids" in self.split or "test_ids" in self.split:
            train = [graph.get(root, i) for i in self.split.get("train_ids", [])]
            test = [graph.get(root, i) for i in self.split.get("test_ids", [])]
            return train, test
        frac = float(self.split.get("train_fraction", 0.7))
        if not 0.0 < frac <= 1.0:
            raise RelGraphError("train_fraction must be in (0, 1]")
        rng = np.random.default_rng(int(self.split.get("seed", self.seed)))
        order = rng.permutation(len(instances))
        cut = int(round(frac * len(instances)))
        train = [instances[i] for i in sorted(order[:cut])]
        test = [instances[i] for i in sorted(order[cut:])]
        if frac == 1.0:
            test = list(train)
        return train, test
