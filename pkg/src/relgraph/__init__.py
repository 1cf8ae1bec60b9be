"""Typed heterogeneous graphs with a query language, learners over query
features, and constrained joint inference."""

from .errors import RelGraphError
from .schema import BOOL, INT, REAL, TEXT, ListOf, Kind, SchemaGraph, Sensor
from .graph import InstanceGraph, NodeInstance, PopulationReport
from .lang import parse, query, typecheck, evaluate, to_text, format_result
from .learning import LearnableSpec, Learner, SgdConfig, Lexicon

__all__ = [
    "RelGraphError", "BOOL", "INT", "REAL", "TEXT", "ListOf", "Kind", "SchemaGraph", "Sensor",
    "InstanceGraph", "NodeInstance", "PopulationReport",
    "parse", "query", "typecheck", "evaluate", "to_text", "format_result",
    "LearnableSpec", "Learner", "SgdConfig", "Lexicon",
]
