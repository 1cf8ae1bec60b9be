"""Glue between learner documents, the graph, and the learners."""

from __future__ import annotations

import json
from dataclasses import dataclass

from . import lang
from .config import LearnerConfig, load_graph
from .engine import InstanceSet, ValueSequence
from .errors import RelGraphError
from .learning import (
    EvalReport,
    Learner,
    LinearModel,
    family_rank,
    family_test,
    family_train,
    make_family,
    test_continuous,
    test_discrete,
    build_examples,
)
from .sensors import build_property


def family_parameters(graph, source: str) -> list:
    """Distinct values of the family source query, in first-encounter order."""
    result = lang.query(graph, source)
    if isinstance(result, ValueSequence):
        values = result.values
    elif isinstance(result, InstanceSet):
        values = result.ids
    else:
        raise RelGraphError("family source must produce values or instances")
    out = []
    seen = set()
    for v in values:
        for x in (v if isinstance(v, (list, tuple)) else [v]):
            if x not in seen:
                seen.add(x)
                out.append(x)
    return out


def prepare(cfg: LearnerConfig, graph=None, params=(None,)):
    if graph is None:
        graph, _ = load_graph(cfg.schema, cfg.data)
    for p in params:
        for prop in cfg.properties:
            subs = {"param": p} if p is not None else {}
            build_property(graph, prop, subs)
    return graph


@dataclass
class FamilyRun:
    ranking: list  # (learner, report), best first
    params: list

    @property
    def best(self) -> Learner:
        return self.ranking[0][0]


def run_family(cfg: LearnerConfig, graph=None, metric=None) -> FamilyRun:
    if graph is None:
        graph, _ = load_graph(cfg.schema, cfg.data)
    if not cfg.family:
        raise RelGraphError("learner document has no 'family' section")
    params = family_parameters(graph, cfg.family["source"])
    prepare(cfg, graph, params)
    family = make_family(params, cfg.spec)
    train, test = cfg.split_roots(graph)
    family_train(family, graph, train)
    ranking = family_rank(family_test(family, graph, test), metric)
    return FamilyRun(ranking, params)


def train_config(cfg: LearnerConfig, graph=None) -> tuple:
    graph = prepare(cfg, graph)
    learner = Learner(cfg.spec())
    train, _ = cfg.split_roots(graph)
    model = learner.learn(graph, train)
    cfg.model.write_text(json.dumps(model.to_dict()) + "\n", encoding="utf-8")
    return learner, model


def test_config(cfg: LearnerConfig, graph=None) -> EvalReport:
    graph = prepare(cfg, graph)
    spec = cfg.spec()
    try:
        model = LinearModel.from_dict(json.loads(cfg.model.read_text(encoding="utf-8")))
    except OSError:
        raise RelGraphError(f"no trained model at {cfg.model}; run 'train' first") from None
    _, test = cfg.split_roots(graph)
    data = build_examples(graph, spec, model.lexicon, test)
    if spec.task == "regression":
        return test_continuous(model, data.examples)
    return test_discrete(model, data.examples)


test_config.__test__ = False
