"""Queries as features: example construction, sparse encoding, SGD-trained
linear models, evaluation, and parameterized learner families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from . import lang
from .engine import EdgePath, InstanceSet, ValueSequence
from .errors import (
    DuplicateParameter,
    EmptyFamily,
    EmptyTestSet,
    EmptyTrainingSet,
    KindMismatch,
    LearningError,
    RelGraphError,
    UntrainedClassifier,
)
from .graph import InstanceGraph, NodeInstance

BIAS = "<bias>"
# above this many features training switches from dense rows to sparse updates
DENSE_LIMIT = 4096


class Lexicon:
    """Feature name -> dense index.  Index 0 is the bias."""

    def __init__(self):
        self._index = {BIAS: 0}
        self.names = [BIAS]
        self.frozen = False

    def index(self, name: str) -> Optional[int]:
        i = self._index.get(name)
        if i is None and not self.frozen:
            i = len(self.names)
            self._index[name] = i
            self.names.append(name)
        return i

    def freeze(self) -> "Lexicon":
        self.frozen = True
        return self

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self._index

    def to_dict(self):
        return {"names": list(self.names), "frozen": self.frozen}

    @classmethod
    def from_dict(cls, d):
        lex = cls()
        lex.names = list(d["names"])
        lex._index = {n: i for i, n in enumerate(lex.names)}
        lex.frozen = bool(d.get("frozen", True))
        return lex


@dataclass(frozen=True)
class FeatureVector:
    """Sparse vector: strictly increasing indices with finite values."""

    indices: tuple = ()
    values: tuple = ()

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple]) -> "FeatureVector":
        acc: dict = {}
        for i, v in pairs:
            v = float(v)
            if not math.isfinite(v):
                raise KindMismatch(f"non-finite feature value {v!r}")
            acc[i] = acc.get(i, 0.0) + v
        idx = tuple(sorted(acc))
        return cls(idx, tuple(acc[i] for i in idx))

    @property
    def pairs(self):
        return list(zip(self.indices, self.values))

    def dot(self, w) -> float:
        return float(sum(w[i] * v for i, v in zip(self.indices, self.values) if i < len(w)))

    def dense(self, size: int) -> np.ndarray:
        x = np.zeros(size)
        for i, v in zip(self.indices, self.values):
            if i < size:
                x[i] = v
        return x

    def __len__(self):
        return len(self.indices)


@dataclass
class SgdConfig:
    learning_rate: float = 0.01
    epochs: int = 100
    l2: float = 0.0
    shuffle_seed: int = 42

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


@dataclass
class LearnableSpec:
    """Declaration of a learner rooted at one node type.

    ``label`` and ``features`` are query texts (or parsed plans) whose source
    is the root node type; they are pivoted at each example's root.
    ``example_filter`` is a query (kept when its pivoted result is non-empty
    or true) or a callable ``(graph, instance) -> bool``.
    """

    root: str
    label: Union[str, lang.QueryPlan]
    features: Sequence = ()
    task: str = "regression"
    example_filter: object = None
    sgd: SgdConfig = field(default_factory=SgdConfig)
    name: str = ""
    feature_names: Optional[Sequence[str]] = None

    def __post_init__(self):
        if self.task not in ("regression", "classification"):
            raise LearningError(f"unknown task {self.task!r}")
        self.label = _plan(self.label)
        self.features = [_plan(f) for f in self.features]
        if isinstance(self.example_filter, (str, lang.QueryPlan)):
            self.example_filter = _plan(self.example_filter)
        names = self.feature_names or [lang.to_text(f) for f in self.features]
        if len(names) != len(self.features):
            raise LearningError("one feature name per feature query")
        self.feature_names = list(names)


def _plan(q):
    return lang.parse(q) if isinstance(q, str) else q


@dataclass(frozen=True)
class LearningExample:
    root: NodeInstance
    features: FeatureVector
    label: object


@dataclass
class ExampleSet:
    examples: list
    skipped: int = 0

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)


# ---------------------------------------------------------------------- encoding


def _encode_scalar(name, v, out):
    if isinstance(v, bool):
        out.append((name, 1.0 if v else 0.0))
    elif isinstance(v, (int, float)):
        out.append((name, float(v)))
    elif isinstance(v, str):
        out.append((f"{name}={v}", 1.0))
    else:
        raise KindMismatch(f"cannot encode {v!r}")


def _encode_bag(name, values, out):
    for v in values:
        if isinstance(v, bool):
            out.append((f"{name}={'true' if v else 'false'}", 1.0))
        elif isinstance(v, str):
            out.append((f"{name}={v}", 1.0))
        else:
            raise KindMismatch(
                f"feature {name!r}: unordered numeric collection; declare the property ordered")


def _encode_list(name, values, ordered, out):
    if ordered:
        for i, v in enumerate(values):
            if isinstance(v, str):
                out.append((f"{name}[{i}]={v}", 1.0))
            else:
                _encode_scalar(f"{name}[{i}]", v, out)
    else:
        _encode_bag(name, values, out)


def feature_items(name: str, result, ordered: bool = False) -> list:
    """Named feature values produced by one query result."""
    out = []
    if isinstance(result, ValueSequence):
        vals = result.values
        if len(vals) == 1 and isinstance(vals[0], (list, tuple)):
            _encode_list(name, vals[0], ordered, out)
        elif len(vals) == 1:
            _encode_scalar(name, vals[0], out)
        elif any(isinstance(v, (list, tuple)) for v in vals):
            flat = [x for v in vals for x in (v if isinstance(v, (list, tuple)) else [v])]
            _encode_bag(name, flat, out)
        else:
            _encode_bag(name, vals, out)
    elif isinstance(result, InstanceSet):
        for m in result.members:
            out.append((f"{name}={m.id}", 1.0))
    elif isinstance(result, EdgePath):
        if result.found:
            out.append((name, float(len(result.steps))))
        else:
            out.append((f"{name}=NotFound", 1.0))
    elif isinstance(result, dict):
        out.append((name, float(len(result))))
    elif isinstance(result, (list, tuple)):
        _encode_list(name, result, ordered, out)
    else:
        _encode_scalar(name, result, out)
    return out


class Encoder:
    """Type-checks a spec's feature queries once and encodes roots."""

    def __init__(self, graph: InstanceGraph, spec: LearnableSpec):
        self.graph = graph
        self.spec = spec
        root = graph.node_type(spec.root)
        self.features = []
        for name, plan in zip(spec.feature_names, spec.features):
            typed = lang.typecheck(plan, graph)
            if plan.source.node != root.name:
                raise LearningError(f"feature {name!r} is not rooted at {root.name!r}")
            self.features.append((name, typed, typed.result.ordered))
        self.label = lang.typecheck(spec.label, graph)
        if spec.label.source.node != root.name:
            raise LearningError(f"label query is not rooted at {root.name!r}")
        kind = self.label.result.kind
        if kind is not None and kind.is_list:
            raise KindMismatch("label query must produce a scalar")
        if kind is not None:
            if spec.task == "regression" and not kind.numeric:
                raise KindMismatch(f"regression needs a numeric label, got {kind}")
            if spec.task == "classification" and kind.numeric:
                raise KindMismatch(f"classification needs a text or bool label, got {kind}")
        self.filter = spec.example_filter
        if isinstance(self.filter, lang.QueryPlan):
            self.filter = lang.typecheck(self.filter, graph)

    def encode(self, root: NodeInstance, lexicon: Lexicon) -> FeatureVector:
        pairs = [(0, 1.0)]
        for name, typed, ordered in self.features:
            result = lang.evaluate(typed, self.graph, root=root)
            for fname, v in feature_items(name, result, ordered):
                i = lexicon.index(fname)
                if i is not None:
                    pairs.append((i, v))
        return FeatureVector.from_pairs(pairs)

    def label_of(self, root: NodeInstance):
        result = lang.evaluate(self.label, self.graph, root=root)
        if isinstance(result, ValueSequence):
            if len(result.values) != 1:
                raise LearningError(f"label query gave {len(result.values)} values for {root!r}")
            result = result.values[0]
        if isinstance(result, (list, tuple, dict, InstanceSet, EdgePath)):
            raise KindMismatch(f"label for {root!r} is not a scalar")
        if self.spec.task == "classification":
            return _label_text(result)
        if isinstance(result, bool) or not isinstance(result, (int, float)):
            raise KindMismatch(f"regression label {result!r} is not numeric")
        return float(result)

    def keep(self, root: NodeInstance) -> bool:
        f = self.filter
        if f is None:
            return True
        if callable(f) and not isinstance(f, lang.TypedPlan):
            return bool(f(self.graph, root))
        result = lang.evaluate(f, self.graph, root=root)
        if isinstance(result, (InstanceSet, ValueSequence, dict)):
            return len(result) > 0
        if isinstance(result, EdgePath):
            return result.found
        return bool(result)


def _label_text(v) -> str:
    if isinstance(v, bool):
        return "True" if v else "False"
    return str(v)


def encode(graph: InstanceGraph, root: NodeInstance, spec: LearnableSpec, lexicon: Lexicon) -> FeatureVector:
    return Encoder(graph, spec).encode(root, lexicon)


def build_examples(graph: InstanceGraph, spec: LearnableSpec, lexicon: Lexicon,
                   roots: Optional[Iterable[NodeInstance]] = None) -> ExampleSet:
    """Examples for every root passing the filter; label failures are skipped."""
    enc = Encoder(graph, spec)
    roots = graph.instances_of(spec.root) if roots is None else list(roots)
    out = []
    skipped = 0
    for r in roots:
        if not enc.keep(r):
            continue
        try:
            y = enc.label_of(r)
        except RelGraphError:
            skipped += 1
            continue
        out.append(LearningExample(r, enc.encode(r, lexicon), y))
    return ExampleSet(out, skipped)


# ---------------------------------------------------------------------- models


def squared_loss(w, x, y, l2=0.0) -> float:
    """0.5 (y - w.x)^2 + 0.5 l2 |w|^2 on dense vectors."""
    r = y - float(np.dot(w, x))
    return 0.5 * r * r + 0.5 * l2 * float(np.dot(w, w))


def squared_loss_grad(w, x, y, l2=0.0) -> np.ndarray:
    r = y - float(np.dot(w, x))
    return -r * np.asarray(x, dtype=float) + l2 * np.asarray(w, dtype=float)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


@dataclass
class LinearModel:
    task: str
    weights: np.ndarray  # (d,) for regression, (labels, d) for classification
    lexicon: Lexicon
    labels: tuple = ()

    def scores(self, x: FeatureVector):
        if self.task == "regression":
            return x.dot(self.weights)
        return {lab: x.dot(self.weights[k]) for k, lab in enumerate(self.labels)}

    def predict_vector(self, x: FeatureVector):
        if self.task == "regression":
            return x.dot(self.weights)
        if not self.labels:
            raise UntrainedClassifier("classifier has no labels")
        s = [x.dot(self.weights[k]) for k in range(len(self.labels))]
        best = max(s)
        # labels are sorted, so the first maximum is the lexically smallest
        return self.labels[s.index(best)]

    def to_dict(self):
        return {"task": self.task, "weights": np.asarray(self.weights).tolist(),
                "labels": list(self.labels), "lexicon": self.lexicon.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["task"], np.asarray(d["weights"], dtype=float), Lexicon.from_dict(d["lexicon"]),
                   tuple(d.get("labels", ())))


def train(spec: LearnableSpec, examples, lexicon: Lexicon) -> LinearModel:
    """Constant-rate SGD; regression uses squared loss, classification one-vs-all logistic."""
    examples = list(examples)
    if not examples:
        raise EmptyTrainingSet("no training examples")
    cfg = spec.sgd
    d = len(lexicon)
    rng = np.random.default_rng(cfg.shuffle_seed)
    n = len(examples)
    dense = d <= DENSE_LIMIT
    if dense:
        rows = list(np.array([e.features.dense(d) for e in examples]))
    else:
        rows = [(np.array(e.features.indices, dtype=np.intp), np.array(e.features.values)) for e in examples]
    eta, lam = cfg.learning_rate, cfg.l2
    decay = 1.0 - eta * lam

    if spec.task == "regression":
        y = [float(e.label) for e in examples]
        w = np.zeros(d)
        step = np.empty(d)
        for _ in range(cfg.epochs):
            for i in rng.permutation(n).tolist():
                if dense:
                    x = rows[i]
                    err = y[i] - x.dot(w)
                    if lam:
                        w *= decay
                    np.multiply(x, eta * err, out=step)
                    w += step
                else:
                    idx, val = rows[i]
                    err = y[i] - val @ w[idx]
                    if lam:
                        w *= decay
                    w[idx] += (eta * err) * val
        return LinearModel("regression", w, lexicon)

    labels = tuple(sorted({str(e.label) for e in examples}))
    pos = {lab: k for k, lab in enumerate(labels)}
    targets = np.zeros((n, len(labels)))
    for i, e in enumerate(examples):
        targets[i, pos[str(e.label)]] = 1.0
    W = np.zeros((len(labels), d))
    for _ in range(cfg.epochs):
        for i in rng.permutation(n):
            if dense:
                x = rows[i]
                g = targets[i] - _sigmoid(W @ x)
                if lam:
                    W *= decay
                W += eta * np.outer(g, x)
            else:
                idx, val = rows[i]
                g = targets[i] - _sigmoid(W[:, idx] @ val)
                if lam:
                    W *= decay
                W[:, idx] += eta * np.outer(g, val)
    return LinearModel("classification", W, lexicon, labels)


# ---------------------------------------------------------------------- evaluation


@dataclass
class EvalReport:
    n: int
    ssr: Optional[float] = None
    mse: Optional[float] = None
    pearson: Optional[float] = None
    pearson_defined: bool = True
    accuracy: Optional[float] = None
    per_label: dict = field(default_factory=dict)  # label -> (precision, recall, f1)

    def lines(self) -> list[str]:
        out = [f"n: {self.n}"]
        if self.ssr is not None:
            out.append(f"ssr: {self.ssr:.6g}")
            out.append(f"mse: {self.mse:.6g}")
            out.append(f"pearson: {self.pearson:.6g}" if self.pearson_defined else "pearson: undefined")
        if self.accuracy is not None:
            out.append(f"accuracy: {self.accuracy:.6g}")
            for lab in sorted(self.per_label):
                p, r, f = self.per_label[lab]
                out.append(f"{lab}: precision={p:.6g} recall={r:.6g} f1={f:.6g}")
        return out


def pearson(a: Sequence[float], b: Sequence[float]) -> tuple[float, bool]:
    """Product-moment correlation; returns ``(nan, False)`` when a side is constant."""
    n = len(a)
    if n != len(b) or n == 0:
        raise ValueError("pearson needs two equal-length non-empty sequences")
    ma = math.fsum(a) / n
    mb = math.fsum(b) / n
    da = [x - ma for x in a]
    db = [x - mb for x in b]
    saa = math.fsum(x * x for x in da)
    sbb = math.fsum(x * x for x in db)
    if saa == 0.0 or sbb == 0.0:
        return float("nan"), False
    r = math.fsum(x * y for x, y in zip(da, db)) / math.sqrt(saa * sbb)
    return max(-1.0, min(1.0, r)), True


def regression_report(y: Sequence[float], yhat: Sequence[float]) -> EvalReport:
    n = len(y)
    if n == 0:
        raise EmptyTestSet("no test examples")
    ssr = math.fsum((a - b) ** 2 for a, b in zip(y, yhat))
    r, ok = pearson(list(y), list(yhat))
    return EvalReport(n, ssr, ssr / n, r, ok)


def classification_report(y: Sequence, yhat: Sequence) -> EvalReport:
    n = len(y)
    if n == 0:
        raise EmptyTestSet("no test examples")
    correct = sum(1 for a, b in zip(y, yhat) if a == b)
    per = {}
    for lab in sorted(set(y) | set(yhat)):
        tp = sum(1 for a, b in zip(y, yhat) if a == lab and b == lab)
        fp = sum(1 for a, b in zip(y, yhat) if a != lab and b == lab)
        fn = sum(1 for a, b in zip(y, yhat) if a == lab and b != lab)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        per[lab] = (p, r, f)
    return EvalReport(n, accuracy=correct / n, per_label=per)


def test_continuous(model: LinearModel, examples) -> EvalReport:
    examples = list(examples)
    if not examples:
        raise EmptyTestSet("no test examples")
    return regression_report([float(e.label) for e in examples],
                             [model.predict_vector(e.features) for e in examples])


def test_discrete(model: LinearModel, examples) -> EvalReport:
    examples = list(examples)
    if not examples:
        raise EmptyTestSet("no test examples")
    return classification_report([str(e.label) for e in examples],
                                 [model.predict_vector(e.features) for e in examples])


# keep pytest from collecting the two functions above
test_continuous.__test__ = False
test_discrete.__test__ = False


# ---------------------------------------------------------------------- learners


class Learner:
    """A spec bundled with its own lexicon and model."""

    def __init__(self, spec: LearnableSpec, parameter=None):
        self.spec = spec
        self.parameter = parameter
        self.lexicon = Lexicon()
        self.model: Optional[LinearModel] = None
        self._encoders = {}

    @property
    def name(self):
        return self.spec.name or f"{self.spec.root}-learner"

    def encoder(self, graph) -> Encoder:
        enc = self._encoders.get(id(graph))
        if enc is None or enc.graph is not graph:
            enc = Encoder(graph, self.spec)
            self._encoders = {id(graph): enc}
        return enc

    def examples(self, graph, roots=None) -> ExampleSet:
        return build_examples(graph, self.spec, self.lexicon, roots)

    def learn(self, graph, roots=None) -> LinearModel:
        self.lexicon = Lexicon()
        data = build_examples(graph, self.spec, self.lexicon, roots)
        self.lexicon.freeze()
        self.model = train(self.spec, data.examples, self.lexicon)
        return self.model

    def test(self, graph, roots=None) -> EvalReport:
        if self.model is None:
            raise UntrainedClassifier(f"{self.name} has not been trained")
        data = build_examples(graph, self.spec, self.model.lexicon, roots)
        if self.spec.task == "regression":
            return test_continuous(self.model, data.examples)
        return test_discrete(self.model, data.examples)

    def predict(self, root: NodeInstance, graph):
        if self.model is None:
            raise UntrainedClassifier(f"{self.name} has not been trained")
        return self.model.predict_vector(self.encoder(graph).encode(root, self.model.lexicon))

    @property
    def labels(self) -> tuple:
        if self.model is None:
            raise UntrainedClassifier(f"{self.name} has not been trained")
        return self.model.labels

    def label_scores(self, graph, root: NodeInstance) -> dict:
        if self.model is None:
            raise UntrainedClassifier(f"{self.name} has not been trained")
        if self.model.task != "classification":
            raise LearningError(f"{self.name} is not a classifier")
        return self.model.scores(self.encoder(graph).encode(root, self.model.lexicon))


def predict(model: LinearModel, root: NodeInstance, graph: InstanceGraph, spec: LearnableSpec):
    return model.predict_vector(Encoder(graph, spec).encode(root, model.lexicon))


def make_family(parameters: Sequence, template: Callable[[object], LearnableSpec]) -> list[Learner]:
    params = list(parameters)
    if len(set(params)) != len(params):
        raise DuplicateParameter("family parameters must be distinct")
    return [Learner(template(p), parameter=p) for p in params]


def family_train(family: Sequence[Learner], graph, roots=None) -> list[Learner]:
    if not family:
        raise EmptyFamily("empty learner family")
    roots = None if roots is None else list(roots)
    for learner in family:
        learner.learn(graph, roots)
    return list(family)


def family_test(family: Sequence[Learner], graph, roots=None) -> list[tuple]:
    if not family:
        raise EmptyFamily("empty learner family")
    roots = None if roots is None else list(roots)
    return [(learner, learner.test(graph, roots)) for learner in family]


def metric_value(report: EvalReport, metric: Optional[str] = None) -> float:
    if metric is None:
        metric = "pearson" if report.ssr is not None else "accuracy"
    if metric == "pearson" and not report.pearson_defined:
        return -math.inf
    v = getattr(report, metric)
    if v is None:
        raise LearningError(f"report has no {metric!r}")
    if metric in ("ssr", "mse"):
        return -v
    return v


def family_rank(results: Sequence[tuple], metric: Optional[str] = None) -> list[tuple]:
    """Sort ``(learner, report)`` pairs best-first; ties go to the smaller parameter."""
    if not results:
        raise EmptyFamily("empty learner family")
    return sorted(results, key=lambda lr: (-metric_value(lr[1], metric), str(lr[0].parameter)))
