"""Hard logical constraints over classifier outputs and joint prediction.

Constraint syntax (config files)::

    constraint  := implication
    implication := disjunction [ "==>" implication ]
    disjunction := conjunction { "or" conjunction }
    conjunction := unary { "and" unary }
    unary       := "not" unary | "(" constraint ")" | forall | atom
    forall      := "forall" IDENT "in" collection ":" constraint
    collection  := IDENT { stage }              -- stages applied to a bound variable
                 | query                        -- any query-language query
    atom        := IDENT "on" IDENT ( "is" | "isNot" ) STRING

Example::

    forall x in s ~> sentenceToPhrase :
        isPredicate on x is "True" ==> isArgument on x isNot "True"

Joint prediction maximizes the summed log-softmax scores of all decision
variables subject to every constraint.  Small problems are solved by
exhaustive (vectorized) enumeration; larger ones by seeded hill climbing
with restarts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import lang
from .engine import InstanceSet
from .errors import LearningError, UnboundVariable, UntrainedClassifier
from .graph import InstanceGraph, NodeInstance
from .schema import TEXT

EXACT_LIMIT = 2 ** 20
RESTARTS = 50


# ---------------------------------------------------------------------- expressions


@dataclass(frozen=True)
class Atom:
    classifier: str
    var: str
    label: str
    negated: bool = False


@dataclass(frozen=True)
class Not:
    body: object


@dataclass(frozen=True)
class And:
    parts: tuple


@dataclass(frozen=True)
class Or:
    parts: tuple


@dataclass(frozen=True)
class Implies:
    premise: object
    conclusion: object


@dataclass(frozen=True)
class ForAll:
    """``var`` ranges over ``collection``; when ``anchor`` is set the query's
    source is re-anchored at that bound variable's instance."""

    var: str
    collection: lang.QueryPlan
    body: object
    anchor: Optional[str] = None


def _collection(graph, expr: ForAll, env) -> list:
    plan = expr.collection
    if expr.anchor is not None:
        if expr.anchor not in env:
            raise UnboundVariable(f"variable {expr.anchor!r} is not bound")
        inst = env[expr.anchor]
        plan = lang.QueryPlan(lang.Source(inst.type.name, inst.id), plan.stages, plan.text)
    result = lang.evaluate(plan, graph)
    if not isinstance(result, InstanceSet):
        raise LearningError("forall needs a query returning instances")
    return list(result.members)


def evaluate_constraint(expr, assignment: dict, graph: InstanceGraph, env: dict) -> bool:
    """Truth of ``expr`` under ``assignment`` ((classifier, instance key) -> label).

    ``env`` binds variable names to instances (typically the scope variable).
    """
    if isinstance(expr, Atom):
        if expr.var not in env:
            raise UnboundVariable(f"variable {expr.var!r} is not bound")
        key = (expr.classifier, env[expr.var].key)
        if key not in assignment:
            raise UnboundVariable(f"no assignment for {expr.classifier} on {env[expr.var]!r}")
        hit = assignment[key] == expr.label
        return not hit if expr.negated else hit
    if isinstance(expr, Not):
        return not evaluate_constraint(expr.body, assignment, graph, env)
    if isinstance(expr, And):
        return all(evaluate_constraint(p, assignment, graph, env) for p in expr.parts)
    if isinstance(expr, Or):
        return any(evaluate_constraint(p, assignment, graph, env) for p in expr.parts)
    if isinstance(expr, Implies):
        return (not evaluate_constraint(expr.premise, assignment, graph, env)
                or evaluate_constraint(expr.conclusion, assignment, graph, env))
    if isinstance(expr, ForAll):
        for inst in _collection(graph, expr, env):
            if not evaluate_constraint(expr.body, assignment, graph, {**env, expr.var: inst}):
                return False
        return True
    raise LearningError(f"not a constraint expression: {expr!r}")


# ---------------------------------------------------------------------- grounding

# Grounded formulas are nested tuples over decision-variable indices:
#   ("atom", var, label_index_or_None, negated) | ("not", f) | ("and", fs)
#   | ("or", fs) | ("imp", f, g)
# label_index None means the label is outside the classifier's label set.


def ground(expr, graph, env, var_index: dict, label_index: Sequence[dict]):
    if isinstance(expr, Atom):
        if expr.var not in env:
            raise UnboundVariable(f"variable {expr.var!r} is not bound")
        key = (expr.classifier, env[expr.var].key)
        if key not in var_index:
            raise UnboundVariable(f"{expr.classifier} on {env[expr.var]!r} is not a decision variable")
        j = var_index[key]
        return ("atom", j, label_index[j].get(expr.label), expr.negated)
    if isinstance(expr, Not):
        return ("not", ground(expr.body, graph, env, var_index, label_index))
    if isinstance(expr, And):
        return ("and", tuple(ground(p, graph, env, var_index, label_index) for p in expr.parts))
    if isinstance(expr, Or):
        return ("or", tuple(ground(p, graph, env, var_index, label_index) for p in expr.parts))
    if isinstance(expr, Implies):
        return ("imp", ground(expr.premise, graph, env, var_index, label_index),
                ground(expr.conclusion, graph, env, var_index, label_index))
    if isinstance(expr, ForAll):
        return ("and", tuple(ground(expr.body, graph, {**env, expr.var: inst}, var_index, label_index)
                             for inst in _collection(graph, expr, env)))
    raise LearningError(f"not a constraint expression: {expr!r}")


def holds(f, labels) -> bool:
    """Evaluate a grounded formula on one assignment (sequence of label indices)."""
    op = f[0]
    if op == "atom":
        hit = f[2] is not None and labels[f[1]] == f[2]
        return hit != f[3]
    if op == "not":
        return not holds(f[1], labels)
    if op == "and":
        return all(holds(g, labels) for g in f[1])
    if op == "or":
        return any(holds(g, labels) for g in f[1])
    return (not holds(f[1], labels)) or holds(f[2], labels)


def holds_grid(f, grid: np.ndarray) -> np.ndarray:
    """Vectorized :func:`holds` over every row of ``grid``."""
    op = f[0]
    if op == "atom":
        if f[2] is None:
            hit = np.zeros(grid.shape[0], dtype=bool)
        else:
            hit = grid[:, f[1]] == f[2]
        return ~hit if f[3] else hit
    if op == "not":
        return ~holds_grid(f[1], grid)
    if op == "and":
        out = np.ones(grid.shape[0], dtype=bool)
        for g in f[1]:
            out &= holds_grid(g, grid)
        return out
    if op == "or":
        out = np.zeros(grid.shape[0], dtype=bool)
        for g in f[1]:
            out |= holds_grid(g, grid)
        return out
    return ~holds_grid(f[1], grid) | holds_grid(f[2], grid)


# ---------------------------------------------------------------------- solver


@dataclass
class Solution:
    labels: tuple  # label index per variable
    objective: float
    feasible: bool
    exact: bool


def log_softmax(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    m = s.max()
    return s - (m + np.log(np.exp(s - m).sum()))


def _objective(scores, labels) -> float:
    return float(sum(scores[j][l] for j, l in enumerate(labels)))


def _violations(formulas, labels) -> int:
    return sum(1 for f in formulas if not holds(f, labels))


def solve(scores: Sequence[np.ndarray], formulas: Sequence, seed: int = 0,
          exact_limit: int = EXACT_LIMIT, restarts: int = RESTARTS) -> Solution:
    """Maximize the summed per-variable scores subject to grounded formulas.

    ``scores[j][l]`` is the score of label ``l`` for variable ``j``.
    """
    sizes = [len(s) for s in scores]
    argmax = tuple(int(np.argmax(s)) for s in scores)
    if not sizes:
        ok = all(holds(f, ()) for f in formulas)
        return Solution((), 0.0, ok, True)
    total = 1
    for r in sizes:
        total *= r
    if total <= exact_limit:
        return _enumerate(scores, sizes, total, formulas, argmax)
    return _local_search(scores, sizes, formulas, argmax, seed, restarts)


def _enumerate(scores, sizes, total, formulas, argmax) -> Solution:
    rows = np.arange(total)
    grid = np.empty((total, len(sizes)), dtype=np.int16)
    stride = total
    for j, r in enumerate(sizes):
        stride //= r
        grid[:, j] = (rows // stride) % r
    feasible = np.ones(total, dtype=bool)
    for f in formulas:
        feasible &= holds_grid(f, grid)
    if not feasible.any():
        return Solution(argmax, _objective(scores, argmax), False, True)
    obj = np.zeros(total)
    for j, s in enumerate(scores):
        obj += np.asarray(s, dtype=float)[grid[:, j]]
    obj[~feasible] = -np.inf
    best = int(np.argmax(obj))
    labels = tuple(int(v) for v in grid[best])
    return Solution(labels, _objective(scores, labels), True, True)


def _local_search(scores, sizes, formulas, argmax, seed, restarts) -> Solution:
    rng = np.random.default_rng(seed)
    best = None
    best_obj = -np.inf
    for r in range(restarts):
        if r == 0:
            cur = list(argmax)
        else:
            cur = [int(rng.integers(k)) for k in sizes]
        cur_v = _violations(formulas, cur)
        cur_o = _objective(scores, cur)
        improved = True
        while improved:
            improved = False
            for j, k in enumerate(sizes):
                old = cur[j]
                for lab in range(k):
                    if lab == old:
                        continue
                    cur[j] = lab
                    v = _violations(formulas, cur)
                    o = cur_o - scores[j][old] + scores[j][lab]
                    if v < cur_v or (v == cur_v and o > cur_o + 1e-12):
                        cur_v, cur_o = v, o
                        improved = True
                        break
                    cur[j] = old
                if improved:
                    break
        if cur_v == 0 and cur_o > best_obj:
            best, best_obj = tuple(cur), cur_o
    if best is None:
        return Solution(argmax, _objective(scores, argmax), False, False)
    return Solution(best, _objective(scores, best), True, False)


# ---------------------------------------------------------------------- classifiers


@dataclass
class Assignment:
    labels: dict  # (classifier name, instance key) -> label
    feasible: bool
    objective: float
    exact: bool = True

    def __getitem__(self, key):
        return self.labels[key]


class ConstrainedClassifier:
    """Base classifiers plus constraints, solved jointly per scope instance.

    ``classifiers`` maps names to objects exposing ``labels`` and
    ``label_scores(graph, instance) -> {label: score}`` (e.g.
    :class:`~relgraph.learning.Learner`).  ``decision`` is a query rooted at
    the scope node type listing the instances to label.
    """

    def __init__(self, classifiers: dict, constraints: Sequence, scope: str, decision,
                 scope_var: str = "s", seed: int = 0, exact_limit: int = EXACT_LIMIT,
                 restarts: int = RESTARTS):
        self.classifiers = dict(classifiers)
        self.constraints = [parse_constraint(c) if isinstance(c, str) else c for c in constraints]
        for c in self.constraints:
            for name in _classifier_names(c):
                if name not in self.classifiers:
                    raise LearningError(f"constraint uses unregistered classifier {name!r}")
        self.scope = scope
        self.decision = lang.parse(decision) if isinstance(decision, str) else decision
        self.scope_var = scope_var
        self.seed = seed
        self.exact_limit = exact_limit
        self.restarts = restarts

    def decision_instances(self, graph, scope_instance: NodeInstance) -> list:
        result = lang.evaluate(self.decision, graph, root=scope_instance)
        if not isinstance(result, InstanceSet):
            raise LearningError("decision query must return instances")
        return list(result.members)

    def score_table(self, graph, scope_instance):
        variables, labels, scores = [], [], []
        members = self.decision_instances(graph, scope_instance)
        for name, clf in self.classifiers.items():
            labs = tuple(clf.labels)
            if not labs:
                raise UntrainedClassifier(f"classifier {name!r} has no labels")
            for inst in members:
                raw = clf.label_scores(graph, inst)
                variables.append((name, inst.key))
                labels.append(labs)
                scores.append(log_softmax([raw[l] for l in labs]))
        return variables, labels, scores


def _classifier_names(expr):
    if isinstance(expr, Atom):
        yield expr.classifier
    elif isinstance(expr, Not):
        yield from _classifier_names(expr.body)
    elif isinstance(expr, (And, Or)):
        for p in expr.parts:
            yield from _classifier_names(p)
    elif isinstance(expr, Implies):
        yield from _classifier_names(expr.premise)
        yield from _classifier_names(expr.conclusion)
    elif isinstance(expr, ForAll):
        yield from _classifier_names(expr.body)


def joint_predict(cc: ConstrainedClassifier, scope_instance: NodeInstance, graph: InstanceGraph) -> Assignment:
    variables, labels, scores = cc.score_table(graph, scope_instance)
    var_index = {v: j for j, v in enumerate(variables)}
    label_index = [{lab: k for k, lab in enumerate(labs)} for labs in labels]
    env = {cc.scope_var: scope_instance}
    formulas = [ground(c, graph, env, var_index, label_index) for c in cc.constraints]
    sol = solve(scores, formulas, cc.seed, cc.exact_limit, cc.restarts)
    chosen = {variables[j]: labels[j][l] for j, l in enumerate(sol.labels)}
    return Assignment(chosen, sol.feasible, sol.objective, sol.exact)


def bind_constrained_property(cc: ConstrainedClassifier, graph: InstanceGraph, classifier: str,
                              node, name: str):
    """Expose ``classifier``'s jointly inferred label as a property of ``node``.

    Values are recomputed on every access.
    """
    if classifier not in cc.classifiers:
        raise LearningError(f"unknown classifier {classifier!r}")

    def infer(g, inst):
        for scope_inst in g.instances_of(cc.scope):
            if any(m.key == inst.key for m in cc.decision_instances(g, scope_inst)):
                return joint_predict(cc, scope_inst, g).labels[(classifier, inst.key)]
        raise LearningError(f"{inst!r} is not decided in any {cc.scope!r} scope")

    return graph.define_property(node, name, TEXT, infer, volatile=True)


# ---------------------------------------------------------------------- parser


class _ConstraintParser(lang.Parser):
    KEYWORDS = ("forall", "in", "and", "or", "not", "on", "is", "isNot")

    def parse_constraint(self):
        expr = self.implication()
        return expr

    def implication(self):
        left = self.disjunction()
        if self.is_op("==>"):
            self.advance()
            return Implies(left, self.implication())
        return left

    def disjunction(self):
        parts = [self.conjunction()]
        while self.is_word("or"):
            self.advance()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conjunction(self):
        parts = [self.unary()]
        while self.is_word("and"):
            self.advance()
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def unary(self):
        if self.is_word("not"):
            self.advance()
            return Not(self.unary())
        if self.is_op("("):
            self.advance()
            inner = self.implication()
            self.expect_op(")")
            return inner
        if self.is_word("forall"):
            return self.forall()
        return self.atom()

    def forall(self):
        self.advance()
        var = self.expect_ident("variable name").value
        if not self.is_word("in"):
            self.error("expected 'in'", ["in"])
        self.advance()
        head = self.tok
        nxt = self.tokens[self.i + 1] if self.i + 1 < len(self.tokens) else head
        if head.kind == "IDENT" and not (nxt.kind == "OP" and nxt.value == "("):
            self.advance()
            stages = self.parse_stages()
            plan = lang.QueryPlan(lang.Source("", None, head.pos), stages, self.text)
            anchor = head.value
        else:
            source = self.parse_source()
            plan = lang.QueryPlan(source, self.parse_stages(), self.text)
            anchor = None
        self.expect_op(":")
        body = self.implication()
        return ForAll(var, plan, body, anchor)

    def atom(self):
        clf = self.expect_ident("classifier name").value
        if not self.is_word("on"):
            self.error("expected 'on'", ["on"])
        self.advance()
        var = self.expect_ident("variable name").value
        if self.is_word("is"):
            negated = False
        elif self.is_word("isNot"):
            negated = True
        else:
            self.error("expected 'is' or 'isNot'", ["is", "isNot"])
        self.advance()
        label = self.expect_string().value
        return Atom(clf, var, label, negated)


def parse_constraint(text: str):
    p = _ConstraintParser(text)
    expr = p.parse_constraint()
    if p.tok.kind != "EOF":
        p.error("unexpected trailing input", ["EOF"])
    return expr
