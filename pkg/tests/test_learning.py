import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import rows
from oracles import pearson_definition
from relgraph.errors import (
    DuplicateParameter,
    EmptyFamily,
    EmptyTestSet,
    EmptyTrainingSet,
    KindMismatch,
    LearningError,
    UntrainedClassifier,
)
from relgraph.graph import InstanceGraph
from relgraph.learning import (
    BIAS,
    FeatureVector,
    LearnableSpec,
    Learner,
    LearningExample,
    Lexicon,
    LinearModel,
    SgdConfig,
    build_examples,
    classification_report,
    encode,
    family_rank,
    family_test,
    family_train,
    make_family,
    pearson,
    regression_report,
    squared_loss,
    squared_loss_grad,
    test_continuous as eval_continuous,
    test_discrete as eval_discrete,
    train,
)
from relgraph.schema import BOOL, REAL, TEXT, ListOf, SchemaGraph
from relgraph.sensors import attr


def item_graph(records):
    s = SchemaGraph()
    s.declare_node("items")
    s.declare_property("items", "x", REAL, attr("x"))
    s.declare_property("items", "z", REAL, attr("z"))
    s.declare_property("items", "y", REAL, attr("y"))
    s.declare_property("items", "tag", TEXT, attr("tag"))
    s.declare_property("items", "flag", BOOL, attr("flag"))
    s.declare_property("items", "xs", ListOf(REAL), attr("xs"), ordered=True)
    s.declare_property("items", "bag", ListOf(REAL), attr("xs"))
    s.declare_property("items", "tags", ListOf(TEXT), attr("tags"))
    g = InstanceGraph(s.freeze())
    g.populate("items", rows(g, "items", records))
    return g.seal()


def _item(i, **kw):
    base = {"x": 0.0, "z": 0.0, "y": 0.0, "tag": "NN", "flag": False, "xs": [], "tags": []}
    base.update(kw)
    return (f"i{i}", base)


def named(fv, lex):
    return {lex.names[i]: v for i, v in fv.pairs}


# ---------------------------------------------------------------- encoding


def test_encoding_rules():
    g = item_graph([_item(0, x=2.5, tag="NN", flag=True, xs=[0.5, 1.2], tags=["A", "B", "A"])])
    spec = LearnableSpec("items", "items() prop y", [
        "items() prop x", "items() prop tag", "items() prop flag", "items() prop xs", "items() prop tags"])
    lex = Lexicon()
    fv = encode(g, g.get("items", "i0"), spec, lex)
    assert named(fv, lex) == {
        BIAS: 1.0, "items() prop x": 2.5, "items() prop tag=NN": 1.0, "items() prop flag": 1.0,
        "items() prop xs[0]": 0.5, "items() prop xs[1]": 1.2, "items() prop tags=A": 2.0,
        "items() prop tags=B": 1.0}
    assert lex.index(BIAS) == 0


def test_ordered_expression_list_example():
    g = item_graph([_item(0, xs=[0.5, 1.2])])
    lex = Lexicon()
    spec = LearnableSpec("items", "items() prop y", ["items() prop xs"], feature_names=["q"])
    assert named(encode(g, g.get("items", "i0"), spec, lex), lex) == {BIAS: 1.0, "q[0]": 0.5, "q[1]": 1.2}


def test_frozen_lexicon_drops_unseen():
    g = item_graph([_item(0, tag="NN"), _item(1, tag="XX")])
    spec = LearnableSpec("items", "items() prop y", ["items() prop tag"], feature_names=["posTag"])
    lex = Lexicon()
    encode(g, g.get("items", "i0"), spec, lex)
    lex.freeze()
    fv = encode(g, g.get("items", "i1"), spec, lex)
    assert named(fv, lex) == {BIAS: 1.0}
    assert len(lex) == 2


def test_unordered_numeric_list_rejected():
    g = item_graph([_item(0, xs=[1.0])])
    spec = LearnableSpec("items", "items() prop y", ["items() prop bag"])
    with pytest.raises(KindMismatch):
        encode(g, g.get("items", "i0"), spec, Lexicon())


def test_ragged_ordered_lists_are_sparse():
    g = item_graph([_item(0, xs=[1.0, 2.0, 3.0]), _item(1, xs=[4.0])])
    spec = LearnableSpec("items", "items() prop y", ["items() prop xs"], feature_names=["q"])
    lex = Lexicon()
    encode(g, g.get("items", "i0"), spec, lex)
    assert named(encode(g, g.get("items", "i1"), spec, lex), lex) == {BIAS: 1.0, "q[0]": 4.0}


def test_feature_vector_invariants():
    fv = FeatureVector.from_pairs([(3, 1.0), (1, 2.0), (3, 0.5)])
    assert fv.indices == (1, 3) and fv.values == (2.0, 1.5)
    with pytest.raises(KindMismatch):
        FeatureVector.from_pairs([(1, math.inf)])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from(["NN", "VB", "JJ", "DT"]), min_size=1, max_size=8))
def test_encoding_deterministic_and_subset_after_freeze(tags):
    g = item_graph([_item(i, tag=t, x=float(i)) for i, t in enumerate(tags)])
    spec = LearnableSpec("items", "items() prop y", ["items() prop tag", "items() prop x"])
    half = len(tags) // 2 or 1
    lex = Lexicon()
    train_idx = set()
    for inst in g.instances_of("items")[:half]:
        train_idx.update(encode(g, inst, spec, lex).indices)
    lex.freeze()
    for inst in g.instances_of("items"):
        a = encode(g, inst, spec, lex)
        assert a == encode(g, inst, spec, lex)
        assert set(a.indices) <= set(range(len(lex)))
        assert set(a.indices) <= train_idx | {0}


def test_label_kind_must_match_task():
    g = item_graph([_item(0)])
    with pytest.raises(KindMismatch):
        build_examples(g, LearnableSpec("items", "items() prop tag", []), Lexicon())
    with pytest.raises(KindMismatch):
        build_examples(g, LearnableSpec("items", "items() prop y", [], task="classification"), Lexicon())
    with pytest.raises(LearningError):
        LearnableSpec("items", "items() prop y", [], task="ranking")


# ---------------------------------------------------------------- examples


def test_default_filter_uses_all():
    g = item_graph([_item(i) for i in range(3)])
    assert len(build_examples(g, LearnableSpec("items", "items() prop y", []), Lexicon())) == 3


def test_filter_keeps_positives():
    g = item_graph([_item(i, flag=i % 3 == 0) for i in range(9)])
    spec = LearnableSpec("items", "items() prop flag", [], task="classification",
                         example_filter="items() filter(flag == true)")
    ex = build_examples(g, spec, Lexicon())
    assert [e.root.id for e in ex] == ["i0", "i3", "i6"]
    assert {e.label for e in ex} == {"True"}
    cb = LearnableSpec("items", "items() prop y", [], example_filter=lambda graph, r: r.id != "i0")
    assert len(build_examples(g, cb, Lexicon())) == 8


def test_missing_label_skipped():
    recs = [_item(i) for i in range(5)]
    del recs[2][1]["y"]
    g = item_graph(recs)
    ex = build_examples(g, LearnableSpec("items", "items() prop y", []), Lexicon())
    assert len(ex) == 4 and ex.skipped == 1


# ---------------------------------------------------------------- training


def _linear_examples(n, d, seed, coef_fn=None, noise=0.0):
    rnd = np.random.default_rng(seed)
    X = rnd.uniform(-1, 1, size=(n, d))
    w_true = rnd.uniform(-3, 3, size=d + 1) if coef_fn is None else coef_fn(d)
    y = w_true[0] + X @ w_true[1:] + noise * rnd.standard_normal(n)
    lex = Lexicon()
    for j in range(d):
        lex.index(f"f{j}")
    lex.freeze()
    ex = [LearningExample(None, FeatureVector.from_pairs([(0, 1.0)] + [(j + 1, X[i, j]) for j in range(d)]),
                          float(y[i])) for i in range(n)]
    return ex, lex, np.column_stack([np.ones(n), X]), y


def test_recovers_slope_three():
    rnd = random.Random(0)
    xs = [rnd.uniform(-1, 1) for _ in range(200)]
    lex = Lexicon()
    lex.index("x")
    lex.freeze()
    ex = [LearningExample(None, FeatureVector.from_pairs([(0, 1.0), (1, x)]), 3 * x) for x in xs]
    model = train(LearnableSpec("items", "items() prop y", []), ex, lex)
    assert abs(model.weights[1] - 3.0) <= 1e-2
    assert abs(model.weights[0]) <= 1e-2


def test_matches_closed_form_least_squares():
    ex, lex, A, y = _linear_examples(200, 10, seed=7)
    w_ls, *_ = np.linalg.lstsq(A, y, rcond=None)
    model = train(LearnableSpec("items", "items() prop y", []), ex, lex)
    assert np.max(np.abs(model.weights - w_ls)) <= 1e-2


def test_zero_epochs_gives_zero_model():
    ex, lex, _, _ = _linear_examples(20, 3, seed=1)
    spec = LearnableSpec("items", "items() prop y", [], sgd=SgdConfig(epochs=0))
    model = train(spec, ex, lex)
    assert not model.weights.any()
    assert all(model.predict_vector(e.features) == 0 for e in ex)


def test_training_is_deterministic():
    ex, lex, _, _ = _linear_examples(50, 4, seed=2, noise=0.3)
    spec = LearnableSpec("items", "items() prop y", [])
    a = train(spec, ex, lex).weights
    b = train(spec, ex, lex).weights
    assert a.tobytes() == b.tobytes()
    other = train(LearnableSpec("items", "items() prop y", [], sgd=SgdConfig(shuffle_seed=43, epochs=1)), ex, lex)
    assert other.weights.tobytes() != a.tobytes()


def test_empty_training_set():
    with pytest.raises(EmptyTrainingSet):
        train(LearnableSpec("items", "items() prop y", []), [], Lexicon())


def test_sgd_config_validation():
    with pytest.raises(ValueError):
        SgdConfig(learning_rate=0)
    with pytest.raises(ValueError):
        SgdConfig(epochs=-1)
    with pytest.raises(ValueError):
        SgdConfig(l2=-0.1)
    assert SgdConfig() == SgdConfig(0.01, 100, 0.0, 42)


def test_l2_shrinks_weights():
    ex, lex, _, _ = _linear_examples(100, 3, seed=3)
    plain = train(LearnableSpec("items", "items() prop y", []), ex, lex).weights
    reg = train(LearnableSpec("items", "items() prop y", [], sgd=SgdConfig(l2=0.5)), ex, lex).weights
    assert np.linalg.norm(reg) < np.linalg.norm(plain)


def test_sparse_path_matches_dense(monkeypatch):
    from relgraph import learning
    ex, lex, _, _ = _linear_examples(60, 5, seed=4, noise=0.1)
    spec = LearnableSpec("items", "items() prop y", [], sgd=SgdConfig(epochs=20))
    dense = train(spec, ex, lex).weights
    monkeypatch.setattr(learning, "DENSE_LIMIT", 0)
    sparse = train(spec, ex, lex).weights
    np.testing.assert_allclose(dense, sparse, rtol=1e-12, atol=1e-12)


def _finite_diff(w, x, y, l2, h=1e-6):
    out = np.zeros_like(w)
    for j in range(len(w)):
        e = np.zeros_like(w)
        e[j] = h
        out[j] = (squared_loss(w + e, x, y, l2) - squared_loss(w - e, x, y, l2)) / (2 * h)
    return out


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(seed):
    rnd = np.random.default_rng(seed)
    d = int(rnd.integers(1, 8))
    w, x = rnd.normal(size=d), rnd.normal(size=d)
    y, l2 = float(rnd.normal()), float(rnd.uniform(0, 0.1))
    g = squared_loss_grad(w, x, y, l2)
    fd = _finite_diff(w, x, y, l2)
    assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1e-3)


def test_sgd_step_is_the_stated_update():
    # one epoch over one example is exactly one update
    lex = Lexicon()
    lex.index("x")
    ex = [LearningExample(None, FeatureVector.from_pairs([(0, 1.0), (1, 2.0)]), 5.0)]
    spec = LearnableSpec("items", "items() prop y", [], sgd=SgdConfig(learning_rate=0.1, epochs=1, l2=0.5))
    w = train(spec, ex, lex).weights
    # w0 = 0: w <- (1 - eta*l2) w + eta (y - w.x) x
    np.testing.assert_allclose(w, [0.5, 1.0])


def test_classifier_learns_separable_labels():
    rnd = random.Random(5)
    lex = Lexicon()
    lex.index("x")
    lex.freeze()
    ex = []
    for _ in range(100):
        x = rnd.uniform(-1, 1)
        ex.append(LearningExample(None, FeatureVector.from_pairs([(0, 1.0), (1, x)]), "pos" if x > 0 else "neg"))
    spec = LearnableSpec("items", "items() prop tag", [], task="classification", sgd=SgdConfig(learning_rate=0.5))
    model = train(spec, ex, lex)
    assert model.labels == ("neg", "pos") and model.weights.shape == (2, 2)
    assert eval_discrete(model, ex).accuracy >= 0.95


# ---------------------------------------------------------------- prediction


def test_predict_dot_product():
    lex = Lexicon()
    lex.index("x")
    model = LinearModel("regression", np.array([1.0, 2.0]), lex)
    assert model.predict_vector(FeatureVector.from_pairs([(0, 1.0), (1, 3.0)])) == 7.0


def test_predict_tie_goes_to_smaller_label():
    lex = Lexicon()
    model = LinearModel("classification", np.array([[0.5], [0.5]]), lex, ("A", "B"))
    assert model.predict_vector(FeatureVector.from_pairs([(0, 1.0)])) == "A"
    with pytest.raises(UntrainedClassifier):
        LinearModel("classification", np.zeros((0, 1)), lex).predict_vector(FeatureVector.from_pairs([(0, 1.0)]))


def test_predict_write_back_query_identity():
    from relgraph.lang import query
    g = item_graph([_item(i, x=float(i), y=2.0 * i + 1) for i in range(10)])
    learner = Learner(LearnableSpec("items", "items() prop y", ["items() prop x"]))
    learner.learn(g)
    preds = {inst.id: learner.predict(inst, g) for inst in g.instances_of("items")}
    g.write_prediction("items", "yhat", preds)
    assert list(query(g, "items() prop yhat").values) == [preds[f"i{i}"] for i in range(10)]


def test_model_serialization_roundtrip():
    ex, lex, _, _ = _linear_examples(20, 2, seed=9)
    model = train(LearnableSpec("items", "items() prop y", [], sgd=SgdConfig(epochs=3)), ex, lex)
    back = LinearModel.from_dict(model.to_dict())
    assert back.weights.tobytes() == model.weights.tobytes()
    assert back.lexicon.names == lex.names


# ---------------------------------------------------------------- evaluation


def test_regression_report_cases():
    y = [1.0, 2.0, 4.0]
    r = regression_report(y, y)
    assert r.ssr == 0 and r.mse == 0 and r.pearson == 1.0
    assert regression_report(y, [10 - v for v in y]).pearson == -1.0
    flat = regression_report(y, [1.0, 1.0, 1.0])
    assert not flat.pearson_defined and "pearson: undefined" in flat.lines()
    with pytest.raises(EmptyTestSet):
        regression_report([], [])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metrics_agree_with_definitions(seed):
    rnd = random.Random(seed)
    n = rnd.randint(2, 60)
    y = [rnd.gauss(0, 1) for _ in range(n)]
    yhat = [rnd.gauss(0, 1) for _ in range(n)]
    rep = regression_report(y, yhat)
    ssr = sum((a - b) ** 2 for a, b in zip(y, yhat))
    assert abs(rep.ssr - ssr) <= 1e-9 * max(1.0, ssr)
    assert abs(rep.mse - ssr / n) <= 1e-9 * max(1.0, ssr / n)
    assert abs(rep.pearson - pearson_definition(y, yhat)) <= 1e-9
    assert abs(rep.pearson - float(np.corrcoef(y, yhat)[0, 1])) <= 1e-9


def test_pearson_undefined():
    r, ok = pearson([1.0, 1.0], [0.0, 2.0])
    assert not ok and math.isnan(r)


def test_classification_report_counts():
    assert classification_report(["a", "b"], ["a", "b"]).accuracy == 1.0
    assert classification_report(["a", "a", "b", "b"], ["a", "a", "b", "a"]).accuracy == 0.75
    rnd = random.Random(11)
    y = [rnd.choice("xyz") for _ in range(20)]
    yhat = [rnd.choice("xyz") for _ in range(20)]
    rep = classification_report(y, yhat)
    for lab in "xyz":
        tp = fp = fn = 0
        for a, b in zip(y, yhat):
            tp += a == lab and b == lab
            fp += a != lab and b == lab
            fn += a == lab and b != lab
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        assert rep.per_label[lab] == pytest.approx((p, r, f), abs=1e-12)
    # F1 is 0 when P + R is 0
    assert classification_report(["a"], ["b"]).per_label["a"] == (0.0, 0.0, 0.0)


def test_eval_empty_sets():
    model = LinearModel("regression", np.zeros(1), Lexicon())
    with pytest.raises(EmptyTestSet):
        eval_continuous(model, [])
    with pytest.raises(EmptyTestSet):
        eval_discrete(model, [])


# ---------------------------------------------------------------- families


def _family_graph():
    recs = []
    for i in range(40):
        x, z = math.sin(i), math.cos(3 * i)
        recs.append(_item(i, x=x, z=z, y=2 * x + 0.01 * z))
    return item_graph(recs)


def _template(p):
    return LearnableSpec("items", "items() prop y", [f"items() prop {p}"], name=p)


def test_family_ranking_and_best():
    g = _family_graph()
    fam = family_train(make_family(["z", "x"], _template), g)
    ranked = family_rank(family_test(fam, g))
    assert [lr[0].parameter for lr in ranked] == ["x", "z"]
    assert ranked[0][1].pearson > 0.99


def test_family_of_one_and_empty():
    g = _family_graph()
    fam = family_train(make_family(["z"], _template), g)
    assert family_rank(family_test(fam, g))[0][0] is fam[0]
    assert make_family([], _template) == []
    with pytest.raises(EmptyFamily):
        family_train([], g)
    with pytest.raises(EmptyFamily):
        family_rank([])
    with pytest.raises(DuplicateParameter):
        make_family(["x", "x"], _template)


def test_family_tie_goes_to_smaller_parameter():
    g = _family_graph()
    fam = family_train(make_family(["b", "a"], lambda p: _template("x")), g)
    ranked = family_rank(family_test(fam, g))
    assert ranked[0][1].pearson == ranked[1][1].pearson
    assert [lr[0].parameter for lr in ranked] == ["a", "b"]


def test_family_isolation():
    g = _family_graph()
    fam = make_family(["x", "z"], _template)
    family_train(fam, g)
    before = (fam[1].model.weights.copy(), list(fam[1].lexicon.names))
    fam[0].learn(g, g.instances_of("items")[:10])
    assert fam[1].model.weights.tobytes() == before[0].tobytes()
    assert fam[1].lexicon.names == before[1]
    assert fam[0].lexicon is not fam[1].lexicon


def test_untrained_learner():
    learner = Learner(_template("x"))
    with pytest.raises(UntrainedClassifier):
        learner.test(_family_graph())
    with pytest.raises(UntrainedClassifier):
        learner.labels
