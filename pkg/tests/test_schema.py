import pytest
from hypothesis import given, settings, strategies as st

from relgraph.errors import (
    DuplicateName,
    KindMismatch,
    ModeMismatch,
    SchemaFrozen,
    SignatureMismatch,
    UnknownNodeType,
)
from relgraph.schema import (
    BOOL,
    INT,
    REAL,
    TEXT,
    ListOf,
    NodeType,
    SchemaGraph,
    Sensor,
    conforms,
    generating_sensor,
    matching_sensor,
    parse_kind,
    property_sensor,
)
from relgraph.sensors import attr, key_eq, tokenize_ws


def test_declare_node():
    s = SchemaGraph()
    assert s.declare_node("genes") == NodeType("genes")
    with pytest.raises(DuplicateName):
        s.declare_node("genes")
    s.declare_node("patients")
    assert len(s.nodes) == 2


def test_declare_property_and_duplicates():
    s = SchemaGraph()
    s.declare_node("genes")
    s.declare_node("patientDrug")
    p = s.declare_property("patientDrug", "drugResponse", REAL, attr("response"))
    assert p.kind == REAL and p.owner.name == "patientDrug"
    kegg = s.declare_property("genes", "KEGG", ListOf(TEXT), attr("KEGG"))
    assert not kegg.ordered
    with pytest.raises(DuplicateName):
        s.declare_property("genes", "KEGG", ListOf(TEXT), attr("KEGG"))
    # the same name on another owner is fine
    s.declare_property("patientDrug", "KEGG", TEXT, attr("x"))


def test_property_sensor_kind_must_match():
    s = SchemaGraph()
    s.declare_node("a")
    with pytest.raises(KindMismatch):
        s.declare_property("a", "x", REAL, property_sensor("x", lambda i: 1, INT))
    with pytest.raises(ModeMismatch):
        s.declare_property("a", "x", REAL, key_eq("a", "b"))


def test_ordered_flag_only_for_lists():
    s = SchemaGraph()
    s.declare_node("a")
    assert s.declare_property("a", "xs", ListOf(REAL), attr("xs"), ordered=True).ordered
    assert not s.declare_property("a", "x", REAL, attr("x"), ordered=True).ordered


def test_declare_edge():
    s = SchemaGraph()
    s.declare_node("geneGene")
    s.declare_node("genes")
    e = s.declare_edge("geneGenes", "geneGene", "genes")
    assert (e.source.name, e.destination.name) == ("geneGene", "genes")
    with pytest.raises(UnknownNodeType):
        s.declare_edge("bad", "geneGene", "nowhere")
    with pytest.raises(DuplicateName):
        s.declare_edge("geneGenes", "geneGene", "genes")
    # two edge types may share endpoints
    s.declare_edge("geneGenes2", "geneGene", "genes")


def test_add_sensor_modes_and_signatures():
    s = SchemaGraph()
    for n in ("patients", "patientGene", "sentences", "tokens"):
        s.declare_node(n)
    e = s.declare_edge("patientToPatientGene", "patients", "patientGene")
    s.add_sensor(e, key_eq("pid", "pid"))
    assert e.sensors[0].mode == "matching"
    t = s.declare_edge("sentenceToToken", "sentences", "tokens")
    s.add_sensor(t, tokenize_ws("text"))
    assert t.sensors[0].mode == "generating"
    with pytest.raises(ModeMismatch):
        s.add_sensor(e, attr("age"))
    pinned = matching_sensor("m", lambda u, v: True, source="tokens")
    with pytest.raises(SignatureMismatch):
        s.add_sensor(e, pinned)
    gen = generating_sensor("g", lambda u: [], destination="patients")
    with pytest.raises(SignatureMismatch):
        s.add_sensor(t, gen)


def test_frozen_schema_rejects_declarations():
    s = SchemaGraph()
    s.declare_node("a")
    s.freeze()
    with pytest.raises(SchemaFrozen):
        s.declare_node("b")
    with pytest.raises(SchemaFrozen):
        s.declare_property("a", "x", INT, attr("x"))


def test_join_type_auto_name():
    s = SchemaGraph()
    s.declare_node("words")
    j = s.declare_join("words", "words")
    assert j.name == "words×words" and j.composed
    named = s.declare_join("words", "words", "wordPair")
    assert named.left.name == "words"


def test_kinds():
    assert parse_kind("list[text]") == ListOf(TEXT)
    assert parse_kind("float") == REAL
    with pytest.raises(KindMismatch):
        parse_kind("list[list[int]]")
    assert conforms(3, REAL) and not conforms(3.5, INT)
    assert not conforms(True, INT)
    assert conforms([1, 2.5], ListOf(REAL))
    assert not conforms(["a", 1], ListOf(TEXT))
    assert conforms(False, BOOL)


def _declarations():
    decls = [("node", "patients"), ("node", "genes"), ("node", "patientGene")]
    decls += [("prop", "patients", "age", INT), ("prop", "genes", "KEGG", ListOf(TEXT)),
              ("prop", "patientGene", "gExpression", REAL)]
    decls += [("edge", "pg", "patients", "patientGene"), ("edge", "gg", "patientGene", "genes")]
    return decls


def _build(decls):
    s = SchemaGraph()
    # nodes first, then the rest in the given order
    for d in decls:
        if d[0] == "node":
            s.declare_node(d[1])
    for d in decls:
        if d[0] == "prop":
            s.declare_property(d[1], d[2], d[3], attr(d[2]))
        elif d[0] == "edge":
            e = s.declare_edge(d[1], d[2], d[3])
            s.add_sensor(e, key_eq("id", "pid"))
            s.add_sensor(e, key_eq("id", "gid"))
    return s.freeze()


@settings(max_examples=30, deadline=None)
@given(st.randoms(use_true_random=False))
def test_declaration_order_irrelevant(rnd):
    decls = _declarations()
    shuffled = list(decls)
    rnd.shuffle(shuffled)
    assert _build(decls) == _build(shuffled)


def test_sensor_order_inside_edge_matters():
    a = SchemaGraph()
    b = SchemaGraph()
    for s, order in ((a, ("x", "y")), (b, ("y", "x"))):
        s.declare_node("n")
        e = s.declare_edge("e", "n", "n")
        for k in order:
            s.add_sensor(e, key_eq(k, k))
    assert a != b


def test_sensor_equality_by_signature():
    assert attr("x") == attr("x")
    assert attr("x") != attr("y")
    assert Sensor("f", "property", lambda i: 0) == Sensor("f", "property", lambda i: 1)
    with pytest.raises(ModeMismatch):
        Sensor("f", "bogus", lambda i: 0)


def test_edges_from_to_and_index():
    s = SchemaGraph()
    for n in "abc":
        s.declare_node(n)
    s.declare_edge("ab", "a", "b")
    s.declare_edge("bc", "b", "c")
    s.declare_edge("ac", "a", "c")
    assert [e.name for e in s.edges_from("a")] == ["ab", "ac"]
    assert [e.name for e in s.edges_to("c")] == ["bc", "ac"]
    assert s.edge_index("ac") == 2
