import pytest

from relgraph.graph import InstanceGraph, NodeInstance
from relgraph.schema import INT, REAL, TEXT, ListOf, SchemaGraph, property_sensor
from relgraph.sensors import attr, key_eq, tokenize_ws


def rows(graph, node, records):
    """NodeInstances for ``node`` from (id, attrs) pairs; attrs also get ``id``."""
    t = graph.node_type(node)
    return [NodeInstance(t, i, {"id": i, **a}) for i, a in records]


def bio_schema():
    s = SchemaGraph()
    for n in ("patients", "genes", "geneGene", "patientGene", "patientDrug"):
        s.declare_node(n)
    s.declare_property("patients", "age", INT, attr("age"))
    s.declare_property("genes", "GeneName", TEXT, attr("id"))
    s.declare_property("genes", "KEGG", ListOf(TEXT), attr("KEGG"))
    s.declare_property("geneGene", "PPIBioGrid", INT, attr("PPIBioGrid"))
    s.declare_property("patientGene", "pid", TEXT, attr("pid"))
    s.declare_property("patientGene", "gid", TEXT, attr("gid"))
    s.declare_property("patientGene", "gExpression", REAL, attr("expression"))
    s.declare_property("patientDrug", "pid", TEXT, attr("pid"))
    s.declare_property("patientDrug", "drugResponse", REAL, attr("response"))
    s.add_sensor(s.declare_edge("geneGenes", "geneGene", "genes"), key_eq("g1", "id"))
    s.add_sensor("geneGenes", key_eq("g2", "id"))
    s.add_sensor(s.declare_edge("patientToPatientGene", "patients", "patientGene"), key_eq("id", "pid"))
    s.add_sensor(s.declare_edge("patientGeneToGene", "patientGene", "genes"), key_eq("gid", "id"))
    s.add_sensor(s.declare_edge("patientToPatientDrug", "patients", "patientDrug"), key_eq("id", "pid"))
    return s.freeze()


@pytest.fixture
def bio():
    """3 patients, 3 genes (g1 in A,B; g2 in B; g3 in C), a full expression table."""
    g = InstanceGraph(bio_schema())
    g.populate("patients", rows(g, "patients", [("p1", {"age": 40}), ("p2", {"age": 55}), ("p3", {"age": 61})]))
    g.populate("genes", rows(g, "genes", [("g1", {"KEGG": ["A", "B"]}), ("g2", {"KEGG": ["B"]}),
                                          ("g3", {"KEGG": ["C"]})]))
    g.populate("geneGene", rows(g, "geneGene", [("gg1", {"g1": "g1", "g2": "g2", "PPIBioGrid": 1}),
                                                ("gg2", {"g1": "g2", "g2": "g3", "PPIBioGrid": 0})]))
    expr = {("p1", "g1"): 0.5, ("p1", "g2"): 1.2, ("p1", "g3"): -0.3,
            ("p2", "g1"): 0.1, ("p2", "g2"): 0.0, ("p2", "g3"): 2.0,
            ("p3", "g1"): -1.0, ("p3", "g2"): 0.7, ("p3", "g3"): 0.2}
    g.populate("patientGene", rows(g, "patientGene", [
        (f"{p}_{q}", {"pid": p, "gid": q, "expression": v}) for (p, q), v in expr.items()]))
    g.populate("patientDrug", rows(g, "patientDrug", [
        ("p1_d", {"pid": "p1", "response": 0.7}), ("p2_d", {"pid": "p2", "response": 0.1}),
        ("p3_d", {"pid": "p3", "response": -0.4})]))
    return g.seal()


def text_schema():
    s = SchemaGraph()
    for n in ("sentences", "tokens", "phrases", "relations"):
        s.declare_node(n)
    s.declare_property("sentences", "text", TEXT, attr("text"))
    s.declare_property("tokens", "word", TEXT, attr("text"))
    s.declare_property("tokens", "position", INT, attr("position"))
    s.declare_property("phrases", "posTag", TEXT, attr("posTag"))
    s.declare_property("phrases", "sid", TEXT, attr("sid"))
    s.declare_property("phrases", "length", INT,
                       property_sensor("length", lambda i: len(i.attributes["text"].split()), INT))
    s.add_sensor(s.declare_edge("sentenceToToken", "sentences", "tokens"), tokenize_ws("text"))
    s.add_sensor(s.declare_edge("sentenceToPhrase", "sentences", "phrases"), key_eq("id", "sid"))
    s.add_sensor(s.declare_edge("phraseToRelation", "phrases", "relations"), key_eq("rel", "id"))
    return s.freeze()


@pytest.fixture
def text():
    g = InstanceGraph(text_schema())
    g.populate("relations", rows(g, "relations", [("r1", {}), ("r2", {})]))
    g.populate("sentences", rows(g, "sentences", [("s1", {"text": "John ate an apple"}),
                                                  ("s2", {"text": "it rained"})]))
    g.populate("phrases", rows(g, "phrases", [
        ("x", {"text": "John", "posTag": "NN", "sid": "s1", "rel": "r1"}),
        ("y", {"text": "ate", "posTag": "VB", "sid": "s1", "rel": "r1"}),
        ("z", {"text": "an apple", "posTag": "NN", "sid": "s1", "rel": "r2"}),
        ("w", {"text": "it rained", "posTag": "VB", "sid": "s2", "rel": "r2"}),
    ]))
    return g.seal()


def chain_graph(names, edges):
    """One node type ``n`` and one edge type per distinct label in ``edges``.

    ``edges`` is a list of (label, src, dst); each edge gets a sensor that
    matches exactly the listed pairs.
    """
    s = SchemaGraph()
    s.declare_node("n")
    labels = []
    for lab, _, _ in edges:
        if lab not in labels:
            labels.append(lab)
    for lab in labels:
        pairs = {(a, b) for l, a, b in edges if l == lab}
        e = s.declare_edge(lab, "n", "n")
        s.add_sensor(e, key_pairs_sensor(lab, pairs))
    g = InstanceGraph(s.freeze())
    g.populate("n", rows(g, "n", [(x, {}) for x in names]))
    return g.seal()


def key_pairs_sensor(name, pairs):
    from relgraph.schema import matching_sensor
    return matching_sensor(name, lambda u, v: (u.id, v.id) in pairs, args=(name,))


# ---------------------------------------------------------------- acceptance reporting

ACCEPTANCE = []  # (number, title, passed, detail)


class criterion:
    """Records one acceptance criterion's outcome, including failures by exception."""

    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        ok = exc_type is None
        detail = self.detail if ok else (self.detail + "; " if self.detail else "") + f"{exc_type.__name__}: {exc}"
        ACCEPTANCE.append((self.number, self.title, ok, detail))
        print(f"criterion {self.number} {'PASS' if ok else 'FAIL'}: {self.title} [{detail}]")
        return False


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {title} [{detail}]")
