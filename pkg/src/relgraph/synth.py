"""Seeded synthetic patient/gene/drug data with one planted signal pathway.

The drug response of each patient is a fixed linear function of the
expression of the planted pathway's genes plus Gaussian noise.  Besides the
tables the generator writes ``manifest.json`` (ground truth), ``schema.yaml``
and ``drug_response.yaml`` (a pathway-parameterized learner family).
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import yaml

from .errors import ParameterOutOfRange
from .tables import write_table

# probability that a gene belongs to 1, 2 or 3 pathways
MEMBERSHIP_P = (0.7, 0.2, 0.1)
DRUG = "drug0"


def pathway_name(i: int) -> str:
    return f"hsa{i:05d}"


def response_from(weights, expressions) -> float:
    """Noise-free response; exactly rounded so any summation order agrees."""
    return math.fsum(w * x for w, x in zip(weights, expressions))


SCHEMA = {
    "nodes": ["patients", "genes", "geneGene", "patientGene", "patientDrug"],
    "properties": [
        {"node": "patients", "name": "age", "kind": "int", "sensor": "attr", "args": ["age"]},
        {"node": "patients", "name": "cancer", "kind": "text", "sensor": "attr", "args": ["cancer"]},
        {"node": "genes", "name": "GeneName", "kind": "text", "sensor": "attr", "args": ["id"]},
        {"node": "genes", "name": "KEGG", "kind": "list[text]", "sensor": "attr", "args": ["KEGG"]},
        {"node": "geneGene", "name": "PPIBioGrid", "kind": "int", "sensor": "attr", "args": ["PPIBioGrid"]},
        {"node": "patientGene", "name": "pid", "kind": "text", "sensor": "attr", "args": ["pid"]},
        {"node": "patientGene", "name": "gid", "kind": "text", "sensor": "attr", "args": ["gid"]},
        {"node": "patientGene", "name": "gExpression", "kind": "real", "sensor": "attr",
         "args": ["expression"]},
        {"node": "patientDrug", "name": "pid", "kind": "text", "sensor": "attr", "args": ["pid"]},
        {"node": "patientDrug", "name": "drug", "kind": "text", "sensor": "attr", "args": ["drug"]},
        {"node": "patientDrug", "name": "drugResponse", "kind": "real", "sensor": "attr",
         "args": ["response"]},
    ],
    "edges": [
        {"name": "geneGenes", "source": "geneGene", "destination": "genes",
         "sensors": [{"sensor": "key_eq", "args": ["g1", "id"]},
                     {"sensor": "key_eq", "args": ["g2", "id"]}]},
        {"name": "patientToPatientGene", "source": "patients", "destination": "patientGene",
         "sensors": [{"sensor": "key_eq", "args": ["id", "pid"]}]},
        {"name": "patientGeneToGene", "source": "patientGene", "destination": "genes",
         "sensors": [{"sensor": "key_eq", "args": ["gid", "id"]}]},
        {"name": "patientToPatientDrug", "source": "patients", "destination": "patientDrug",
         "sensors": [{"sensor": "key_eq", "args": ["id", "pid"]}]},
    ],
}

LEARNER = {
    "schema": "schema.yaml",
    "data": ".",
    "model": "drug_response.model.json",
    "seed": 42,
    "split": {"train_fraction": 0.7, "seed": 42},
    "properties": [{
        "name": "PWgeneExpression_{param}",
        "node": "patientDrug",
        "builder": "grouped_values",
        "args": {
            "group_node": "genes", "group_key": "KEGG", "group_value": "GeneName", "group": "{param}",
            "rows": "patientDrug() ~> -patientToPatientDrug ~> patientToPatientGene",
            "row_key": "gid", "row_value": "gExpression",
        },
    }],
    "family": {"source": "genes() prop KEGG distinct"},
    "learner": {
        "name": "DrugResponseRegressor_{param}",
        "root": "patientDrug",
        "task": "regression",
        "label": "patientDrug() prop drugResponse",
        "features": ["patientDrug() prop PWgeneExpression_{param}"],
        "sgd": {"learning_rate": 0.01, "epochs": 100, "l2": 0.0, "shuffle_seed": 42},
    },
}


def generate_synthetic_bio(out_dir, seed: int = 7, n_patients: int = 50, n_genes: int = 200,
                           n_pathways: int = 10, planted_pathway: int = 0, noise_sd: float = 0.1,
                           n_gene_pairs: int = None) -> Path:
    if n_patients < 1 or n_genes < 1 or n_pathways < 1:
        raise ParameterOutOfRange("patients, genes and pathways must be positive")
    if not 0 <= planted_pathway < n_pathways:
        raise ParameterOutOfRange(f"planted_pathway must be in [0, {n_pathways})")
    if noise_sd < 0:
        raise ParameterOutOfRange("noise_sd must be non-negative")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    gene_ids = [f"g{i:04d}" for i in range(n_genes)]
    memberships = []
    for _ in range(n_genes):
        m = int(rng.choice([1, 2, 3], p=MEMBERSHIP_P))
        m = min(m, n_pathways)
        memberships.append(sorted(int(p) for p in rng.choice(n_pathways, size=m, replace=False)))
    # every pathway gets at least one gene
    for p in range(n_pathways):
        if not any(p in ms for ms in memberships):
            candidates = [g for g, ms in enumerate(memberships) if len(ms) < 3] or list(range(n_genes))
            g = candidates[int(rng.integers(len(candidates)))]
            memberships[g] = sorted(set(memberships[g]) | {p})
    planted_genes = [g for g in range(n_genes) if planted_pathway in memberships[g]]

    patient_ids = [f"p{i:03d}" for i in range(n_patients)]
    cancers = ["BRCA", "LUAD", "COAD"]
    ages = rng.integers(30, 80, size=n_patients)
    cancer_idx = rng.integers(len(cancers), size=n_patients)
    expr = rng.standard_normal((n_patients, n_genes))
    weights = [float(w) for w in rng.standard_normal(len(planted_genes))]
    noise = rng.normal(0.0, noise_sd, size=n_patients) if noise_sd > 0 else np.zeros(n_patients)

    n_pairs = n_gene_pairs if n_gene_pairs is not None else 2 * n_genes
    pairs = []
    seen = set()
    while len(pairs) < n_pairs and n_genes > 1 and len(seen) < n_genes * (n_genes - 1) // 2:
        a, b = sorted(int(x) for x in rng.choice(n_genes, size=2, replace=False))
        if (a, b) in seen:
            continue
        seen.add((a, b))
        pairs.append((a, b, int(rng.random() < 0.5)))

    write_table(out / "patients.csv", ["id", "age", "cancer"],
                [[pid, int(ages[i]), cancers[int(cancer_idx[i])]] for i, pid in enumerate(patient_ids)])
    write_table(out / "genes.csv", ["id", "KEGG"],
                [[gid, [pathway_name(p) for p in memberships[g]]] for g, gid in enumerate(gene_ids)])
    write_table(out / "geneGene.csv", ["id", "g1", "g2", "PPIBioGrid"],
                [[f"gg{k:05d}", gene_ids[a], gene_ids[b], flag] for k, (a, b, flag) in enumerate(pairs)])
    pg_rows = []
    for i, pid in enumerate(patient_ids):
        for g, gid in enumerate(gene_ids):
            pg_rows.append([f"{pid}_{gid}", pid, gid, float(expr[i, g])])
    write_table(out / "patientGene.csv", ["id", "pid", "gid", "expression"], pg_rows)
    pd_rows = []
    for i, pid in enumerate(patient_ids):
        y = response_from(weights, [float(expr[i, g]) for g in planted_genes]) + float(noise[i])
        pd_rows.append([f"{pid}_{DRUG}", pid, DRUG, y])
    write_table(out / "patientDrug.csv", ["id", "pid", "drug", "response"], pd_rows)

    manifest = {
        "seed": seed,
        "n_patients": n_patients,
        "n_genes": n_genes,
        "n_pathways": n_pathways,
        "noise_sd": noise_sd,
        "planted_pathway": pathway_name(planted_pathway),
        "planted_genes": [gene_ids[g] for g in planted_genes],
        "weights": weights,
        "drug": DRUG,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    (out / "schema.yaml").write_text(yaml.safe_dump(SCHEMA, sort_keys=False), encoding="utf-8")
    (out / "drug_response.yaml").write_text(yaml.safe_dump(LEARNER, sort_keys=False), encoding="utf-8")
    return out
