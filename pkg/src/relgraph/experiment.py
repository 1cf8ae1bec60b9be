"""Planted-pathway recovery trial: generate, load, run the pathway family."""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .config import LearnerConfig
from .pipeline import run_family
from .synth import generate_synthetic_bio


@dataclass
class TrialResult:
    seed: int
    planted: str
    ranking: list  # (pathway, pearson) best first
    pearson: dict = field(default_factory=dict)

    @property
    def planted_first(self) -> bool:
        return self.ranking[0][0] == self.planted

    @property
    def planted_pearson(self) -> float:
        return self.pearson[self.planted]

    @property
    def median_other(self) -> float:
        return statistics.median(v for k, v in self.pearson.items() if k != self.planted)

    def passed(self, min_planted=0.9, max_median_other=0.3) -> bool:
        return (self.planted_first and self.planted_pearson >= min_planted
                and self.median_other <= max_median_other)


def planted_trial(seed: int, workdir, **generator_args) -> TrialResult:
    out = generate_synthetic_bio(Path(workdir) / f"seed{seed}", seed=seed, **generator_args)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    run = run_family(LearnerConfig.load(out / "drug_response.yaml"))
    ranking = [(learner.parameter, report.pearson) for learner, report in run.ranking]
    return TrialResult(seed, manifest["planted_pathway"], ranking, dict(ranking))
