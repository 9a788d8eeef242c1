"""Score aggregation over the reasoning graph.

Each answer is scored per level by combining path scores and answer factors
(``gamma_g * path + gamma_ga * factor``) over all nodes at that level,
either marginalizing with LogSumExp (variable elimination over reasoning
paths) or taking the max (single best path).  Level 0 is the root alone
(path score 0).  Per-level scores are combined as a beta-weighted sum;
levels with no surviving nodes are skipped rather than contributing -inf,
so a fully pruned graph degenerates exactly to direct answer evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .graph import ROOT_ID, AnswerLeaf, ReasoningGraph

VARIABLE_ELIMINATION = "ve"
EXTREMUM = "max"
AGGREGATORS = (VARIABLE_ELIMINATION, EXTREMUM)


@dataclass(frozen=True)
class AggregationConfig:
    gamma_g: float = 1.0
    gamma_ga: float = 1.0
    betas: tuple[float, ...] = ()  # length L + 1; empty means all-ones
    aggregator: str = VARIABLE_ELIMINATION

    def __post_init__(self):
        if self.gamma_g < 0 or self.gamma_ga < 0:
            raise ValueError("gamma weights must be non-negative")
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"unknown aggregator {self.aggregator!r}")

    def betas_for(self, num_levels: int) -> tuple[float, ...]:
        """Beta weights for levels 0..L; validates the configured length."""
        if not self.betas:
            return (1.0,) * (num_levels + 1)
        if len(self.betas) != num_levels + 1:
            raise ValueError(
                f"need {num_levels + 1} beta weights for {num_levels} levels,"
                f" got {len(self.betas)}"
            )
        return self.betas


@dataclass
class AnswerScoreBreakdown:
    """Per-level and total scores for one answer leaf."""

    answer_id: str
    answer_text: str
    per_level: list[float] = field(default_factory=list)
    total: float = 0.0
    chosen: bool = False


def _weighted(weight: float, value: float) -> float:
    # 0 * -inf would be nan; a zero weight always means "contributes nothing"
    return 0.0 if weight == 0.0 else weight * value


def level_score(
    graph: ReasoningGraph, answer: AnswerLeaf, level: int, config: AggregationConfig
) -> float:
    """Aggregate path+factor terms for one answer at one level.

    Level 0 is the single root term (path score 0).  Returns -inf for a
    level with no surviving nodes; callers exclude such levels from the
    ensemble sum.
    """
    if level == 0:
        return _weighted(config.gamma_ga, graph.factors[(ROOT_ID, answer.id)])
    if not 1 <= level <= graph.num_levels:
        raise ValueError(f"level {level} out of range [0, {graph.num_levels}]")
    terms = [
        _weighted(config.gamma_g, node.path_score)
        + _weighted(config.gamma_ga, graph.factors[(node.id, answer.id)])
        for node in graph.levels[level - 1]
    ]
    if not terms:
        return float("-inf")
    if config.aggregator == EXTREMUM:
        return max(terms)
    return float(logsumexp(np.asarray(terms)))


def answer_scores(graph: ReasoningGraph, config: AggregationConfig) -> list[AnswerScoreBreakdown]:
    """Score every answer across all levels and mark the argmax as chosen.

    Ties go to the lowest answer index.  ``per_level`` keeps the raw level
    scores (-inf for structurally empty levels); ``total`` sums the
    beta-weighted scores of the populated levels only.
    """
    betas = config.betas_for(graph.num_levels)
    populated = [True] + [bool(level) for level in graph.levels]
    breakdowns = []
    for answer in graph.answers:
        per_level = [level_score(graph, answer, lvl, config) for lvl in range(graph.num_levels + 1)]
        total = 0.0
        for beta, score, keep in zip(betas, per_level, populated):
            if keep:
                total += _weighted(beta, score)
        breakdowns.append(
            AnswerScoreBreakdown(
                answer_id=answer.id, answer_text=answer.text, per_level=per_level, total=total
            )
        )
    if breakdowns:
        best = max(range(len(breakdowns)), key=lambda i: (breakdowns[i].total, -i))
        breakdowns[best].chosen = True
    return breakdowns


def threshold_decide(scores: dict[str, float], kappas: dict[str, float]) -> dict[str, bool]:
    """Per-label positive decisions: positive iff score >= threshold."""
    if set(scores) != set(kappas):
        missing = set(scores) ^ set(kappas)
        raise ValueError(f"score/threshold label mismatch: {sorted(missing)}")
    return {label: scores[label] >= kappas[label] for label in scores}
