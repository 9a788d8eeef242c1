"""End-to-end engine: build a graph, score its factors, aggregate answers.

Graphs for distinct examples are independent; evaluation can therefore fan
out across a worker pool, with per-example decode seeds derived from the
base seed and the example index so results do not depend on worker count
or completion order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .aggregate import AggregationConfig, AnswerScoreBreakdown, answer_scores
from .datasets import NameAnonymizer, SocialIQAExample, StoryExample
from .decoding import DecodeStrategy
from .graph import (
    ReasoningGraph,
    STORY_RELATIONS,
    TASK_SOCIALIQA,
    TASK_STORYCS,
    attach_answers,
    expand_level,
)
from .model import ALL_RELATIONS, KnowledgeModel, marginal_context
from .scoring import (
    EMOTION_ANSWERS,
    PLUTCHIK_LABELS,
    QuestionSpec,
    map_question_to_relation,
    score_graph,
)


@dataclass(frozen=True)
class EngineConfig:
    task: str = TASK_SOCIALIQA
    levels: int = 2
    strategy: DecodeStrategy = DecodeStrategy()
    aggregation: AggregationConfig = AggregationConfig()
    pmi: bool = True
    marginal: str = ""  # empty -> default fallback context
    prune: bool = True
    anonymize: bool = True
    relations: tuple = ()  # empty -> task default

    def __post_init__(self):
        if self.task not in (TASK_SOCIALIQA, TASK_STORYCS):
            raise ValueError(f"unknown task {self.task!r}")
        if self.levels < 0:
            raise ValueError("levels must be >= 0")

    def task_relations(self) -> tuple:
        if self.relations:
            return tuple(self.relations)
        return STORY_RELATIONS if self.task == TASK_STORYCS else ALL_RELATIONS


@dataclass
class PredictionResult:
    example_id: str
    task: str
    answers: list[str]
    breakdowns: list[AnswerScoreBreakdown]
    chosen_index: int | None = None
    labels: tuple[str, ...] | None = None
    label_scores: dict[str, float] | None = None
    decisions: dict[str, bool] | None = None
    kappas: dict[str, float] | None = None
    gold: object = None

    def to_json(self) -> dict:
        doc = {
            "id": self.example_id,
            "task": self.task,
            "answers": list(self.answers),
            "scores": [
                {
                    "answer_id": b.answer_id,
                    "total": _json_float(b.total),
                    "per_level": [_json_float(x) for x in b.per_level],
                    "chosen": b.chosen,
                }
                for b in self.breakdowns
            ],
        }
        if self.chosen_index is not None:
            doc["chosen_index"] = self.chosen_index
        if self.label_scores is not None:
            doc["label_scores"] = {k: _json_float(v) for k, v in self.label_scores.items()}
        if self.decisions is not None:
            doc["decisions"] = self.decisions
        if self.kappas is not None:
            doc["kappas"] = {k: _json_float(v) for k, v in self.kappas.items()}
        if self.gold is not None:
            doc["gold"] = self.gold
        return doc


def _json_float(x: float) -> float | str:
    # JSON has no -inf literal; keep dumps byte-stable and loadable
    if x == float("-inf"):
        return "-inf"
    if x == float("inf"):
        return "inf"
    return x


def derive_seed(base_seed: int, index: int) -> int:
    """Per-example decode seed, independent of evaluation order."""
    return int(np.random.SeedSequence(base_seed, spawn_key=(index,)).generate_state(1)[0])


class Engine:
    """Builds and scores one reasoning graph per example."""

    def __init__(self, model: KnowledgeModel, config: EngineConfig):
        self.model = model
        self.config = config
        self._marginal_ctx = marginal_context(config.marginal or None)

    def _strategy_for(self, example_index: int | None) -> DecodeStrategy:
        strategy = self.config.strategy
        if example_index is None:
            return strategy
        return replace(strategy, seed=derive_seed(strategy.seed, example_index))

    def build_graph(
        self, context_text: str, example_index: int | None = None
    ) -> ReasoningGraph:
        """Expand all configured levels from the raw context."""
        graph = ReasoningGraph(root_text=context_text)
        strategy = self._strategy_for(example_index)
        relations = self.config.task_relations()
        for level in range(1, self.config.levels + 1):
            expand_level(
                self.model,
                graph,
                level,
                relations,
                strategy,
                task=self.config.task,
                prune_enabled=self.config.prune,
            )
        return graph

    def answer(
        self,
        example: SocialIQAExample,
        example_id: str = "0",
        example_index: int | None = None,
    ) -> tuple[PredictionResult, ReasoningGraph]:
        """Score one multiple-choice example; returns (result, graph)."""
        context, question_text, answers = example.context, example.question, example.answers
        if self.config.anonymize:
            anon = NameAnonymizer()
            context = anon(context)
            question_text = anon(question_text)
            answers = tuple(anon(a) for a in answers)
        question = map_question_to_relation(question_text)
        graph = self.build_graph(context, example_index)
        attach_answers(graph, list(answers))
        score_graph(
            self.model,
            graph,
            task=TASK_SOCIALIQA,
            question=question,
            pmi=self.config.pmi,
            marginal_ctx=self._marginal_ctx,
        )
        breakdowns = answer_scores(graph, self.config.aggregation)
        chosen = next(i for i, b in enumerate(breakdowns) if b.chosen)
        result = PredictionResult(
            example_id=example_id,
            task=TASK_SOCIALIQA,
            answers=list(answers),
            breakdowns=breakdowns,
            chosen_index=chosen,
            gold=example.gold_index,
        )
        return result, graph

    def answer_question(
        self,
        context: str,
        question: QuestionSpec,
        answers: list[str],
        example_id: str = "0",
        example_index: int | None = None,
    ) -> tuple[PredictionResult, ReasoningGraph]:
        """Like ``answer`` but with a pre-mapped question and no anonymizing."""
        graph = self.build_graph(context, example_index)
        attach_answers(graph, list(answers))
        score_graph(
            self.model,
            graph,
            task=TASK_SOCIALIQA,
            question=question,
            pmi=self.config.pmi,
            marginal_ctx=self._marginal_ctx,
        )
        breakdowns = answer_scores(graph, self.config.aggregation)
        chosen = next(i for i, b in enumerate(breakdowns) if b.chosen)
        result = PredictionResult(
            example_id=example_id,
            task=TASK_SOCIALIQA,
            answers=list(answers),
            breakdowns=breakdowns,
            chosen_index=chosen,
        )
        return result, graph

    def score_story(
        self,
        story: StoryExample,
        example_id: str = "0",
        example_index: int | None = None,
    ) -> tuple[PredictionResult, ReasoningGraph]:
        """Score all eight emotion labels for one story annotation point.

        Decisions are left to the caller, which applies calibrated
        thresholds over the whole run.
        """
        context = story.context
        if self.config.anonymize:
            context = NameAnonymizer()(context)
        graph = self.build_graph(context, example_index)
        labels = PLUTCHIK_LABELS
        attach_answers(graph, [EMOTION_ANSWERS[label] for label in labels])
        score_graph(
            self.model,
            graph,
            task=TASK_STORYCS,
            labels=labels,
            pmi=self.config.pmi,
            marginal_ctx=self._marginal_ctx,
        )
        breakdowns = answer_scores(graph, self.config.aggregation)
        label_scores = {label: b.total for label, b in zip(labels, breakdowns)}
        gold = sorted(story.gold_labels) if story.gold_labels is not None else None
        result = PredictionResult(
            example_id=example_id,
            task=TASK_STORYCS,
            answers=[a.text for a in graph.answers],
            breakdowns=breakdowns,
            labels=labels,
            label_scores=label_scores,
            gold=gold,
        )
        return result, graph
