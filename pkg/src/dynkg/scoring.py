"""Answer-factor scoring between graph nodes and answer leaves.

A factor value is the answer's average token log-likelihood conditioned on
a parent node's text and the question relation, optionally corrected by
subtracting the same average computed against a fixed fallback context
("PersonX"), which turns the score into a pointwise mutual information and
cancels answer-frequency priors.  Generated inferences are prefixed with a
relation-specific stub ("happy" -> "PersonX is happy") before being used as
conditioning contexts; the root context is used raw.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import QuestionMappingError
from .graph import ROOT_ID, ReasoningGraph, TASK_SOCIALIQA, TASK_STORYCS
from .model import KnowledgeModel, Relation, Token, marginal_context, tokenize

PREFIXES = {
    Relation.xWant: "PersonX wants",
    Relation.xReact: "PersonX is",
    Relation.xNeed: "PersonX needs",
    Relation.xIntent: "PersonX wants",
    Relation.xAttr: "PersonX is",
    Relation.xEffect: "PersonX",
    Relation.oReact: "PersonX is",
    Relation.oEffect: "PersonX",
    Relation.oWant: "PersonX wants",
}

PLUTCHIK_LABELS = (
    "disgust",
    "surprise",
    "fear",
    "anger",
    "trust",
    "anticipation",
    "sadness",
    "joy",
)

# Adjective forms used as answer text when scoring emotion labels.
EMOTION_ANSWERS = {
    "disgust": "disgusted",
    "surprise": "surprised",
    "fear": "afraid",
    "anger": "angry",
    "trust": "trusting",
    "anticipation": "excited",
    "sadness": "sad",
    "joy": "happy",
}

# Both reaction relations are scored and averaged for emotion labels.
STORY_QUESTION_RELATIONS = (Relation.xReact, Relation.oReact)


@dataclass(frozen=True)
class QuestionSpec:
    """A question reduced to the relation it asks about plus its subject."""

    raw_text: str
    relation: Relation
    character: str


@dataclass(frozen=True)
class FactorValue:
    """Answer factor with its conditional and marginal components.

    ``value == conditional_part - marginal_part`` when the mutual-information
    correction is on, else ``value == conditional_part`` (and
    ``marginal_part`` is 0).
    """

    value: float
    conditional_part: float
    marginal_part: float


def prefix_inference(text: str, relation: Relation) -> str:
    """Prepend the relation-specific stub to a generated inference."""
    return f"{PREFIXES[relation]} {text}"


# Question patterns, tried in order; "others" variants must precede the
# character variants they would otherwise shadow.  Each entry: (regex,
# relation, template-with-trailing-blank).  The character group, when
# present, captures the grounded subject.
_QUESTION_PATTERNS = [
    (
        re.compile(r"^how (?:would|does|do|will|did|might) others feel", re.I),
        Relation.oReact,
        "Others feel ___",
    ),
    (
        re.compile(r"^what (?:will|would|do|does|did|might) others want", re.I),
        Relation.oWant,
        "After, others will want to ___",
    ),
    (
        re.compile(r"^what (?:will|would|might) happen to others", re.I),
        Relation.oEffect,
        "The effect on others will be ___",
    ),
    (
        re.compile(r"^how (?:would|does|do|will|did|might) (.+?) feel", re.I),
        Relation.xReact,
        "CHARACTER feels ___",
    ),
    (
        re.compile(r"^what (?:will|would|does|do|did|might) (.+?) want", re.I),
        Relation.xWant,
        "After, CHARACTER will want to ___",
    ),
    (
        re.compile(r"^how (?:would|do|does|did|might) (?:you|one|we) describe (.+?)\s*\?*$", re.I),
        Relation.xAttr,
        "CHARACTER is ___",
    ),
    (
        re.compile(r"^what (?:does|do|did|will|would) (.+?) need", re.I),
        Relation.xNeed,
        "Before, CHARACTER needs to ___",
    ),
    (
        re.compile(r"^why (?:did|does|do|would|will|is|was) (.+?)\b", re.I),
        Relation.xIntent,
        "CHARACTER did this because ___",
    ),
    (
        re.compile(r"^what (?:will|would|might) happen to (.+?)\s*\?*$", re.I),
        Relation.xEffect,
        "The effect on CHARACTER will be ___",
    ),
]


def map_question_to_relation(question_text: str) -> QuestionSpec:
    """Classify a question into its relation and extract the subject.

    Raises QuestionMappingError when no known pattern matches; there is no
    silent default.
    """
    text = question_text.strip()
    for pattern, relation, _template in _QUESTION_PATTERNS:
        m = pattern.match(text)
        if m:
            character = m.group(1).strip() if m.groups() else "Others"
            character = character.rstrip("?").strip()
            return QuestionSpec(raw_text=question_text, relation=relation, character=character)
    raise QuestionMappingError(f"question matches no known pattern: {question_text!r}")


def question_template(question_text: str) -> str:
    """The statement template for a question, with ``___`` for the answer."""
    text = question_text.strip()
    for pattern, _relation, template in _QUESTION_PATTERNS:
        if pattern.match(text):
            return template
    raise QuestionMappingError(f"question matches no known pattern: {question_text!r}")


class AnswerScorer:
    """Computes factor values, caching the shared marginal components.

    The marginal part depends only on (relation, answer tokens), so it is
    computed once per example and reused across every parent node; results
    are identical with the cache on or off.
    """

    def __init__(
        self,
        model: KnowledgeModel,
        pmi: bool = True,
        marginal_ctx: tuple[Token, ...] | None = None,
        cache: bool = True,
    ):
        self.model = model
        self.pmi = pmi
        self.marginal_ctx = tuple(marginal_ctx) if marginal_ctx else marginal_context()
        self._cache_enabled = cache
        self._marginal_cache: dict[tuple[Relation, tuple[Token, ...]], float] = {}

    def _avg_logprob(self, context_tokens, relation, answer_tokens) -> float:
        lps = self.model.token_logprobs(context_tokens, relation, answer_tokens)
        return sum(lps) / len(lps)

    def _marginal(self, relation: Relation, answer_tokens: tuple[Token, ...]) -> float:
        key = (relation, answer_tokens)
        if self._cache_enabled and key in self._marginal_cache:
            return self._marginal_cache[key]
        value = self._avg_logprob(self.marginal_ctx, relation, answer_tokens)
        if self._cache_enabled:
            self._marginal_cache[key] = value
        return value

    def factor(self, parent_text: str, relation: Relation, answer_tokens) -> FactorValue:
        """Factor between a (prefixed) parent text and an answer."""
        answer_tokens = tuple(answer_tokens)
        if not answer_tokens:
            raise ValueError("answer tokens must be non-empty")
        conditional = self._avg_logprob(tuple(tokenize(parent_text)), relation, answer_tokens)
        if not self.pmi:
            return FactorValue(value=conditional, conditional_part=conditional, marginal_part=0.0)
        marginal = self._marginal(relation, answer_tokens)
        return FactorValue(
            value=conditional - marginal,
            conditional_part=conditional,
            marginal_part=marginal,
        )

    def story_factor(self, parent_text: str, emotion_label: str) -> FactorValue:
        """Mean factor over both reaction relations for an emotion label."""
        if emotion_label not in EMOTION_ANSWERS:
            raise ValueError(f"unknown emotion label {emotion_label!r}")
        answer_tokens = tuple(tokenize(EMOTION_ANSWERS[emotion_label]))
        parts = [self.factor(parent_text, rel, answer_tokens) for rel in STORY_QUESTION_RELATIONS]
        n = len(parts)
        return FactorValue(
            value=sum(p.value for p in parts) / n,
            conditional_part=sum(p.conditional_part for p in parts) / n,
            marginal_part=sum(p.marginal_part for p in parts) / n,
        )


def answer_factor(
    model: KnowledgeModel,
    parent_text: str,
    question: QuestionSpec,
    answer_tokens,
    pmi: bool = True,
    marginal_ctx: tuple[Token, ...] | None = None,
) -> FactorValue:
    """One-shot factor computation (no cache reuse across calls)."""
    scorer = AnswerScorer(model, pmi=pmi, marginal_ctx=marginal_ctx, cache=False)
    return scorer.factor(parent_text, question.relation, answer_tokens)


def story_emotion_factor(
    model: KnowledgeModel,
    parent_text: str,
    emotion_label: str,
    pmi: bool = True,
    marginal_ctx: tuple[Token, ...] | None = None,
) -> FactorValue:
    """One-shot story-emotion factor (mean over both reaction relations)."""
    scorer = AnswerScorer(model, pmi=pmi, marginal_ctx=marginal_ctx, cache=False)
    return scorer.story_factor(parent_text, emotion_label)


def score_graph(
    model: KnowledgeModel,
    graph: ReasoningGraph,
    task: str,
    question: QuestionSpec | None = None,
    labels: tuple[str, ...] | None = None,
    pmi: bool = True,
    marginal_ctx: tuple[Token, ...] | None = None,
    cache: bool = True,
) -> ReasoningGraph:
    """Fill every factor edge of ``graph``.

    For the multiple-choice task, ``question`` supplies the relation; for
    the story task, ``labels`` aligns one emotion label with each answer
    leaf.  Node-level factors condition on the prefixed inference text, the
    root factor on the raw context.  Mutates and returns ``graph``.
    """
    scorer = AnswerScorer(model, pmi=pmi, marginal_ctx=marginal_ctx, cache=cache)
    if task == TASK_SOCIALIQA:
        if question is None:
            raise ValueError("the multiple-choice task needs a question")
        contexts = [(ROOT_ID, graph.root_text)]
        contexts += [(n.id, prefix_inference(n.text, n.relation)) for n in graph.nodes()]
        for node_id, text in contexts:
            for answer in graph.answers:
                fv = scorer.factor(text, question.relation, answer.tokens)
                graph.factors[(node_id, answer.id)] = fv.value
        return graph
    if task == TASK_STORYCS:
        if labels is None or len(labels) != len(graph.answers):
            raise ValueError("the story task needs one label per answer leaf")
        contexts = [(ROOT_ID, graph.root_text)]
        contexts += [(n.id, prefix_inference(n.text, n.relation)) for n in graph.nodes()]
        for node_id, text in contexts:
            for answer, label in zip(graph.answers, labels):
                fv = scorer.story_factor(text, label)
                graph.factors[(node_id, answer.id)] = fv.value
        return graph
    raise ValueError(f"unknown task {task!r}")
