"""Dynamic reasoning-graph construction.

The graph is rooted at the raw context (path score 0), grows level by level
by decoding inference candidates for every (node, relation) pair, prunes
low-quality candidates, and finally attaches every answer choice as a leaf
connected to the root and to every inference node.  A node's path score is
its parent's path score plus the average log-probability of the new hop, so
scores only decrease with depth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .decoding import DecodeStrategy, Generation, decode
from .errors import DataError
from .model import KnowledgeModel, Relation, Token, tokenize

TASK_SOCIALIQA = "socialiqa"
TASK_STORYCS = "storycs"
TASKS = (TASK_SOCIALIQA, TASK_STORYCS)

# Relations whose generations are distrusted when they mention a second
# person, and relations that must contain a verb (pruning rules 3 and 4).
PERSONY_PRUNED_RELATIONS = frozenset({Relation.oEffect, Relation.oReact, Relation.oWant})
VERB_REQUIRED_RELATIONS = frozenset({Relation.xEffect, Relation.oEffect})

# Relations expanded for the story emotion task (pruning rule 6).
STORY_RELATIONS = (
    Relation.xReact,
    Relation.oReact,
    Relation.xEffect,
    Relation.oEffect,
    Relation.xIntent,
)

ROOT_ID = "root"

_NONE_TEXT = "none"
_TRAILING_PUNCT = ".!?"

_VERB_SUFFIXES = ("ing", "ed", "es", "s", "d")


def _load_verbs() -> frozenset[str]:
    text = resources.files("dynkg.data").joinpath("verbs.txt").read_text()
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


_VERBS = _load_verbs()


def is_verb(token: Token) -> bool:
    """Lexicon lookup with light suffix stripping (-s/-es/-ed/-ing)."""
    word = token.lower()
    if word in _VERBS:
        return True
    for suffix in _VERB_SUFFIXES:
        if len(word) > len(suffix) + 1 and word.endswith(suffix):
            stem = word[: -len(suffix)]
            if stem in _VERBS:
                return True
            if stem + "e" in _VERBS:  # smiling -> smil -> smile
                return True
            # hopping -> hopp -> hop, carried -> carri -> carry
            if len(stem) > 2 and stem[-1] == stem[-2] and stem[:-1] in _VERBS:
                return True
            if stem.endswith("i") and stem[:-1] + "y" in _VERBS:
                return True
    return False


def has_verb(tokens) -> bool:
    return any(is_verb(tok) for tok in tokens)


@dataclass
class InferenceNode:
    id: str
    text: str
    relation: Relation
    level: int
    parent: str
    path_score: float


@dataclass
class AnswerLeaf:
    id: str
    text: str
    tokens: tuple[Token, ...]


@dataclass
class ReasoningGraph:
    """Root context, per-level inference nodes, answer leaves, factor edges.

    ``factors`` maps (node id, answer id) to the answer score along that
    edge; the root participates with id ``"root"`` and path score 0.
    """

    root_text: str
    levels: list[list[InferenceNode]] = field(default_factory=list)
    answers: list[AnswerLeaf] = field(default_factory=list)
    factors: dict[tuple[str, str], float] = field(default_factory=dict)
    relation_sets: list[list[Relation]] = field(default_factory=list)
    _next_node: int = 1

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def nodes(self):
        for level in self.levels:
            yield from level

    def inference_count(self) -> int:
        return sum(len(level) for level in self.levels)

    def node_by_id(self, node_id: str) -> InferenceNode:
        for node in self.nodes():
            if node.id == node_id:
                return node
        raise KeyError(node_id)

    def parents_of_level(self, level: int):
        """(id, text, relation-or-None, path_score) of every expansion seed."""
        if level == 1:
            return [(ROOT_ID, self.root_text, None, 0.0)]
        return [(n.id, n.text, n.relation, n.path_score) for n in self.levels[level - 2]]

    def _new_node_id(self) -> str:
        node_id = f"n{self._next_node}"
        self._next_node += 1
        return node_id

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "root": self.root_text,
            "nodes": [
                {
                    "id": n.id,
                    "text": n.text,
                    "relation": n.relation.value,
                    "level": n.level,
                    "parent": n.parent,
                    "path_score": n.path_score,
                }
                for n in self.nodes()
            ],
            "answers": [
                {"id": a.id, "text": a.text, "tokens": list(a.tokens)} for a in self.answers
            ],
            "relation_sets": [[r.value for r in rels] for rels in self.relation_sets],
            "factors": [
                {"node_id": node_id, "answer_id": answer_id, "value": value}
                for (node_id, answer_id), value in self.factors.items()
            ],
            "stats": graph_stats(self),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ReasoningGraph":
        try:
            graph = cls(root_text=doc["root"])
            n_levels = max(
                max((n["level"] for n in doc["nodes"]), default=0),
                len(doc.get("relation_sets", [])),
            )
            graph.levels = [[] for _ in range(n_levels)]
            max_id = 0
            for n in doc["nodes"]:
                node = InferenceNode(
                    id=n["id"],
                    text=n["text"],
                    relation=Relation(n["relation"]),
                    level=int(n["level"]),
                    parent=n["parent"],
                    path_score=float(n["path_score"]),
                )
                graph.levels[node.level - 1].append(node)
                if node.id.startswith("n") and node.id[1:].isdigit():
                    max_id = max(max_id, int(node.id[1:]))
            graph._next_node = max_id + 1
            graph.answers = [
                AnswerLeaf(a["id"], a["text"], tuple(a["tokens"])) for a in doc["answers"]
            ]
            graph.relation_sets = [
                [Relation(r) for r in rels] for rels in doc.get("relation_sets", [])
            ]
            graph.factors = {
                (f["node_id"], f["answer_id"]): float(f["value"]) for f in doc["factors"]
            }
            return graph
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed graph document: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ReasoningGraph":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot load graph from {path}: {exc}") from exc
        return cls.from_json(doc)


def _dedupe_key(text: str) -> str:
    return text.rstrip(_TRAILING_PUNCT + " ").lower()


def _is_none_candidate(gen: Generation) -> bool:
    return _dedupe_key(gen.text) == _NONE_TEXT


def prune(candidates: list[Generation], relation: Relation, task: str) -> list[Generation]:
    """Apply the candidate pruning rules, in order.

    1. literal "none" candidates are dropped;
    2. candidates identical to an earlier candidate from the same decode up
       to trailing punctuation (case-insensitive) are dropped;
    3. candidates mentioning "PersonY" are dropped for oEffect/oReact/oWant;
    4. candidates without a verb token are dropped for xEffect/oEffect;
    5. when a "none" appeared among the candidates, every candidate scored
       strictly lower than that "none" is dropped;
    6. for the story task, only the five story relations may be expanded at
       all (enforced upstream when picking relation sets, asserted here).

    Idempotent: pruning a pruned list changes nothing.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if task == TASK_STORYCS and relation not in STORY_RELATIONS:
        raise ValueError(f"relation {relation.value} is not expanded for the story task")
    none_scores = [g.avg_logprob for g in candidates if _is_none_candidate(g)]
    none_bar = max(none_scores) if none_scores else None
    survivors = []
    seen: set[str] = set()
    for gen in candidates:
        if _is_none_candidate(gen):
            continue
        key = _dedupe_key(gen.text)
        if key in seen:
            continue
        if relation in PERSONY_PRUNED_RELATIONS and "PersonY" in gen.text:
            continue
        if relation in VERB_REQUIRED_RELATIONS and not has_verb(gen.tokens):
            continue
        if none_bar is not None and gen.avg_logprob < none_bar:
            continue
        seen.add(key)
        survivors.append(gen)
    return survivors


def expand_level(
    model: KnowledgeModel,
    graph: ReasoningGraph,
    level: int,
    relations,
    strategy: DecodeStrategy,
    task: str = TASK_SOCIALIQA,
    prune_enabled: bool = True,
) -> ReasoningGraph:
    """Populate level ``level`` by decoding from every node one level up.

    Every (parent, relation) pair contributes its pruned decode candidates
    as children, each scored parent.path_score + candidate.avg_logprob.  A
    parent whose candidates are all pruned simply has no children.
    Mutates and returns ``graph``.
    """
    if level < 1:
        raise ValueError("levels are 1-based")
    if level != graph.num_levels + 1:
        raise ValueError(f"level {level} expanded out of order (have {graph.num_levels})")
    relations = list(relations)
    nodes: list[InferenceNode] = []
    for parent_id, parent_text, _parent_rel, parent_score in graph.parents_of_level(level):
        context = tuple(tokenize(parent_text))
        for relation in relations:
            candidates = decode(model, context, relation, strategy)
            if prune_enabled:
                candidates = prune(candidates, relation, task)
            for gen in candidates:
                nodes.append(
                    InferenceNode(
                        id=graph._new_node_id(),
                        text=gen.text,
                        relation=relation,
                        level=level,
                        parent=parent_id,
                        path_score=parent_score + gen.avg_logprob,
                    )
                )
    graph.levels.append(nodes)
    graph.relation_sets.append(relations)
    return graph


def attach_answers(graph: ReasoningGraph, answer_texts: list[str]) -> ReasoningGraph:
    """Attach one leaf per answer, with factor-edge slots to root and nodes.

    Factor values start at 0.0 and are filled by the scoring pass.  The
    degenerate case of zero inference nodes leaves only the root edges,
    which reduces prediction to direct answer evaluation.
    """
    if not answer_texts:
        raise DataError("answer set must be non-empty")
    graph.answers = []
    graph.factors = {}
    for i, text in enumerate(answer_texts):
        tokens = tuple(tokenize(text))
        if not tokens:
            raise DataError(f"answer {i} is empty")
        graph.answers.append(AnswerLeaf(id=f"a{i}", text=text, tokens=tokens))
    for answer in graph.answers:
        graph.factors[(ROOT_ID, answer.id)] = 0.0
        for node in graph.nodes():
            graph.factors[(node.id, answer.id)] = 0.0
    return graph


def graph_stats(graph: ReasoningGraph) -> dict:
    """Node/edge counts under the reporting convention.

    nodes = 1 (root) + inference nodes + answer leaves; edges = one
    generation edge per inference node plus the inference-to-answer factor
    edges.  Root-to-answer factor edges exist semantically (level 0 of the
    score ensemble) but are excluded from the reported count.
    """
    n = graph.inference_count()
    n_answers = len(graph.answers)
    return {"nodes": 1 + n + n_answers, "edges": n + n_answers * n}
