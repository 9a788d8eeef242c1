"""Seeded scripted table models for tests and demos.

The generator scripts a finite generation tree per (context, relation):
each pair branches into one or more chains of word tokens, the end token
can fire after any position past the first, and every next-token rule is a
proper distribution over exactly the scripted continuations.  Rules are
also scripted for every answer-scoring query (root context, every prefixed
node text, and the marginal fallback context), so no query ever falls back
to smoothing and every downstream number is exactly recomputable from the
rule table alone.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .model import Relation, TableModel, tokenize
from .scoring import PREFIXES

END = "END"

# Relations whose pruning rules are vacuous for plain word tokens (no
# person mentions, no verb requirement); toys draw from these so pruning
# is the identity and brute-force oracles need not model it.
SAFE_RELATIONS = (
    Relation.xWant,
    Relation.xReact,
    Relation.xNeed,
    Relation.xIntent,
    Relation.xAttr,
)

_PLUMBING = ("PersonX", "is", "wants", "needs")


@dataclass
class ToyInstance:
    model: TableModel
    context: str
    answers: list[str]
    relations: tuple[Relation, ...]
    question_relation: Relation
    levels: int


def _distribution(rng: random.Random, tokens: list[str]) -> dict[str, float]:
    weights = [rng.uniform(0.2, 1.0) for _ in tokens]
    total = sum(weights)
    return {tok: math.log(w / total) for tok, w in zip(tokens, weights)}


def _chain_distribution(rng: random.Random, next_token: str, end_prob: float) -> dict[str, float]:
    return {next_token: math.log(1.0 - end_prob), END: math.log(end_prob)}


def random_instance(
    seed: int,
    n_words: int = 10,
    n_relations: int = 2,
    levels: int = 2,
    n_answers: int = 3,
    branch: int = 1,
    chain_len_max: int = 3,
) -> ToyInstance:
    """Build one scripted instance; everything is determined by ``seed``."""
    if not 1 <= n_relations <= len(SAFE_RELATIONS) - 1:
        raise ValueError(f"n_relations must be in 1..{len(SAFE_RELATIONS) - 1}")
    rng = random.Random(seed)
    words = [f"w{i}" for i in range(n_words)]
    vocab = frozenset(words) | frozenset(_PLUMBING) | {END}

    shuffled = list(SAFE_RELATIONS)
    rng.shuffle(shuffled)
    relations = tuple(shuffled[:n_relations])
    question_relation = shuffled[n_relations]  # never used for generation

    context = " ".join(rng.sample(words, rng.randint(2, 3)))
    answers = []
    while len(answers) < n_answers:
        answer = " ".join(rng.sample(words, rng.randint(1, 2)))
        if answer not in answers:
            answers.append(answer)

    rules: dict[tuple, dict[str, float]] = {}
    scripted: dict[tuple, list[tuple[str, ...]]] = {}

    def script_generation(ctx_text: str, relation: Relation) -> list[tuple[str, ...]]:
        """Write next-token rules for one (context, relation); returns every
        complete sequence the rules admit."""
        key = (ctx_text, relation.value)
        if key in scripted:
            return scripted[key]
        ctx = tuple(tokenize(ctx_text))
        first_tokens = rng.sample(words, branch)
        rules[(ctx, relation.value, ())] = _distribution(rng, first_tokens)
        sequences = []
        for first in first_tokens:
            length = rng.randint(1, chain_len_max)
            chain = [first] + rng.sample(words, length - 1) if length > 1 else [first]
            for i in range(1, length):
                end_prob = rng.uniform(0.05, 0.2)
                rules[(ctx, relation.value, tuple(chain[:i]))] = _chain_distribution(
                    rng, chain[i], end_prob
                )
                sequences.append(tuple(chain[:i]))
            rules[(ctx, relation.value, tuple(chain))] = {END: 0.0}
            sequences.append(tuple(chain))
        scripted[key] = sequences
        return sequences

    # Script the full generation tree level by level.
    frontier = [(context, None)]
    node_texts: list[tuple[str, Relation]] = []
    for _level in range(1, levels + 1):
        next_frontier = []
        for ctx_text, _rel in frontier:
            for relation in relations:
                for seq in script_generation(ctx_text, relation):
                    text = " ".join(seq)
                    node_texts.append((text, relation))
                    next_frontier.append((text, relation))
        frontier = next_frontier

    # Script answer-scoring rules for every conditioning context the
    # engine will use: raw root, prefixed node texts, marginal fallback.
    scoring_contexts = {context}
    scoring_contexts.add("PersonX")
    for text, relation in node_texts:
        scoring_contexts.add(f"{PREFIXES[relation]} {text}")

    answer_token_lists = [tuple(tokenize(a)) for a in answers]
    for sc in sorted(scoring_contexts):
        ctx = tuple(tokenize(sc))
        needed: dict[tuple, set] = {}
        for tokens in answer_token_lists:
            for j in range(len(tokens)):
                needed.setdefault(tokens[:j], set()).add(tokens[j])
        for prefix, next_tokens in sorted(needed.items()):
            support = sorted(next_tokens)
            filler = rng.choice(words)
            if filler not in support:
                support.append(filler)
            rules[(ctx, question_relation.value, prefix)] = _distribution(rng, support)

    max_order = max((len(prefix) for (_, _, prefix) in rules), default=0)
    model = TableModel(
        vocabulary=vocab,
        max_order=max_order,
        smoothing_mass=0.0,
        end_token=END,
        rules=rules,
    )
    return ToyInstance(
        model=model,
        context=context,
        answers=answers,
        relations=relations,
        question_relation=question_relation,
        levels=levels,
    )


def chain_model(
    sequences: dict[tuple[str, str], list[tuple[list[str], float]]],
    vocabulary: list[str],
    end_token: str = END,
    smoothing_mass: float = 0.0,
) -> TableModel:
    """Hand-rolled model from explicit (context, relation) -> sequence specs.

    Each sequence spec is (tokens, probability); probabilities at each
    branching point are derived from the sequence weights, with the end
    token absorbing the remainder once a sequence terminates.  Intended for
    small, fully specified test fixtures.
    """
    rules: dict[tuple, dict[str, float]] = {}
    for (ctx_text, rel_name), seqs in sequences.items():
        ctx = tuple(tokenize(ctx_text))
        rel = Relation(rel_name).value if rel_name else None
        prefixes: dict[tuple, dict[str, float]] = {}
        for tokens, prob in seqs:
            walk: tuple[str, ...] = ()
            for tok in tokens:
                prefixes.setdefault(walk, {})
                prefixes[walk][tok] = prefixes[walk].get(tok, 0.0) + prob
                walk = walk + (tok,)
            prefixes.setdefault(walk, {})
            prefixes[walk][end_token] = prefixes[walk].get(end_token, 0.0) + prob
        for prefix, mass in prefixes.items():
            total = sum(mass.values())
            rules[(ctx, rel, prefix)] = {
                tok: math.log(p / total) for tok, p in sorted(mass.items())
            }
    max_order = max((len(prefix) for (_, _, prefix) in rules), default=0)
    return TableModel(
        vocabulary=frozenset(vocabulary) | {end_token},
        max_order=max_order,
        smoothing_mass=smoothing_mass,
        end_token=end_token,
        rules=rules,
    )
