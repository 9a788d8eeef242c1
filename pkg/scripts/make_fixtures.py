#!/usr/bin/env python3
"""Regenerate the committed test fixtures.

Builds the two demo table models, the golden graph dump (cross-checked
against the brute-force oracle before freezing), the tiny datasets, the
recorded wire-protocol exchanges, and the KB events file.  Run from the
repository root:

    python scripts/make_fixtures.py
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from dynkg.datasets import SocialIQAExample
from dynkg.model import TableModel, tokenize
from dynkg.pipeline import Engine, EngineConfig
from dynkg.remote import TableModelServer, record_exchanges, save_fixtures
from dynkg.scoring import EMOTION_ANSWERS, PLUTCHIK_LABELS
from dynkg.model import Relation
from dynkg.toys import chain_model
from oracle import oracle_answer_scores

FIXTURES = ROOT / "tests" / "fixtures"

TINY_CONTEXT = "PersonX plays the piano"
TINY_ANSWERS = ["happy", "tired", "angry"]


def build_tiny_model() -> TableModel:
    """Multiple-choice demo model: graph relations xWant/xReact, question
    relation xReact, answers happy/tired/angry."""
    answers = {
        TINY_CONTEXT: [(["happy"], 0.4), (["proud"], 0.3), (["tired"], 0.2), (["angry"], 0.1)],
        "PersonX wants to practice": [(["tired"], 0.5), (["happy"], 0.3), (["angry"], 0.2)],
        "PersonX is happy": [(["happy"], 0.7), (["tired"], 0.2), (["angry"], 0.1)],
        "PersonX wants to improve": [(["happy"], 0.45), (["tired"], 0.35), (["angry"], 0.2)],
        "PersonX is focused": [(["happy"], 0.5), (["tired"], 0.3), (["angry"], 0.2)],
        "PersonX wants to smile": [(["happy"], 0.6), (["tired"], 0.25), (["angry"], 0.15)],
        "PersonX is glad": [(["happy"], 0.65), (["tired"], 0.2), (["angry"], 0.15)],
        "PersonX": [(["happy"], 0.5), (["tired"], 0.3), (["angry"], 0.2)],
    }
    sequences = {
        (TINY_CONTEXT, "xWant"): [(["to", "practice"], 0.6), (["to", "relax"], 0.4)],
        ("to practice", "xWant"): [(["to", "improve"], 0.7), (["to", "rest"], 0.3)],
        ("to practice", "xReact"): [(["focused"], 0.6), (["tired"], 0.4)],
        ("happy", "xWant"): [(["to", "smile"], 0.8), (["to", "sing"], 0.2)],
        ("happy", "xReact"): [(["glad"], 0.7), (["proud"], 0.3)],
    }
    for ctx, seqs in answers.items():
        key = (ctx, "xReact")
        sequences[key] = sequences.get(key, []) + seqs
    vocab = set()
    for (ctx, _rel), seqs in sequences.items():
        vocab.update(tokenize(ctx))
        for tokens, _p in seqs:
            vocab.update(tokens)
    # smoothing keeps sampled decodes defined off the scripted paths
    return chain_model(sequences, sorted(vocab), smoothing_mass=0.1)


STORY_SENTENCES = [
    "Daniel found a piano.",
    "Daniel played a song.",
    "The song was sad.",
    "Daniel stopped playing.",
    "Daniel felt better.",
]
STORY_GOLD = ["joy|anticipation", "joy", "sadness", "", "joy"]

# one deterministic generation chain per story relation
STORY_CHAINS = {
    "xReact": ["glad"],
    "oReact": ["pleased"],
    "xEffect": ["smiles"],
    "oEffect": ["claps"],
    "xIntent": ["to", "enjoy"],
}
STORY_PREFIXED = {
    "xReact": "PersonX is glad",
    "oReact": "PersonX is pleased",
    "xEffect": "PersonX smiles",
    "oEffect": "PersonX claps",
    "xIntent": "PersonX wants to enjoy",
}


def build_story_model() -> TableModel:
    adjectives = [EMOTION_ANSWERS[label] for label in PLUTCHIK_LABELS]
    weights = [0.05, 0.07, 0.08, 0.1, 0.12, 0.13, 0.2, 0.25]

    contexts = []
    anon = lambda s: s.replace("Daniel", "PersonX")
    for i in range(1, 6):
        contexts.append(" ".join(anon(s) for s in STORY_SENTENCES[:i]))

    sequences = {}
    scoring_ctxs = set(contexts) | set(STORY_PREFIXED.values()) | {"PersonX"}
    for j, ctx in enumerate(sorted(scoring_ctxs)):
        rotated = weights[j % len(weights):] + weights[: j % len(weights)]
        pairs = [([adj], w) for adj, w in zip(adjectives, rotated)]
        sequences[(ctx, "xReact")] = sequences.get((ctx, "xReact"), []) + pairs
        rotated2 = list(reversed(rotated))
        sequences[(ctx, "oReact")] = sequences.get((ctx, "oReact"), []) + [
            ([adj], w) for adj, w in zip(adjectives, rotated2)
        ]
    for ctx in contexts:
        for rel, chain in STORY_CHAINS.items():
            sequences[(ctx, rel)] = sequences.get((ctx, rel), []) + [(chain, 1.0)]
    vocab = set()
    for (ctx, _rel), seqs in sequences.items():
        vocab.update(tokenize(ctx))
        for tokens, _p in seqs:
            vocab.update(tokens)
    return chain_model(sequences, sorted(vocab))


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)

    tiny = build_tiny_model()
    tiny.save(FIXTURES / "tiny_model.json")

    story = build_story_model()
    story.save(FIXTURES / "story_model.json")

    # golden graph: run the engine, verify against the oracle, freeze
    engine = Engine(
        tiny,
        EngineConfig(levels=2, relations=(Relation.xWant, Relation.xReact)),
    )
    example = SocialIQAExample(
        context="Alice plays the piano",
        question="How would Alice feel afterwards?",
        answers=tuple(TINY_ANSWERS),
    )
    result, graph = engine.answer(example)
    oracle_totals, _ = oracle_answer_scores(
        tiny.to_json(),
        TINY_CONTEXT,
        ["xWant", "xReact"],
        levels=2,
        answers=TINY_ANSWERS,
        question_relation="xReact",
        pmi=True,
    )
    engine_totals = [b.total for b in result.breakdowns]
    worst = max(abs(a - b) for a, b in zip(engine_totals, oracle_totals))
    assert worst <= 1e-9, f"oracle mismatch while freezing golden: {worst}"
    graph.save(FIXTURES / "golden_graph.json")
    print(f"golden graph: chosen={result.chosen_index} totals={engine_totals}")

    # tiny labeled dataset: 4 rows, labels set so accuracy is exactly 0.5
    predicted = result.chosen_index
    rows = []
    orders = [
        ["happy", "tired", "angry"],
        ["tired", "happy", "angry"],
        ["angry", "happy", "tired"],
        ["happy", "angry", "tired"],
    ]
    for i, order in enumerate(orders):
        res, _ = engine.answer(
            SocialIQAExample(
                context="Alice plays the piano",
                question="How would Alice feel afterwards?",
                answers=tuple(order),
            )
        )
        chosen = res.chosen_index
        gold = chosen if i < 2 else (chosen + 1) % 3  # first two agree
        rows.append(
            json.dumps(
                {
                    "context": "Alice plays the piano",
                    "question": "How would Alice feel afterwards?",
                    "answerA": order[0],
                    "answerB": order[1],
                    "answerC": order[2],
                    "label": str(gold + 1),
                }
            )
        )
    (FIXTURES / "socialiqa_dev.jsonl").write_text("\n".join(rows) + "\n")
    print(f"socialiqa_dev.jsonl: predicted index on base order = {predicted}")

    # story dataset
    lines = ["storyid,linenum,char,sentence,plutchik"]
    for i, (sentence, gold) in enumerate(zip(STORY_SENTENCES, STORY_GOLD), start=1):
        lines.append(f"s1,{i},Daniel,{sentence},{gold}")
    (FIXTURES / "storycs.csv").write_text("\n".join(lines) + "\n")

    # recorded wire exchanges against the reference server
    queries = [
        ("/v1/logprobs", {"context": TINY_CONTEXT, "relation": "xReact", "prefix": []}),
        ("/v1/logprobs", {"context": "PersonX", "relation": "xReact", "prefix": []}),
        ("/v1/logprobs", {"context": TINY_CONTEXT, "relation": "xWant", "prefix": ["to"]}),
        ("/v1/score", {"context": TINY_CONTEXT, "relation": "xReact", "target": ["happy"]}),
        ("/v1/score", {"context": "PersonX", "relation": "xReact", "target": ["tired"]}),
    ]
    with TableModelServer(tiny) as server:
        fixtures = record_exchanges(server.url, queries)
    save_fixtures(fixtures, FIXTURES / "remote_fixtures.json")

    # KB events for the overlap check
    kb = [
        {"event": "play piano", "tails": ["happy"]},
        {"event": "go club", "tails": ["dance"]},
    ]
    (FIXTURES / "kb_events.json").write_text(json.dumps(kb, indent=2) + "\n")
    print("fixtures written to", FIXTURES)


if __name__ == "__main__":
    main()
