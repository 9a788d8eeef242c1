"""Dataset ingestion and preprocessing.

Two input formats: the multiple-choice social QA data (JSON lines with
context/question/answerA..C/label) and the five-sentence story emotion
data (CSV with storyid/linenum/char/sentence/plutchik columns; one example
per annotated (story, character, sentence), with the context being the
cumulative story prefix up to the annotated sentence).

Also houses the name anonymizer (first-name list -> PersonX/Y/Z by first
appearance) and the knowledge-base overlap check (stemmed, stopword-free
token-subset matching).
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import DataError
from .scoring import PLUTCHIK_LABELS, question_template
from .stem import stem

_GOLD_LABEL_MAP = {"1": 0, "2": 1, "3": 2}

_PLACEHOLDERS = ("PersonX", "PersonY", "PersonZ")


def _load_wordlist(name: str) -> frozenset[str]:
    text = resources.files("dynkg.data").joinpath(name).read_text()
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


STOPWORDS = _load_wordlist("stopwords.txt")
FIRST_NAMES = _load_wordlist("names.txt")


@dataclass(frozen=True)
class SocialIQAExample:
    context: str
    question: str
    answers: tuple[str, str, str]
    gold_index: int | None = None

    def __post_init__(self):
        if len(self.answers) != 3 or not all(self.answers):
            raise DataError("examples need exactly 3 non-empty answers")


@dataclass(frozen=True)
class StoryExample:
    story_id: str
    sentences: tuple[str, str, str, str, str]
    character: str
    sentence_index: int  # 1-based line under annotation
    gold_labels: frozenset[str] | None = None

    def __post_init__(self):
        if len(self.sentences) != 5:
            raise DataError("stories have exactly 5 sentences")
        if not 1 <= self.sentence_index <= 5:
            raise DataError("sentence_index must be in 1..5")
        if self.gold_labels is not None:
            bad = set(self.gold_labels) - set(PLUTCHIK_LABELS)
            if bad:
                raise DataError(f"unknown emotion labels: {sorted(bad)}")

    @property
    def context(self) -> str:
        """Story text up to and including the annotated sentence."""
        return " ".join(self.sentences[: self.sentence_index])


def _load_blocklist(path: str | Path | None) -> frozenset[str]:
    if path is None:
        text = resources.files("dynkg.data").joinpath("spam_blocklist.txt").read_text()
    else:
        text = Path(path).read_text()
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


def load_socialiqa(
    path: str | Path, blocklist_path: str | Path | None = None
) -> tuple[list[SocialIQAExample], int]:
    """Parse JSON-lines examples; returns (examples, dropped spam count).

    Rows whose raw line hashes into the spam blocklist are dropped.  A
    missing ``label`` field yields an unlabeled example.
    """
    blocklist = _load_blocklist(blocklist_path)
    examples = []
    dropped = 0
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if hashlib.sha256(line.encode("utf-8")).hexdigest() in blocklist:
                dropped += 1
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}, line {lineno}: invalid JSON ({exc})") from exc
            try:
                answers = (row["answerA"], row["answerB"], row["answerC"])
                gold = None
                if "label" in row and row["label"] not in (None, ""):
                    label = str(row["label"])
                    if label not in _GOLD_LABEL_MAP:
                        raise DataError(f"{path}, line {lineno}: bad label {label!r}")
                    gold = _GOLD_LABEL_MAP[label]
                examples.append(
                    SocialIQAExample(
                        context=row["context"],
                        question=row["question"],
                        answers=answers,
                        gold_index=gold,
                    )
                )
            except KeyError as exc:
                raise DataError(f"{path}, line {lineno}: missing field {exc}") from exc
    return examples, dropped


def load_storycommonsense(path: str | Path) -> list[StoryExample]:
    """Parse the story emotion CSV.

    Required columns: ``storyid``, ``linenum`` (1..5), ``char``,
    ``sentence``, and optionally ``plutchik`` (gold labels separated by
    ``|``, empty for none).  Every line 1..5 of a story must appear on some
    row so the full story text can be reconstructed; one example is emitted
    per (storyid, char, linenum) row, in file order.
    """
    rows = []
    sentences: dict[str, dict[int, str]] = {}
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            required = {"storyid", "linenum", "char", "sentence"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise DataError(f"{path}: need columns {sorted(required)}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    story_id = row["storyid"]
                    linenum = int(row["linenum"])
                except (TypeError, ValueError) as exc:
                    raise DataError(f"{path}, line {lineno}: bad linenum ({exc})") from exc
                if not 1 <= linenum <= 5:
                    raise DataError(f"{path}, line {lineno}: linenum {linenum} not in 1..5")
                sentences.setdefault(story_id, {}).setdefault(linenum, row["sentence"])
                rows.append((lineno, story_id, linenum, row))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    examples = []
    for lineno, story_id, linenum, row in rows:
        story_sentences = sentences[story_id]
        if set(story_sentences) != {1, 2, 3, 4, 5}:
            raise DataError(
                f"{path}: story {story_id} is missing lines"
                f" {sorted({1, 2, 3, 4, 5} - set(story_sentences))}"
            )
        gold = None
        if "plutchik" in row and row["plutchik"] is not None:
            text = row["plutchik"].strip()
            gold = frozenset(p.strip() for p in text.split("|") if p.strip()) if text else frozenset()
        try:
            examples.append(
                StoryExample(
                    story_id=story_id,
                    sentences=tuple(story_sentences[i] for i in range(1, 6)),
                    character=row["char"],
                    sentence_index=linenum,
                    gold_labels=gold,
                )
            )
        except DataError as exc:
            raise DataError(f"{path}, line {lineno}: {exc}") from exc
    return examples


def emotion_to_qa(story: StoryExample) -> list[tuple[str, str]]:
    """One (context, label) query per emotion label, in the fixed order."""
    return [(story.context, label) for label in PLUTCHIK_LABELS]


def gold_vector(story: StoryExample) -> tuple[bool, ...]:
    """Gold labels as a boolean vector in the fixed label order."""
    if story.gold_labels is None:
        raise DataError("story has no gold labels")
    return tuple(label in story.gold_labels for label in PLUTCHIK_LABELS)


def apply_template(question: str, character: str, answer: str) -> str:
    """Convert a question-answer pair to its statement form.

    The question's template has its CHARACTER slot replaced and the answer
    substituted into the trailing blank ("How does Alice feel after?" +
    "drained" -> "Alice feels drained").
    """
    template = question_template(question)
    return template.replace("CHARACTER", character).replace("___", answer)


class NameAnonymizer:
    """Replaces known first names with PersonX/Y/Z placeholders.

    Placeholders are assigned in order of first appearance and shared
    across every text passed to the same instance, so a context and its
    answers stay consistent.  Names beyond the third are left unchanged.
    Matching is case-sensitive on capitalized tokens.
    """

    _WORD_RE = re.compile(r"[A-Z][a-z]+")

    def __init__(self):
        self.mapping: dict[str, str] = {}

    def __call__(self, text: str) -> str:
        def sub(match: re.Match) -> str:
            word = match.group(0)
            if word not in FIRST_NAMES:
                return word
            if word not in self.mapping:
                if len(self.mapping) >= len(_PLACEHOLDERS):
                    return word
                self.mapping[word] = _PLACEHOLDERS[len(self.mapping)]
            return self.mapping[word]

        return self._WORD_RE.sub(sub, text)


def anonymize(text: str) -> str:
    """Anonymize one text in isolation (fresh placeholder assignment)."""
    return NameAnonymizer()(text)


def _content_stems(text: str) -> frozenset[str]:
    words = re.findall(r"[a-z']+", text.lower())
    return frozenset(stem(w) for w in words if w not in STOPWORDS)


def detect_overlap(
    contexts: list[str],
    kb_events: list[str],
    kb_tails: dict[str, list[str]],
    answers: list[tuple[str, ...]] | list[list[str]],
) -> dict:
    """Flag examples whose context subsumes a knowledge-base event.

    An event matches a context when its stemmed, stopword-free token set is
    a non-empty subset of the context's stemmed token set; a matched event
    flags the example when any of its tail entities is likewise contained
    in one of the example's answers.  Returns per-example matches, flags,
    and the flagged rate.
    """
    if len(contexts) != len(answers):
        raise DataError("contexts and answers must align")
    event_stems = [(event, _content_stems(event)) for event in kb_events]
    matches: list[list[str]] = []
    flagged: list[bool] = []
    for context, answer_set in zip(contexts, answers):
        ctx_stems = _content_stems(context)
        ans_stems = [_content_stems(a) for a in answer_set]
        matched_events = []
        is_flagged = False
        for event, stems in event_stems:
            if not stems or not stems.issubset(ctx_stems):
                continue
            matched_events.append(event)
            for tail in kb_tails.get(event, []):
                tail_stems = _content_stems(tail)
                if tail_stems and any(tail_stems.issubset(a) for a in ans_stems):
                    is_flagged = True
                    break
        matches.append(matched_events)
        flagged.append(is_flagged)
    total = len(contexts)
    count = sum(flagged)
    return {
        "total": total,
        "flagged_count": count,
        "rate": count / total if total else 0.0,
        "flagged": flagged,
        "matches": matches,
    }
