"""Knowledge-model interface and the deterministic table backend.

A knowledge model is anything that, given a context, an optional relation,
and the tokens generated so far, returns a log-probability distribution over
the next token.  The table backend keeps that distribution in an explicit
rule table so every downstream score is exactly recomputable; the remote
backend (see ``dynkg.remote``) speaks the same interface over HTTP.
"""

from __future__ import annotations

import json
import math
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import BackendError, UnknownTokenError

Token = str

# Words keep internal apostrophes ("don't"); any other non-space,
# non-word character becomes its own token.
_TOKEN_RE = re.compile(r"\w+(?:'\w+)*|[^\w\s]")
_PUNCT_ATTACH_RE = re.compile(r"\s+([^\w\s])")

DEFAULT_MARGINAL_CONTEXT = "PersonX"

# Normalization tolerances for sum(exp(logprob)) == 1.
TABLE_NORM_TOL = 1e-9
REMOTE_NORM_TOL = 1e-6


class Relation(str, Enum):
    """The nine commonsense relation types the engine generates along."""

    xWant = "xWant"
    xReact = "xReact"
    xNeed = "xNeed"
    xIntent = "xIntent"
    xAttr = "xAttr"
    xEffect = "xEffect"
    oReact = "oReact"
    oEffect = "oEffect"
    oWant = "oWant"


ALL_RELATIONS = tuple(Relation)


def tokenize(text: str) -> list[Token]:
    """Whitespace tokenization with punctuation split into separate tokens.

    Detokenizing the result reproduces the input up to whitespace placement
    (no non-whitespace character is dropped or reordered).
    """
    return _TOKEN_RE.findall(text)


def detokenize(tokens: list[Token] | tuple[Token, ...]) -> str:
    """Join tokens with spaces, reattaching punctuation to the left."""
    return _PUNCT_ATTACH_RE.sub(r"\1", " ".join(tokens))


@dataclass(frozen=True)
class ConditionalQuery:
    """One next-token query: context tokens, optional relation, prefix so far.

    ``relation`` is None for relation-free queries (the marginal fallback
    context still passes the question relation explicitly, so None only
    occurs when a caller really wants an unconditioned continuation).
    """

    context_tokens: tuple[Token, ...]
    relation: Relation | None
    prefix: tuple[Token, ...] = ()

    def __post_init__(self):
        if not self.context_tokens:
            raise ValueError("query context must be non-empty")


def check_distribution(entries: dict[Token, float], tol: float) -> None:
    """Validate a next-token distribution: finite-or--inf logprobs summing to 1.

    Raises BackendError on NaN, positive logprobs, or normalization beyond
    ``tol``.
    """
    total = 0.0
    for token, lp in entries.items():
        if math.isnan(lp):
            raise BackendError(f"NaN log-probability for token {token!r}")
        if lp > 1e-9:
            raise BackendError(f"positive log-probability {lp!r} for token {token!r}")
        if lp != float("-inf"):
            total += math.exp(lp)
    if abs(total - 1.0) > tol:
        raise BackendError(f"distribution sums to {total!r}, expected 1 within {tol}")


def marginal_context(override: str | None = None) -> tuple[Token, ...]:
    """Fallback context used to approximate answer priors (default "PersonX")."""
    return tuple(tokenize(override)) if override else (DEFAULT_MARGINAL_CONTEXT,)


class KnowledgeModel(ABC):
    """Conditional token-distribution provider.

    Implementations must tolerate concurrent read-only queries; no call may
    mutate shared state observable through this interface.
    """

    end_token: Token

    @abstractmethod
    def next_token_logprobs(self, query: ConditionalQuery) -> dict[Token, float]:
        """Full next-token distribution for ``query``."""

    def token_logprobs(
        self,
        context_tokens: tuple[Token, ...],
        relation: Relation | None,
        target_tokens: tuple[Token, ...],
        initial_prefix: tuple[Token, ...] = (),
    ) -> list[float]:
        """Per-token log-probabilities of ``target_tokens`` under teacher forcing."""
        if not target_tokens:
            raise ValueError("target_tokens must be non-empty")
        prefix = tuple(initial_prefix)
        out = []
        for token in target_tokens:
            dist = self.next_token_logprobs(
                ConditionalQuery(tuple(context_tokens), relation, prefix)
            )
            out.append(dist.get(token, float("-inf")))
            prefix = prefix + (token,)
        return out

    def sequence_logprob(
        self,
        context_tokens: tuple[Token, ...],
        relation: Relation | None,
        target_tokens: tuple[Token, ...],
        initial_prefix: tuple[Token, ...] = (),
    ) -> float:
        """Sum of token log-probs of the target sequence; always <= 0."""
        return sum(self.token_logprobs(context_tokens, relation, target_tokens, initial_prefix))


@dataclass
class TableModel(KnowledgeModel):
    """Explicit rule-table backend.

    Rules are keyed by (context tokens, relation, prefix suffix); lookup
    tries the longest prefix suffix first (up to ``max_order`` tokens) and
    falls back to a uniform distribution over the vocabulary when
    ``smoothing_mass`` is positive.  The uniform fallback renormalizes to a
    proper distribution regardless of the mass value.  Immutable after
    construction; lookups are pure.
    """

    vocabulary: frozenset[Token]
    max_order: int
    smoothing_mass: float
    end_token: Token
    rules: dict[tuple[tuple[Token, ...], str | None, tuple[Token, ...]], dict[Token, float]]
    _uniform: dict[Token, float] = field(init=False, repr=False)

    def __post_init__(self):
        if self.end_token not in self.vocabulary:
            raise BackendError("end_token must be a member of the vocabulary")
        if not 0.0 <= self.smoothing_mass <= 1.0:
            raise BackendError("smoothing_mass must lie in [0, 1]")
        if self.max_order < 0:
            raise BackendError("max_order must be non-negative")
        for (ctx, _rel, prefix), dist in self.rules.items():
            check_distribution(dist, TABLE_NORM_TOL)
            for tok in (*ctx, *prefix, *dist):
                if tok not in self.vocabulary:
                    raise UnknownTokenError(f"rule token {tok!r} not in vocabulary")
            if len(prefix) > self.max_order:
                raise BackendError(f"rule prefix {prefix!r} longer than max_order")
        uniform_lp = -math.log(len(self.vocabulary)) if self.vocabulary else float("-inf")
        self._uniform = {tok: uniform_lp for tok in sorted(self.vocabulary)}

    def token_logprobs(self, context_tokens, relation, target_tokens, initial_prefix=()):
        for tok in target_tokens:
            if tok not in self.vocabulary:
                raise UnknownTokenError(f"target token {tok!r} not in vocabulary")
        return super().token_logprobs(context_tokens, relation, target_tokens, initial_prefix)

    def next_token_logprobs(self, query: ConditionalQuery) -> dict[Token, float]:
        for tok in (*query.context_tokens, *query.prefix):
            if tok not in self.vocabulary:
                raise UnknownTokenError(f"query token {tok!r} not in vocabulary")
        ctx = tuple(query.context_tokens)
        rel = query.relation.value if query.relation is not None else None
        prefix = tuple(query.prefix)
        for order in range(min(len(prefix), self.max_order), -1, -1):
            suffix = prefix[len(prefix) - order:]
            rule = self.rules.get((ctx, rel, suffix))
            if rule is not None:
                return dict(rule)
        if self.smoothing_mass > 0.0:
            return dict(self._uniform)
        return {tok: float("-inf") for tok in sorted(self.vocabulary)}

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        rules = []
        for (ctx, rel, prefix), dist in sorted(
            self.rules.items(), key=lambda kv: (kv[0][0], kv[0][1] or "", kv[0][2])
        ):
            rules.append(
                {
                    "context": detokenize(ctx),
                    "relation": rel,
                    "prefix": list(prefix),
                    "logprobs": {tok: dist[tok] for tok in sorted(dist)},
                }
            )
        return {
            "vocabulary": sorted(self.vocabulary),
            "max_order": self.max_order,
            "smoothing_mass": self.smoothing_mass,
            "end_token": self.end_token,
            "rules": rules,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TableModel":
        try:
            vocab = frozenset(doc["vocabulary"])
            rules = {}
            for rule in doc["rules"]:
                rel = rule["relation"]
                if rel is not None:
                    rel = Relation(rel).value
                key = (tuple(tokenize(rule["context"])), rel, tuple(rule["prefix"]))
                if key in rules:
                    raise BackendError(f"duplicate rule for {key!r}")
                rules[key] = {str(t): float(lp) for t, lp in rule["logprobs"].items()}
            return cls(
                vocabulary=vocab,
                max_order=int(doc["max_order"]),
                smoothing_mass=float(doc["smoothing_mass"]),
                end_token=doc["end_token"],
                rules=rules,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed table model document: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TableModel":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise BackendError(f"cannot load table model from {path}: {exc}") from exc
        return cls.from_json(doc)
