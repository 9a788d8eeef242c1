"""Decoding strategies for generating inference candidates.

Three strategies: greedy argmax (one candidate), beam search (width ``b``
candidates), and top-k sampling (``k`` independently sampled candidates).
Beam search ranks hypotheses by total unnormalized log-probability,
including the end-token step; the reported score of every finished
candidate is the length-normalized average over its content tokens only,
with the end token stripped.

Top-k sampling draws each candidate from its own RNG stream, spawned from
the strategy seed by candidate index (numpy PCG64 via SeedSequence), so
candidate ``i`` is reproducible independently of how many candidates run
before it or in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DecodeError
from .model import ConditionalQuery, KnowledgeModel, Relation, Token, detokenize

GREEDY = "greedy"
BEAM = "beam"
TOPK = "topk"

DEFAULT_MAX_LENGTH = 16


@dataclass(frozen=True)
class DecodeStrategy:
    kind: str = GREEDY
    width_or_k: int = 1
    max_length: int = DEFAULT_MAX_LENGTH
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (GREEDY, BEAM, TOPK):
            raise ValueError(f"unknown decode strategy {self.kind!r}")
        if self.width_or_k < 1:
            raise ValueError("width_or_k must be >= 1")
        if self.kind == GREEDY and self.width_or_k != 1:
            raise ValueError("greedy decoding implies width_or_k == 1")
        if self.max_length < 1:
            raise ValueError("max_length must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @classmethod
    def parse(cls, spec: str, max_length: int = DEFAULT_MAX_LENGTH, seed: int = 0):
        """Parse a CLI-style spec: ``greedy``, ``beam:5``, ``topk:10``."""
        kind, _, arg = spec.partition(":")
        kind = kind.strip().lower()
        if kind == GREEDY:
            if arg:
                raise ValueError("greedy takes no width argument")
            return cls(GREEDY, 1, max_length, seed)
        if kind in (BEAM, TOPK):
            try:
                width = int(arg)
            except ValueError:
                raise ValueError(f"{kind} needs an integer width, got {arg!r}") from None
            return cls(kind, width, max_length, seed)
        raise ValueError(f"unknown decode strategy {spec!r}")


@dataclass(frozen=True)
class Generation:
    """One finished candidate: content tokens and their average log-prob."""

    tokens: tuple[Token, ...]
    avg_logprob: float
    relation: Relation

    @property
    def text(self) -> str:
        return detokenize(self.tokens)


def _argmax(dist: dict[Token, float]) -> tuple[Token, float]:
    """Highest-log-prob token; ties broken by lexicographic token order."""
    best = None
    for token in sorted(dist):
        lp = dist[token]
        if lp == float("-inf"):
            continue
        if best is None or lp > best[1]:
            best = (token, lp)
    if best is None:
        raise DecodeError("no token has finite probability")
    return best


def sample_topk(dist: dict[Token, float], k: int, rng: np.random.Generator) -> Token:
    """Sample one token from the k highest-log-prob entries of ``dist``.

    Entries are renormalized over the top k; ties at the k-th position are
    broken by lexicographic token order.  ``k`` larger than the finite
    support falls back to the full support.  Advances ``rng``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    finite = [(tok, lp) for tok, lp in dist.items() if lp > float("-inf")]
    if not finite:
        raise DecodeError("no token has finite probability")
    finite.sort(key=lambda e: (-e[1], e[0]))
    top = finite[: min(k, len(finite))]
    m = max(lp for _, lp in top)
    weights = [math.exp(lp - m) for _, lp in top]
    total = sum(weights)
    u = rng.random() * total
    acc = 0.0
    for (tok, _), w in zip(top, weights):
        acc += w
        if u <= acc:
            return tok
    return top[-1][0]


def candidate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent RNG stream for candidate ``index`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def decode(
    model: KnowledgeModel,
    context_tokens: tuple[Token, ...],
    relation: Relation,
    strategy: DecodeStrategy,
) -> list[Generation]:
    """Generate candidates from ``model`` conditioned on context and relation.

    Greedy returns one candidate; beam returns up to ``width_or_k`` ranked by
    total log-prob; top-k returns up to ``width_or_k`` independent samples
    (duplicates possible, empty samples dropped).  Candidates that reach
    ``max_length`` without the end token are returned truncated.
    """
    context_tokens = tuple(context_tokens)
    if strategy.kind == GREEDY:
        return _greedy(model, context_tokens, relation, strategy)
    if strategy.kind == BEAM:
        return _beam(model, context_tokens, relation, strategy)
    return _topk(model, context_tokens, relation, strategy)


def _finish(tokens: tuple[Token, ...], content_lp: float, relation: Relation) -> Generation | None:
    if not tokens:
        return None
    return Generation(tokens, content_lp / len(tokens), relation)


def _greedy(model, context_tokens, relation, strategy) -> list[Generation]:
    tokens: tuple[Token, ...] = ()
    content_lp = 0.0
    for step in range(strategy.max_length):
        dist = model.next_token_logprobs(ConditionalQuery(context_tokens, relation, tokens))
        try:
            token, lp = _argmax(dist)
        except DecodeError:
            if step == 0:
                raise
            break  # dead end mid-sequence: return what we have
        if token == model.end_token:
            break
        tokens += (token,)
        content_lp += lp
    gen = _finish(tokens, content_lp, relation)
    return [gen] if gen is not None else []


def _beam(model, context_tokens, relation, strategy) -> list[Generation]:
    # Hypotheses: (content_tokens, content_lp, rank_lp, done).  rank_lp
    # includes the end-token step so completed sequences compete on full
    # sequence probability; completed hypotheses keep occupying beam slots.
    width = strategy.width_or_k
    pool = [((), 0.0, 0.0, False)]
    for step in range(strategy.max_length):
        if all(done for *_, done in pool):
            break
        candidates = [hyp for hyp in pool if hyp[3]]
        for tokens, content_lp, rank_lp, done in pool:
            if done:
                continue
            dist = model.next_token_logprobs(ConditionalQuery(context_tokens, relation, tokens))
            for token, lp in dist.items():
                if lp == float("-inf"):
                    continue
                if token == model.end_token:
                    candidates.append((tokens, content_lp, rank_lp + lp, True))
                else:
                    candidates.append((tokens + (token,), content_lp + lp, rank_lp + lp, False))
        if not candidates:
            if step == 0:
                raise DecodeError("no token has finite probability")
            break  # every active hypothesis dead-ended: return them truncated
        candidates.sort(key=lambda h: (-h[2], h[0]))
        pool = candidates[:width]
    out = []
    for tokens, content_lp, rank_lp, _done in sorted(pool, key=lambda h: (-h[2], h[0])):
        gen = _finish(tokens, content_lp, relation)
        if gen is not None:
            out.append(gen)
    return out


def _topk(model, context_tokens, relation, strategy) -> list[Generation]:
    out = []
    for index in range(strategy.width_or_k):
        rng = candidate_rng(strategy.seed, index)
        tokens: tuple[Token, ...] = ()
        content_lp = 0.0
        for step in range(strategy.max_length):
            dist = model.next_token_logprobs(ConditionalQuery(context_tokens, relation, tokens))
            try:
                token = sample_topk(dist, strategy.width_or_k, rng)
            except DecodeError:
                if step == 0:
                    raise
                break
            if token == model.end_token:
                break
            tokens += (token,)
            content_lp += dist[token]
        gen = _finish(tokens, content_lp, relation)
        if gen is not None:
            out.append(gen)
    return out
