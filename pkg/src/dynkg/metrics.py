"""Evaluation metrics and decision-threshold calibration.

Multiple choice is scored by accuracy; the multi-label emotion task by
per-label and micro/macro precision/recall/F1 (0/0 counts as 0).

Threshold strategies:

* ``cdf-label``: pick the smallest observed score whose tail fraction
  (scores >= s) does not exceed the label's positive-rate prior, so the
  predicted-positive rate matches the prior to within 1/N on distinct
  scores.
* ``cdf-50``: the lower median of the score distribution.
* ``fewshot:N``: per label, the threshold maximizing F1 on N labeled
  examples, averaged over five seeded draws.
* ``fixed:PATH``: thresholds read from a JSON file.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, UsageError

CDF_LABEL = "cdf-label"
CDF_50 = "cdf-50"
FEWSHOT = "fewshot"
FIXED = "fixed"

DEFAULT_FEWSHOT_SEEDS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class ThresholdStrategy:
    kind: str
    fewshot_n: int = 0
    fixed_path: str = ""

    @classmethod
    def parse(cls, spec: str) -> "ThresholdStrategy":
        kind, _, arg = spec.partition(":")
        kind = kind.strip().lower()
        if kind in (CDF_LABEL, CDF_50):
            if arg:
                raise UsageError(f"{kind} takes no argument")
            return cls(kind)
        if kind == FEWSHOT:
            try:
                n = int(arg)
            except ValueError:
                raise UsageError(f"fewshot needs an example count, got {arg!r}") from None
            if n < 1:
                raise UsageError("fewshot example count must be >= 1")
            return cls(FEWSHOT, fewshot_n=n)
        if kind == FIXED:
            if not arg:
                raise UsageError("fixed needs a threshold file path")
            return cls(FIXED, fixed_path=arg)
        raise UsageError(f"unknown threshold strategy {spec!r}")


@dataclass
class MetricsReport:
    task: str
    n_examples: int
    accuracy: float | None = None
    correct: int | None = None
    per_label: dict[str, dict] = field(default_factory=dict)
    micro: dict | None = None
    macro: dict | None = None

    def to_json(self) -> dict:
        doc = {"task": self.task, "n_examples": self.n_examples}
        if self.accuracy is not None:
            doc["accuracy"] = self.accuracy
            doc["correct"] = self.correct
        if self.per_label:
            doc["per_label"] = self.per_label
            doc["micro"] = self.micro
            doc["macro"] = self.macro
        return doc

    def summary_lines(self) -> list[str]:
        lines = [f"examples: {self.n_examples}"]
        if self.accuracy is not None:
            lines.append(f"accuracy: {self.accuracy:.4f} ({self.correct}/{self.n_examples})")
        if self.micro is not None:
            m = self.micro
            lines.append(
                f"micro    P {m['precision']:.4f}  R {m['recall']:.4f}  F1 {m['f1']:.4f}"
            )
            m = self.macro
            lines.append(
                f"macro    P {m['precision']:.4f}  R {m['recall']:.4f}  F1 {m['f1']:.4f}"
            )
            for label, stats in self.per_label.items():
                lines.append(
                    f"{label:<13}P {stats['precision']:.4f}  R {stats['recall']:.4f}"
                    f"  F1 {stats['f1']:.4f}  (tp {stats['tp']} fp {stats['fp']} fn {stats['fn']})"
                )
        return lines


def prf1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision/recall/F1 with the 0/0 -> 0 convention."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def accuracy_report(predictions: list[int], golds: list[int], task: str) -> MetricsReport:
    if len(predictions) != len(golds):
        raise DataError("predictions and golds must align")
    correct = sum(int(p == g) for p, g in zip(predictions, golds))
    n = len(golds)
    return MetricsReport(
        task=task, n_examples=n, accuracy=correct / n if n else 0.0, correct=correct
    )


def multilabel_report(
    decisions: list[dict[str, bool]],
    golds: list[dict[str, bool]],
    labels: tuple[str, ...],
    task: str,
) -> MetricsReport:
    if len(decisions) != len(golds):
        raise DataError("decisions and golds must align")
    counts = {label: {"tp": 0, "fp": 0, "fn": 0, "tn": 0} for label in labels}
    for pred, gold in zip(decisions, golds):
        for label in labels:
            p, g = pred[label], gold[label]
            if p and g:
                counts[label]["tp"] += 1
            elif p and not g:
                counts[label]["fp"] += 1
            elif g:
                counts[label]["fn"] += 1
            else:
                counts[label]["tn"] += 1
    per_label = {}
    for label in labels:
        c = counts[label]
        p, r, f1 = prf1(c["tp"], c["fp"], c["fn"])
        per_label[label] = {"precision": p, "recall": r, "f1": f1, **c}
    tp = sum(c["tp"] for c in counts.values())
    fp = sum(c["fp"] for c in counts.values())
    fn = sum(c["fn"] for c in counts.values())
    p, r, f1 = prf1(tp, fp, fn)
    micro = {"precision": p, "recall": r, "f1": f1, "tp": tp, "fp": fp, "fn": fn}
    macro = {
        "precision": sum(v["precision"] for v in per_label.values()) / len(labels),
        "recall": sum(v["recall"] for v in per_label.values()) / len(labels),
        "f1": sum(v["f1"] for v in per_label.values()) / len(labels),
    }
    return MetricsReport(
        task=task, n_examples=len(golds), per_label=per_label, micro=micro, macro=macro
    )


def cdf_label_kappa(scores: list[float], prior: float) -> float:
    """Smallest observed score whose >=-tail fraction is at most ``prior``.

    With distinct scores the induced predicted-positive rate is within 1/N
    of the prior.  When even the maximum score's tail exceeds the prior
    (prior below 1/N), returns +inf so nothing is predicted positive.
    """
    if not scores:
        raise DataError("cannot calibrate on an empty score list")
    if not 0.0 < prior < 1.0:
        raise DataError(f"prior must lie in (0, 1), got {prior}")
    n = len(scores)
    ordered = sorted(set(scores))
    ge_count = 0
    value = None
    # walk unique scores descending, tracking how many scores are >= each
    counts = {}
    for s in scores:
        counts[s] = counts.get(s, 0) + 1
    for s in reversed(ordered):
        ge_count += counts[s]
        if ge_count / n <= prior:
            value = s  # keep descending: smallest qualifying score wins
        else:
            break
    return value if value is not None else float("inf")


def cdf50_kappa(scores: list[float]) -> float:
    """Lower median of the score distribution."""
    if not scores:
        raise DataError("cannot calibrate on an empty score list")
    ordered = sorted(scores)
    return ordered[(len(ordered) - 1) // 2]


def best_f1_threshold(scores: list[float], gold: list[bool]) -> float:
    """Threshold maximizing F1 under the >= decision rule.

    Candidates are the midpoints between consecutive distinct scores plus
    the extremes (predict-all and predict-none); the lowest maximizer wins
    ties.  With no positive example the threshold is +inf.
    """
    if len(scores) != len(gold):
        raise DataError("scores and gold must align")
    if not any(gold):
        return float("inf")
    ordered = sorted(set(scores))
    candidates = [ordered[0]]
    candidates += [(a + b) / 2 for a, b in zip(ordered, ordered[1:])]
    candidates.append(ordered[-1] + 1.0)
    best_kappa = candidates[0]
    best_f1 = -1.0
    for kappa in candidates:
        tp = sum(1 for s, g in zip(scores, gold) if s >= kappa and g)
        fp = sum(1 for s, g in zip(scores, gold) if s >= kappa and not g)
        fn = sum(1 for s, g in zip(scores, gold) if s < kappa and g)
        _, _, f1 = prf1(tp, fp, fn)
        if f1 > best_f1:
            best_f1 = f1
            best_kappa = kappa
    return best_kappa


def fewshot_kappas(
    scores: dict[str, list[float]],
    gold: dict[str, list[bool]],
    n: int,
    seed: int,
) -> dict[str, float]:
    """Per-label best-F1 thresholds from one seeded n-example draw."""
    sizes = {len(v) for v in scores.values()}
    if len(sizes) != 1:
        raise DataError("all labels must score the same examples")
    total = sizes.pop()
    if n > total:
        raise DataError(f"cannot sample {n} examples from {total}")
    rng = random.Random(seed)
    indices = rng.sample(range(total), n)
    out = {}
    for label in scores:
        sample_scores = [scores[label][i] for i in indices]
        sample_gold = [gold[label][i] for i in indices]
        out[label] = best_f1_threshold(sample_scores, sample_gold)
    return out


def calibrate_thresholds(
    scores: dict[str, list[float]],
    strategy: ThresholdStrategy,
    priors: dict[str, float] | None = None,
    gold: dict[str, list[bool]] | None = None,
    seeds: tuple[int, ...] = DEFAULT_FEWSHOT_SEEDS,
) -> dict[str, float]:
    """Produce one decision threshold per label under ``strategy``."""
    if strategy.kind == CDF_LABEL:
        if priors is None:
            raise UsageError("cdf-label calibration needs per-label priors")
        missing = set(scores) - set(priors)
        if missing:
            raise DataError(f"missing priors for labels: {sorted(missing)}")
        return {label: cdf_label_kappa(scores[label], priors[label]) for label in scores}
    if strategy.kind == CDF_50:
        return {label: cdf50_kappa(scores[label]) for label in scores}
    if strategy.kind == FEWSHOT:
        if gold is None:
            raise UsageError("fewshot calibration needs gold labels")
        draws = [fewshot_kappas(scores, gold, strategy.fewshot_n, seed) for seed in seeds]
        return {
            label: sum(draw[label] for draw in draws) / len(draws) for label in scores
        }
    if strategy.kind == FIXED:
        return load_fixed_thresholds(strategy.fixed_path, set(scores))
    raise UsageError(f"unknown threshold strategy {strategy.kind!r}")


def load_fixed_thresholds(path: str | Path, labels: set[str] | None = None) -> dict[str, float]:
    try:
        doc = json.loads(Path(path).read_text())
        kappas = {str(k): float(v) for k, v in doc.items()}
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise DataError(f"cannot load thresholds from {path}: {exc}") from exc
    if labels is not None and set(kappas) != labels:
        raise DataError(
            f"threshold file labels {sorted(kappas)} do not match task labels {sorted(labels)}"
        )
    return kappas
