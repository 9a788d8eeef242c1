"""Command-line surface.

Commands: ``answer`` (one example), ``eval`` (a labeled dataset),
``graph`` (build, score, and dump one reasoning graph), ``calibrate``
(decision thresholds from a scored dataset), ``overlap`` (knowledge-base
contamination check).  Every flag can also be given in a TOML or JSON
config file (``--config``); explicit flags win.  Exit codes: 0 success,
1 usage error, 2 data error, 3 backend error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .aggregate import AGGREGATORS, AggregationConfig, threshold_decide
from .datasets import (
    SocialIQAExample,
    StoryExample,
    detect_overlap,
    gold_vector,
    load_socialiqa,
    load_storycommonsense,
)
from .decoding import DecodeStrategy
from .errors import BackendError, DataError, UsageError
from .graph import TASK_SOCIALIQA, TASK_STORYCS, TASKS
from .metrics import (
    MetricsReport,
    ThresholdStrategy,
    accuracy_report,
    calibrate_thresholds,
    load_fixed_thresholds,
    multilabel_report,
)
from .model import Relation, TableModel
from .pipeline import Engine, EngineConfig, PredictionResult
from .remote import RemoteModel
from .scoring import PLUTCHIK_LABELS

DEFAULTS = {
    "backend": None,
    "task": TASK_SOCIALIQA,
    "levels": 2,
    "decode": "greedy",
    "seed": 0,
    "gamma_g": 1.0,
    "gamma_ga": 1.0,
    "beta": "1",
    "aggregator": "ve",
    "pmi": "on",
    "thresholds": "cdf-label",
    "prune": "on",
    "anonymize": "on",
    "max_length": 16,
    "marginal_context": "",
    "relations": "",
    "end_token": "</s>",
    "workers": 1,
}


@dataclass
class RunConfig:
    """Fully resolved run settings (config file merged with flags)."""

    backend: str
    task: str
    engine: EngineConfig
    thresholds: ThresholdStrategy
    seed: int
    workers: int
    end_token: str = "</s>"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML or JSON file mirroring the flags")
    parser.add_argument("--backend", help="table:PATH or remote:URL")
    parser.add_argument("--task", choices=TASKS)
    parser.add_argument("--levels", type=int, help="graph depth L (default 2)")
    parser.add_argument("--decode", help="greedy | beam:B | topk:K")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--gamma-g", dest="gamma_g", type=float)
    parser.add_argument("--gamma-ga", dest="gamma_ga", type=float)
    parser.add_argument("--beta", help="level weights: one value or L+1 comma-separated")
    parser.add_argument("--aggregator", choices=AGGREGATORS)
    parser.add_argument("--pmi", choices=("on", "off"))
    parser.add_argument("--thresholds", help="cdf-label | cdf-50 | fewshot:N | fixed:PATH")
    parser.add_argument("--prune", choices=("on", "off"))
    parser.add_argument("--anonymize", choices=("on", "off"))
    parser.add_argument("--max-length", dest="max_length", type=int)
    parser.add_argument("--marginal-context", dest="marginal_context")
    parser.add_argument("--relations", help="comma-separated relation subset to expand")
    parser.add_argument("--end-token", dest="end_token",
                        help="end-of-sequence token of a remote backend")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--out", help="output file path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynkg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_answer = sub.add_parser("answer", help="answer a single example")
    _add_common_flags(p_answer)
    p_answer.add_argument("--context")
    p_answer.add_argument("--question")
    p_answer.add_argument("--answer", action="append", default=None,
                          help="answer candidate (repeat 3x for multiple choice)")
    p_answer.add_argument("--character", help="annotated character (story task)")
    p_answer.add_argument("--dump-graph", dest="dump_graph", help="write the graph JSON here")

    p_eval = sub.add_parser("eval", help="evaluate a labeled dataset")
    _add_common_flags(p_eval)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--priors", help="JSON file of per-label positive rates")
    p_eval.add_argument("--metrics-out", dest="metrics_out", help="write the metrics JSON here")

    p_graph = sub.add_parser("graph", help="build, score, and dump one graph")
    _add_common_flags(p_graph)
    p_graph.add_argument("--context", required=True)
    p_graph.add_argument("--question")
    p_graph.add_argument("--answer", action="append", default=None)

    p_cal = sub.add_parser("calibrate", help="calibrate decision thresholds")
    _add_common_flags(p_cal)
    p_cal.add_argument("--data", required=True)
    p_cal.add_argument("--priors", help="JSON file of per-label positive rates")

    p_overlap = sub.add_parser("overlap", help="check dataset/KB contamination")
    _add_common_flags(p_overlap)
    p_overlap.add_argument("--data", required=True)
    p_overlap.add_argument("--kb", required=True,
                           help="JSON file: [{event, tails: [..]}, ...]")
    return parser


def _load_config_file(path: str) -> dict:
    text = Path(path).read_text()
    if path.endswith(".json"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad JSON config {path}: {exc}") from exc
    if path.endswith(".toml"):
        try:
            import tomllib  # type: ignore[import-not-found]
        except ImportError:
            import tomli as tomllib  # type: ignore[no-redef]
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"bad TOML config {path}: {exc}") from exc
    raise UsageError(f"config file must end in .json or .toml: {path}")


def _merge_settings(args: argparse.Namespace) -> dict:
    file_settings = _load_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_settings) - set(DEFAULTS)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    settings = dict(DEFAULTS)
    settings.update(file_settings)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _parse_betas(spec, levels: int) -> tuple[float, ...]:
    if isinstance(spec, (int, float)):
        values = [float(spec)]
    else:
        try:
            values = [float(part) for part in str(spec).split(",") if part.strip()]
        except ValueError:
            raise UsageError(f"bad --beta value {spec!r}") from None
    if len(values) == 1:
        return tuple(values) * (levels + 1)
    if len(values) != levels + 1:
        raise UsageError(f"--beta needs 1 or {levels + 1} values for L={levels}")
    return tuple(values)


def _flag(value, name: str) -> bool:
    if isinstance(value, bool):
        return value
    if value in ("on", "off"):
        return value == "on"
    raise UsageError(f"--{name} must be on or off, got {value!r}")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    s = _merge_settings(args)
    if not s["backend"]:
        raise UsageError("--backend is required (table:PATH or remote:URL)")
    try:
        strategy = DecodeStrategy.parse(
            str(s["decode"]), max_length=int(s["max_length"]), seed=int(s["seed"])
        )
        aggregation = AggregationConfig(
            gamma_g=float(s["gamma_g"]),
            gamma_ga=float(s["gamma_ga"]),
            betas=_parse_betas(s["beta"], int(s["levels"])),
            aggregator=str(s["aggregator"]),
        )
        relations = tuple(
            Relation(name.strip())
            for name in str(s["relations"]).split(",")
            if name.strip()
        )
        engine = EngineConfig(
            task=str(s["task"]),
            levels=int(s["levels"]),
            strategy=strategy,
            aggregation=aggregation,
            pmi=_flag(s["pmi"], "pmi"),
            marginal=str(s["marginal_context"]),
            prune=_flag(s["prune"], "prune"),
            anonymize=_flag(s["anonymize"], "anonymize"),
            relations=relations,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return RunConfig(
        backend=str(s["backend"]),
        task=str(s["task"]),
        engine=engine,
        thresholds=ThresholdStrategy.parse(str(s["thresholds"])),
        seed=int(s["seed"]),
        workers=max(1, int(s["workers"])),
        end_token=str(s["end_token"]),
    )


def make_model(backend_spec: str, end_token: str = "</s>"):
    kind, _, arg = backend_spec.partition(":")
    if kind == "table" and arg:
        return TableModel.load(arg)  # table files carry their own end token
    if kind == "remote" and arg:
        return RemoteModel(arg, end_token=end_token)
    raise UsageError(f"bad backend spec {backend_spec!r}; use table:PATH or remote:URL")


def _write_lines(path: str | None, lines: list[str]) -> None:
    if path:
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


# -- commands ---------------------------------------------------------------


def _cmd_answer(args) -> int:
    config = resolve_config(args)
    model = make_model(config.backend, config.end_token)
    engine = Engine(model, config.engine)
    if config.task == TASK_SOCIALIQA:
        if not (args.context and args.question and args.answer):
            raise UsageError("answer needs --context, --question, and --answer flags")
        if len(args.answer) != 3:
            raise UsageError("the multiple-choice task takes exactly 3 --answer flags")
        example = SocialIQAExample(
            context=args.context, question=args.question, answers=tuple(args.answer)
        )
        result, graph = engine.answer(example)
    else:
        if not args.context:
            raise UsageError("answer needs --context for the story task")
        sentences = _pad_story_sentences(args.context)
        story = StoryExample(
            story_id="cli",
            sentences=sentences,
            character=args.character or "",
            sentence_index=_last_nonempty_index(sentences),
        )
        result, graph = engine.score_story(story)
        if config.thresholds.kind == "fixed":
            kappas = load_fixed_thresholds(config.thresholds.fixed_path, set(PLUTCHIK_LABELS))
            result.kappas = kappas
            result.decisions = threshold_decide(result.label_scores, kappas)
    if getattr(args, "dump_graph", None):
        graph.save(args.dump_graph)
    line = json.dumps(result.to_json())
    _write_lines(args.out, [line])
    _print_result(result)
    return 0


def _pad_story_sentences(context: str) -> tuple[str, str, str, str, str]:
    # one CLI context string stands in for the annotated story prefix
    parts = [context, "", "", "", ""]
    return tuple(parts[:5])


def _last_nonempty_index(sentences) -> int:
    index = 1
    for i, s in enumerate(sentences, start=1):
        if s.strip():
            index = i
    return index


def _print_result(result: PredictionResult) -> None:
    if result.chosen_index is not None:
        for i, (text, b) in enumerate(zip(result.answers, result.breakdowns)):
            marker = "*" if i == result.chosen_index else " "
            levels = ", ".join(
                "-inf" if x == float("-inf") else f"{x:.4f}" for x in b.per_level
            )
            print(f"{marker} [{i}] {text}: total {b.total:.6f} (levels: {levels})")
    if result.label_scores is not None:
        for label in result.labels or result.label_scores:
            score = result.label_scores[label]
            suffix = ""
            if result.decisions is not None:
                suffix = "  -> positive" if result.decisions[label] else "  -> negative"
            print(f"{label:<13}{score: .6f}{suffix}")


def _cmd_graph(args) -> int:
    config = resolve_config(args)
    model = make_model(config.backend, config.end_token)
    engine = Engine(model, config.engine)
    if config.task == TASK_SOCIALIQA:
        if not (args.question and args.answer):
            raise UsageError("graph needs --question and --answer flags for this task")
        example = SocialIQAExample(
            context=args.context, question=args.question, answers=tuple(args.answer)
        )
        _, graph = engine.answer(example)
    else:
        sentences = _pad_story_sentences(args.context)
        story = StoryExample(
            story_id="cli",
            sentences=sentences,
            character="",
            sentence_index=_last_nonempty_index(sentences),
        )
        _, graph = engine.score_story(story)
    out = args.out or "graph.json"
    graph.save(out)
    stats = graph.to_json()["stats"]
    print(f"wrote {out}: {stats['nodes']} nodes, {stats['edges']} edges")
    return 0


def _run_socialiqa(engine: Engine, examples, workers: int) -> list[PredictionResult]:
    def run_one(item):
        index, example = item
        result, _ = engine.answer(example, example_id=str(index), example_index=index)
        return result

    if workers <= 1:
        return [run_one(item) for item in enumerate(examples)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_one, enumerate(examples)))


def _run_story(engine: Engine, examples, workers: int) -> list[PredictionResult]:
    def run_one(item):
        index, story = item
        result, _ = engine.score_story(story, example_id=str(index), example_index=index)
        return result

    if workers <= 1:
        return [run_one(item) for item in enumerate(examples)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_one, enumerate(examples)))


def _story_scores_and_gold(results, examples):
    scores = {label: [r.label_scores[label] for r in results] for label in PLUTCHIK_LABELS}
    gold = None
    if all(e.gold_labels is not None for e in examples):
        vectors = [gold_vector(e) for e in examples]
        gold = {
            label: [v[i] for v in vectors] for i, label in enumerate(PLUTCHIK_LABELS)
        }
    return scores, gold


def _story_priors(args, gold) -> dict[str, float] | None:
    if getattr(args, "priors", None):
        try:
            doc = json.loads(Path(args.priors).read_text())
            return {str(k): float(v) for k, v in doc.items()}
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
            raise DataError(f"cannot load priors from {args.priors}: {exc}") from exc
    if gold is None:
        return None
    return {
        label: max(sum(flags) / len(flags), 1e-9) if flags else 0.5
        for label, flags in gold.items()
    }


def _cmd_eval(args) -> int:
    config = resolve_config(args)
    model = make_model(config.backend, config.end_token)
    engine = Engine(model, config.engine)
    if config.task == TASK_SOCIALIQA:
        examples, dropped = load_socialiqa(args.data)
        if any(e.gold_index is None for e in examples):
            raise DataError("eval needs labeled data (missing gold labels)")
        results = _run_socialiqa(engine, examples, config.workers)
        predictions = [r.chosen_index for r in results]
        golds = [e.gold_index for e in examples]
        report = accuracy_report(predictions, golds, TASK_SOCIALIQA)
        if dropped:
            print(f"dropped {dropped} blocklisted rows")
    else:
        examples = load_storycommonsense(args.data)
        if any(e.gold_labels is None for e in examples):
            raise DataError("eval needs labeled data (missing gold labels)")
        results = _run_story(engine, examples, config.workers)
        scores, gold = _story_scores_and_gold(results, examples)
        priors = _story_priors(args, gold)
        kappas = calibrate_thresholds(
            scores, config.thresholds, priors=priors, gold=gold
        )
        decisions = []
        for r in results:
            r.kappas = kappas
            r.decisions = threshold_decide(r.label_scores, kappas)
            decisions.append(r.decisions)
        gold_maps = [
            dict(zip(PLUTCHIK_LABELS, gold_vector(e))) for e in examples
        ]
        report = multilabel_report(decisions, gold_maps, PLUTCHIK_LABELS, TASK_STORYCS)
    _write_lines(args.out, [json.dumps(r.to_json()) for r in results])
    if getattr(args, "metrics_out", None):
        Path(args.metrics_out).write_text(json.dumps(report.to_json(), indent=2) + "\n")
    for line in report.summary_lines():
        print(line)
    return 0


def _cmd_calibrate(args) -> int:
    config = resolve_config(args)
    if config.task != TASK_STORYCS:
        raise UsageError("calibrate applies to the story task (--task storycs)")
    model = make_model(config.backend, config.end_token)
    engine = Engine(model, config.engine)
    examples = load_storycommonsense(args.data)
    results = _run_story(engine, examples, config.workers)
    scores, gold = _story_scores_and_gold(results, examples)
    priors = _story_priors(args, gold)
    kappas = calibrate_thresholds(scores, config.thresholds, priors=priors, gold=gold)
    doc = {label: kappas[label] for label in PLUTCHIK_LABELS}
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _cmd_overlap(args) -> int:
    resolve_config_or_default(args)
    examples, _ = load_socialiqa(args.data)
    try:
        kb = json.loads(Path(args.kb).read_text())
        events = [entry["event"] for entry in kb]
        tails = {entry["event"]: list(entry.get("tails", [])) for entry in kb}
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"cannot load KB events from {args.kb}: {exc}") from exc
    report = detect_overlap(
        [e.context for e in examples], events, tails, [e.answers for e in examples]
    )
    summary = {
        "total": report["total"],
        "flagged_count": report["flagged_count"],
        "rate": report["rate"],
    }
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(summary))
    return 0


def resolve_config_or_default(args) -> None:
    # overlap needs no backend; still validate any config file given
    if getattr(args, "config", None):
        _merge_settings(args)


_COMMANDS = {
    "answer": _cmd_answer,
    "eval": _cmd_eval,
    "graph": _cmd_graph,
    "calibrate": _cmd_calibrate,
    "overlap": _cmd_overlap,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
