#!/usr/bin/env python3
"""Sweep graph-construction decoding strategies over a labeled dataset.

For each strategy, evaluates accuracy under both aggregators and reports
the average constructed graph size.  Defaults exercise the bundled demo
model and dataset:

    python scripts/decode_sweep.py \
        --backend tests/fixtures/tiny_model.json \
        --data tests/fixtures/socialiqa_dev.jsonl \
        --relations xWant,xReact
"""

import argparse

from dynkg.aggregate import AggregationConfig
from dynkg.datasets import load_socialiqa
from dynkg.decoding import DecodeStrategy
from dynkg.graph import graph_stats
from dynkg.model import Relation, TableModel
from dynkg.pipeline import Engine, EngineConfig

STRATEGIES = ["greedy", "beam:5", "beam:10", "topk:5", "topk:10"]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--backend", required=True, help="table model JSON file")
    parser.add_argument("--data", required=True, help="labeled JSON-lines dataset")
    parser.add_argument("--levels", type=int, default=2)
    parser.add_argument("--relations", default="", help="comma-separated subset")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    model = TableModel.load(args.backend)
    examples, _ = load_socialiqa(args.data)
    relations = tuple(
        Relation(name) for name in args.relations.split(",") if name
    )

    print(f"{'strategy':<10} {'nodes':>7} {'edges':>7} {'acc(ve)':>8} {'acc(max)':>9}")
    for spec in STRATEGIES:
        strategy = DecodeStrategy.parse(spec, seed=args.seed)
        accuracies = {}
        sizes = None
        for aggregator in ("ve", "max"):
            config = EngineConfig(
                levels=args.levels,
                strategy=strategy,
                aggregation=AggregationConfig(aggregator=aggregator),
                relations=relations,
            )
            engine = Engine(model, config)
            correct = 0
            nodes = edges = 0
            for index, example in enumerate(examples):
                result, graph = engine.answer(
                    example, example_id=str(index), example_index=index
                )
                stats = graph_stats(graph)
                nodes += stats["nodes"]
                edges += stats["edges"]
                correct += int(result.chosen_index == example.gold_index)
            accuracies[aggregator] = correct / len(examples)
            sizes = (nodes / len(examples), edges / len(examples))
        print(
            f"{spec:<10} {sizes[0]:>7.1f} {sizes[1]:>7.1f}"
            f" {accuracies['ve']:>8.3f} {accuracies['max']:>9.3f}"
        )


if __name__ == "__main__":
    main()
