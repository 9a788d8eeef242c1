import math

import pytest
from hypothesis import given, settings, strategies as st

from dynkg.decoding import DecodeStrategy, Generation
from dynkg.errors import DataError
from dynkg.graph import (
    ReasoningGraph,
    STORY_RELATIONS,
    TASK_SOCIALIQA,
    TASK_STORYCS,
    attach_answers,
    expand_level,
    graph_stats,
    has_verb,
    is_verb,
    prune,
)
from dynkg.model import ALL_RELATIONS, Relation, TableModel
from dynkg.toys import random_instance
from prune_fixtures import PRUNE_CASES


def make_model(rules, vocab, smoothing=0.0, end="END"):
    max_order = max((len(p) for (_, _, p) in rules), default=0)
    return TableModel(
        vocabulary=frozenset(vocab) | {end},
        max_order=max_order,
        smoothing_mass=smoothing,
        end_token=end,
        rules=rules,
    )


def hop_model():
    """Greedy hop from "c" scores exactly -1.0; from "x" exactly -0.5."""
    lp1 = -1.0  # p ~ .368, argmax in its rule
    lp2 = -0.5  # p ~ .607
    rules = {
        (("c",), "xWant", ()): {
            "x": lp1,
            "y": math.log(0.35),
            "END": math.log(1 - math.exp(lp1) - 0.35),
        },
        (("c",), "xWant", ("x",)): {"END": 0.0},
        (("x",), "xWant", ()): {
            "z": lp2,
            "y": math.log(0.3),
            "END": math.log(1 - math.exp(lp2) - 0.3),
        },
        (("x",), "xWant", ("z",)): {"END": 0.0},
    }
    return make_model(rules, ["c", "x", "y", "z"])


def gen(text, score, relation=Relation.xWant):
    return Generation(tokens=tuple(text.split()), avg_logprob=score, relation=relation)


class TestVerbDetection:
    @pytest.mark.parametrize("word", ["gets", "hurt", "went", "smiling", "cried", "is"])
    def test_verbs(self, word):
        assert is_verb(word)

    @pytest.mark.parametrize("word", ["happy", "doctor", "mess", "tired", "big"])
    def test_non_verbs(self, word):
        assert not is_verb(word)

    def test_has_verb(self):
        assert has_verb(("gets", "hurt"))
        assert not has_verb(("a", "big", "mess"))


class TestPrune:
    @pytest.mark.parametrize("candidates,relation,task,expected", PRUNE_CASES)
    def test_fixture(self, candidates, relation, task, expected):
        gens = [gen(text, score, relation) for text, score in candidates]
        assert [g.text for g in prune(gens, relation, task)] == expected

    @pytest.mark.parametrize("candidates,relation,task,expected", PRUNE_CASES)
    def test_idempotent(self, candidates, relation, task, expected):
        gens = [gen(text, score, relation) for text, score in candidates]
        once = prune(gens, relation, task)
        assert prune(once, relation, task) == once

    def test_story_relation_restriction(self):
        with pytest.raises(ValueError):
            prune([], Relation.xWant, TASK_STORYCS)
        for relation in STORY_RELATIONS:
            prune([], relation, TASK_STORYCS)

    def test_unknown_task(self):
        with pytest.raises(ValueError):
            prune([], Relation.xWant, "quiz")


class TestExpand:
    def test_child_path_score_is_hop_score(self):
        graph = ReasoningGraph(root_text="c")
        expand_level(hop_model(), graph, 1, [Relation.xWant], DecodeStrategy())
        (node,) = graph.levels[0]
        assert node.path_score == -1.0
        assert node.parent == "root"
        assert node.text == "x"

    def test_grandchild_accumulates(self):
        graph = ReasoningGraph(root_text="c")
        expand_level(hop_model(), graph, 1, [Relation.xWant], DecodeStrategy())
        expand_level(hop_model(), graph, 2, [Relation.xWant], DecodeStrategy())
        (child,) = graph.levels[0]
        (grandchild,) = graph.levels[1]
        assert grandchild.path_score == -1.5
        assert grandchild.parent == child.id

    def test_out_of_order_expansion_rejected(self):
        graph = ReasoningGraph(root_text="c")
        with pytest.raises(ValueError):
            expand_level(hop_model(), graph, 2, [Relation.xWant], DecodeStrategy())

    def test_pruned_node_has_no_children(self):
        rules = {
            (("c",), "xWant", ()): {"none": math.log(0.9), "END": math.log(0.1)},
            (("c",), "xWant", ("none",)): {"END": 0.0},
        }
        model = make_model(rules, ["c", "none"])
        graph = ReasoningGraph(root_text="c")
        expand_level(model, graph, 1, [Relation.xWant], DecodeStrategy())
        assert graph.levels[0] == []

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_path_scores_match_rule_walk(self, seed):
        # every node's path score equals an independent recomputation by
        # walking the table rules greedily
        inst = random_instance(seed, levels=2)
        graph = ReasoningGraph(root_text=inst.context)
        for level in (1, 2):
            expand_level(inst.model, graph, level, inst.relations, DecodeStrategy())

        def greedy_walk(ctx_tokens, relation):
            tokens, total = [], 0.0
            for _ in range(16):
                from dynkg.model import ConditionalQuery

                dist = inst.model.next_token_logprobs(
                    ConditionalQuery(tuple(ctx_tokens), relation, tuple(tokens))
                )
                token = min(
                    (t for t, lp in dist.items() if lp > float("-inf")),
                    key=lambda t: (-dist[t], t),
                )
                if token == inst.model.end_token:
                    break
                tokens.append(token)
                total += dist[token]
            return tokens, total / len(tokens)

        by_id = {"root": ("", 0.0)}
        for node in graph.nodes():
            parent_text = inst.context if node.parent == "root" else by_id[node.parent][0]
            tokens, avg = greedy_walk(parent_text.split() or inst.context.split(), node.relation)
            parent_score = by_id[node.parent][1]
            assert node.text == " ".join(tokens)
            assert node.path_score == pytest.approx(parent_score + avg, abs=1e-12)
            by_id[node.id] = (node.text, node.path_score)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_path_score_monotone(self, seed):
        inst = random_instance(seed, levels=2, branch=2)
        graph = ReasoningGraph(root_text=inst.context)
        for level in (1, 2):
            expand_level(
                inst.model, graph, level, inst.relations, DecodeStrategy("beam", 64)
            )
        scores = {"root": 0.0}
        for node in graph.nodes():
            assert node.path_score <= scores[node.parent]
            scores[node.id] = node.path_score


class TestAttach:
    def test_factor_slot_count(self):
        inst = random_instance(0, levels=1, n_relations=3, branch=2)
        graph = ReasoningGraph(root_text=inst.context)
        expand_level(inst.model, graph, 1, inst.relations, DecodeStrategy("beam", 64))
        n = graph.inference_count()
        attach_answers(graph, ["w1", "w2", "w3"])
        assert len(graph.factors) == 3 * (n + 1)

    def test_degenerate_graph_keeps_root_edges(self):
        graph = ReasoningGraph(root_text="c")
        attach_answers(graph, ["a1", "a2", "a3"])
        assert len(graph.factors) == 3
        assert all(key[0] == "root" for key in graph.factors)

    def test_answers_connect_to_root_and_every_level(self):
        # two-level graph: each emotion leaf gets an edge slot to the root
        # and to every inference node at both levels
        graph = ReasoningGraph(root_text="c")
        expand_level(hop_model(), graph, 1, [Relation.xWant], DecodeStrategy())
        expand_level(hop_model(), graph, 2, [Relation.xWant], DecodeStrategy())
        attach_answers(graph, ["relieved", "scared", "anxious"])
        sources = {key[0] for key in graph.factors}
        assert sources == {"root"} | {n.id for n in graph.nodes()}
        for answer in graph.answers:
            assert all((src, answer.id) in graph.factors for src in sources)

    def test_empty_answer_set_rejected(self):
        with pytest.raises(DataError):
            attach_answers(ReasoningGraph(root_text="c"), [])

    def test_empty_answer_text_rejected(self):
        with pytest.raises(DataError):
            attach_answers(ReasoningGraph(root_text="c"), ["ok", ""])


class TestStats:
    def test_closed_form_without_pruning(self):
        # uniform-fallback model: every (node, relation) yields one greedy
        # candidate, so counts hit 1 + R + R^2 + |A| exactly
        model = TableModel(
            vocabulary=frozenset({"aa", "bb", "zz"}),
            max_order=0,
            smoothing_mass=1.0,
            end_token="zz",
            rules={},
        )
        graph = ReasoningGraph(root_text="aa bb")
        for level in (1, 2):
            expand_level(
                model, graph, level, ALL_RELATIONS, DecodeStrategy(max_length=3),
                prune_enabled=False,
            )
        attach_answers(graph, ["aa", "bb", "aa bb"])
        stats = graph_stats(graph)
        assert stats["nodes"] == 1 + 9 + 81 + 3 == 94
        assert stats["edges"] == 90 + 3 * 90

    @pytest.mark.parametrize(
        "nodes,edges",
        [(10.6, 26.4), (43.2, 156.8), (83.0, 316.2), (32.0, 111.9), (59.9, 223.8)],
    )
    def test_reported_row_consistency(self, nodes, edges):
        # published averages: n inference nodes with |A| = 3 must satisfy
        # edges = n + 3n within rounding
        n = nodes - 1 - 3
        assert abs((n + 3 * n) - edges) <= 0.3

    def test_stats_formula(self):
        inst = random_instance(4, levels=2, branch=2)
        graph = ReasoningGraph(root_text=inst.context)
        for level in (1, 2):
            expand_level(inst.model, graph, level, inst.relations, DecodeStrategy("beam", 64))
        attach_answers(graph, inst.answers)
        n = graph.inference_count()
        assert graph_stats(graph) == {"nodes": 1 + n + 3, "edges": n + 3 * n}


class TestSerialization:
    def build(self, seed=2):
        inst = random_instance(seed, levels=2, branch=2)
        graph = ReasoningGraph(root_text=inst.context)
        for level in (1, 2):
            expand_level(inst.model, graph, level, inst.relations, DecodeStrategy("beam", 8))
        attach_answers(graph, inst.answers)
        for key in graph.factors:
            graph.factors[key] = -abs(hash(key)) % 7 / 3.0
        return graph

    def test_roundtrip_identity(self):
        graph = self.build()
        again = ReasoningGraph.from_json(graph.to_json())
        assert again == graph

    def test_roundtrip_preserves_empty_levels(self):
        graph = ReasoningGraph(root_text="c")
        graph.levels = [[], []]
        graph.relation_sets = [[Relation.xWant], [Relation.xWant]]
        attach_answers(graph, ["a1"])
        again = ReasoningGraph.from_json(graph.to_json())
        assert again == graph

    def test_save_load(self, tmp_path):
        graph = self.build()
        path = tmp_path / "graph.json"
        graph.save(path)
        assert ReasoningGraph.load(path) == graph

    def test_dump_has_documented_fields(self):
        doc = self.build().to_json()
        assert list(doc) == ["root", "nodes", "answers", "relation_sets", "factors", "stats"]
        assert list(doc["nodes"][0]) == ["id", "text", "relation", "level", "parent", "path_score"]

    def test_malformed_rejected(self):
        with pytest.raises(DataError):
            ReasoningGraph.from_json({"root": "c"})
