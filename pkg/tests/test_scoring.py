import math

import pytest
from hypothesis import given, settings, strategies as st

from dynkg.errors import QuestionMappingError
from dynkg.model import Relation, TableModel
from dynkg.scoring import (
    AnswerScorer,
    EMOTION_ANSWERS,
    PLUTCHIK_LABELS,
    answer_factor,
    map_question_to_relation,
    prefix_inference,
    QuestionSpec,
    story_emotion_factor,
)


def make_model(rules, vocab, smoothing=0.0, end="END"):
    max_order = max((len(p) for (_, _, p) in rules), default=0)
    return TableModel(
        vocabulary=frozenset(vocab) | {end},
        max_order=max_order,
        smoothing_mass=smoothing,
        end_token=end,
        rules=rules,
    )


def scoring_model(cond_lp, marg_lp, answer="a", relation="xReact", ctx=("c",)):
    """Model where P(answer| ctx, rel) and P(answer | PersonX, rel) are exact."""

    def rule(lp):
        rest = 1.0 - math.exp(lp)
        return {answer: lp, "filler": math.log(rest)}

    rules = {
        (tuple(ctx), relation, ()): rule(cond_lp),
        (("PersonX",), relation, ()): rule(marg_lp),
    }
    return make_model(rules, [*ctx, "PersonX", answer, "filler"])


class TestPrefixInference:
    def test_attribute(self):
        assert prefix_inference("happy", Relation.xAttr) == "PersonX is happy"

    def test_want(self):
        assert prefix_inference("to go home", Relation.xWant) == "PersonX wants to go home"

    def test_effect(self):
        assert prefix_inference("gets hurt", Relation.xEffect) == "PersonX gets hurt"

    def test_all_relations_covered(self):
        for relation in Relation:
            assert prefix_inference("x", relation).startswith("PersonX")


class TestQuestionMapping:
    @pytest.mark.parametrize(
        "question,relation,character",
        [
            ("How would Jesse feel afterwards?", Relation.xReact, "Jesse"),
            ("How does Alice feel after?", Relation.xReact, "Alice"),
            ("How would Others feel as a result?", Relation.oReact, "Others"),
            ("What will Taylor want to do next?", Relation.xWant, "Taylor"),
            ("What will Others want to do next?", Relation.oWant, "Others"),
            ("How would you describe Quinn?", Relation.xAttr, "Quinn"),
            ("What does Tracy need to do before this?", Relation.xNeed, "Tracy"),
            ("Why did Quinn do this?", Relation.xIntent, "Quinn"),
            ("What will happen to Alex?", Relation.xEffect, "Alex"),
            ("What will happen to Others?", Relation.oEffect, "Others"),
            ("How would PersonX feel afterwards?", Relation.xReact, "PersonX"),
        ],
    )
    def test_inventory(self, question, relation, character):
        spec = map_question_to_relation(question)
        assert spec.relation is relation
        assert spec.character == character

    def test_unrecognized_raises(self):
        with pytest.raises(QuestionMappingError):
            map_question_to_relation("Who won the game?")

    def test_no_silent_default(self):
        with pytest.raises(QuestionMappingError):
            map_question_to_relation("")


class TestAnswerFactor:
    def question(self, relation=Relation.xReact):
        return QuestionSpec(raw_text="", relation=relation, character="PersonX")

    def test_equal_conditional_and_marginal_cancels(self):
        model = scoring_model(math.log(0.4), math.log(0.4))
        fv = answer_factor(model, "c", self.question(), ("a",), pmi=True)
        assert fv.value == pytest.approx(0.0, abs=1e-12)

    def test_log_ratio(self):
        model = scoring_model(math.log(0.4), math.log(0.1))
        fv = answer_factor(model, "c", self.question(), ("a",), pmi=True)
        assert fv.value == pytest.approx(math.log(4.0), abs=1e-12)
        assert fv.value == pytest.approx(1.386294, abs=1e-6)

    def test_pmi_off_uses_conditional_only(self):
        model = scoring_model(math.log(0.4), math.log(0.1))
        fv = answer_factor(model, "c", self.question(), ("a",), pmi=False)
        assert fv.value == fv.conditional_part == pytest.approx(math.log(0.4), abs=1e-12)
        assert fv.marginal_part == 0.0
        assert fv.value <= 0

    def test_decomposition_invariant(self):
        model = scoring_model(math.log(0.3), math.log(0.2))
        fv = answer_factor(model, "c", self.question(), ("a",), pmi=True)
        assert fv.value == pytest.approx(fv.conditional_part - fv.marginal_part, abs=1e-12)

    def test_two_token_answer_matches_token_walk(self):
        # brute-force re-walk over a seeded random table
        import random

        rng = random.Random(5)
        vocab = ["c", "PersonX", "u", "v"]
        rules = {}
        for ctx in (("c",), ("PersonX",)):
            for prefix in [(), ("u",)]:
                weights = [rng.random() + 0.1 for _ in ("u", "v")]
                total = sum(weights)
                rules[(ctx, "xReact", prefix)] = {
                    t: math.log(w / total) for t, w in zip(("u", "v"), weights)
                }
        model = make_model(rules, vocab)
        fv = answer_factor(model, "c", self.question(), ("u", "v"), pmi=True)
        cond = (
            rules[(("c",), "xReact", ())]["u"] + rules[(("c",), "xReact", ("u",))]["v"]
        ) / 2
        marg = (
            rules[(("PersonX",), "xReact", ())]["u"]
            + rules[(("PersonX",), "xReact", ("u",))]["v"]
        ) / 2
        assert fv.value == pytest.approx(cond - marg, abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(
        shift=st.floats(min_value=0.1, max_value=0.9),
        base=st.floats(min_value=0.05, max_value=0.5),
        marg=st.floats(min_value=0.05, max_value=0.5),
    )
    def test_prior_shift_cancels(self, shift, base, marg):
        # scaling the answer token's probability by the same factor in the
        # conditional and the marginal leaves the value unchanged
        plain = scoring_model(math.log(base), math.log(marg))
        scaled = scoring_model(math.log(base) + math.log(shift), math.log(marg) + math.log(shift))
        q = self.question()
        fv_plain = answer_factor(plain, "c", q, ("a",), pmi=True)
        fv_scaled = answer_factor(scaled, "c", q, ("a",), pmi=True)
        assert fv_scaled.value == pytest.approx(fv_plain.value, abs=1e-12)

    def test_marginal_cache_transparent(self):
        model = scoring_model(math.log(0.4), math.log(0.1))
        cached = AnswerScorer(model, pmi=True, cache=True)
        uncached = AnswerScorer(model, pmi=True, cache=False)
        for _ in range(3):
            a = cached.factor("c", Relation.xReact, ("a",))
            b = uncached.factor("c", Relation.xReact, ("a",))
            assert a == b

    def test_marginal_context_override(self):
        rules = {
            (("c",), "xReact", ()): {"a": math.log(0.4), "filler": math.log(0.6)},
            (("Person",), "xReact", ()): {"a": math.log(0.2), "filler": math.log(0.8)},
        }
        model = make_model(rules, ["c", "Person", "a", "filler"])
        fv = answer_factor(
            model, "c", self.question(), ("a",), pmi=True, marginal_ctx=("Person",)
        )
        assert fv.value == pytest.approx(math.log(2.0), abs=1e-12)


class TestStoryEmotionFactor:
    def story_model(self):
        # xReact value 2.0 (cond -0.5, marg -2.5); oReact value 1.0 (cond -1.0, marg -2.0)
        def rule(lp):
            return {"afraid": lp, "filler": math.log(1.0 - math.exp(lp))}

        rules = {
            (("c",), "xReact", ()): rule(-0.5),
            (("PersonX",), "xReact", ()): rule(-2.5),
            (("c",), "oReact", ()): rule(-1.0),
            (("PersonX",), "oReact", ()): rule(-2.0),
        }
        return make_model(rules, ["c", "PersonX", "afraid", "filler"])

    def test_fear_maps_to_afraid(self):
        assert EMOTION_ANSWERS["fear"] == "afraid"

    def test_mean_of_both_relations(self):
        fv = story_emotion_factor(self.story_model(), "c", "fear", pmi=True)
        assert fv.value == pytest.approx(1.5, abs=1e-12)

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError):
            story_emotion_factor(self.story_model(), "c", "calm")

    def test_label_inventory(self):
        assert PLUTCHIK_LABELS == (
            "disgust", "surprise", "fear", "anger", "trust", "anticipation",
            "sadness", "joy",
        )
        assert set(EMOTION_ANSWERS) == set(PLUTCHIK_LABELS)
