import pytest

from duplexkit.reward import (
    THINKING_STEP_VALUES,
    JudgeUnavailable,
    JudgeVerdict,
    StubJudge,
    normalize_answer,
    parse_output,
    score_accuracy,
    score_format,
    score_total,
    score_with_judge,
)

PERFECT = ("<think>The sky scatters blue light, so the answer is B.</think>"
           "<answer>B</answer>")


class FailingJudge:
    def judge(self, think, answer, gold):
        raise JudgeUnavailable("offline")


class FixedJudge:
    def __init__(self, consistency, steps):
        self.verdict = JudgeVerdict(consistency, steps)

    def judge(self, think, answer, gold):
        return self.verdict


class TestParseOutput:
    def test_tagged_output(self):
        out = parse_output("<think>A beats B</think><answer>B</answer>")
        assert out.parsed.think == "A beats B"
        assert out.parsed.answer == "B"

    def test_untagged_output(self):
        assert parse_output("answer: B").parsed is None

    def test_noise_between_sections_allowed(self):
        out = parse_output("<think>x</think> noise <answer>y</answer>")
        assert out.parsed.think == "x"
        assert out.parsed.answer == "y"

    def test_wrong_order_rejected(self):
        assert parse_output("<answer>y</answer><think>x</think>").parsed is None

    def test_dot_matches_newlines(self):
        out = parse_output("<think>line one\nline two</think>\n<answer>z\nw</answer>")
        assert out.parsed.think == "line one\nline two"
        assert out.parsed.answer == "z\nw"

    def test_first_match_wins(self):
        out = parse_output("<think>a</think><answer>1</answer>"
                           "<think>b</think><answer>2</answer>")
        assert out.parsed.think == "a"
        assert out.parsed.answer == "1"

    def test_lazy_captures_stop_at_first_close(self):
        out = parse_output("<think>a</think>b</think><answer>c</answer>")
        assert out.parsed.think == "a"


class TestScoreFormat:
    def test_tagged_scores_one(self):
        assert score_format(parse_output(PERFECT)) == 1

    def test_untagged_scores_zero(self):
        assert score_format(parse_output("B")) == 0

    def test_reordered_scores_zero(self):
        assert score_format(parse_output("<answer>x</answer><think>y</think>")) == 0


class TestScoreAccuracy:
    def test_exact_match(self):
        acc, flags = score_accuracy(parse_output(PERFECT), "B")
        assert (acc, flags) == (1, [])

    def test_normalization_strips_case_and_punctuation(self):
        out = parse_output("<think>t</think><answer> b. </answer>")
        assert score_accuracy(out, "B")[0] == 1
        assert normalize_answer(" The Cat!! ") == "the cat!!".rstrip("!")

    def test_missing_answer_flagged_not_raised(self):
        acc, flags = score_accuracy(parse_output("just text"), "B")
        assert acc == 0
        assert flags == ["missing_answer"]

    def test_option_letter_and_text_interchangeable(self):
        options = {"A": "red", "B": "blue"}
        letter_answer = parse_output("<think>t</think><answer>B</answer>")
        text_answer = parse_output("<think>t</think><answer>blue</answer>")
        assert score_accuracy(letter_answer, "blue", options)[0] == 1
        assert score_accuracy(text_answer, "B", options)[0] == 1
        assert score_accuracy(text_answer, "A", options)[0] == 0

    def test_wrong_answer(self):
        out = parse_output("<think>t</think><answer>C</answer>")
        assert score_accuracy(out, "B")[0] == 0


class TestStubJudge:
    def test_consistency_requires_answer_token_in_think(self):
        verdict = StubJudge().judge("clearly b wins", "B", "B")
        assert verdict.consistency is True
        verdict = StubJudge().judge("no mention here", "B", "B")
        assert verdict.consistency is False

    def test_multiword_answer_matches_as_phrase(self):
        verdict = StubJudge().judge("it is the blue whale obviously", "blue whale", "")
        assert verdict.consistency is True

    def test_all_five_checks_pass(self):
        # non-empty; 10 words >= 5; ',' + '.' = 2 clause chars; 'so'
        # connective; 51 chars <= 600 -> 5 steps
        think = "The sky scatters blue light, so the answer is B."
        assert StubJudge().judge(think, "B", "B").thinking_steps == 5

    def test_minimal_think_scores_two(self):
        # non-empty (1) + short (no) + no clause chars (no) + no connective
        # (no) + concise (1) -> 2 steps
        assert StubJudge().judge("B", "B", "B").thinking_steps == 2

    def test_empty_think_scores_one(self):
        # only the conciseness check passes on the empty string
        assert StubJudge().judge("", "B", "B").thinking_steps == 1

    def test_overlong_think_loses_conciseness(self):
        think = ("because reasoning, goes on. and on. " * 30)  # > 600 chars
        verdict = StubJudge().judge(think, "B", "B")
        assert verdict.thinking_steps == 4


class TestScoreWithJudge:
    def test_unparsed_output_scores_zero_without_judge_call(self):
        class Exploding:
            def judge(self, *args):
                raise AssertionError("must not be called")

        cons, think, flags = score_with_judge(parse_output("plain"), Exploding())
        assert (cons, think, flags) == (0, 0.0, [])

    def test_steps_scale_by_fifth(self):
        cons, think, _ = score_with_judge(parse_output(PERFECT), FixedJudge(True, 3))
        assert cons == 1
        assert think == 0.6

    def test_judge_unavailable_zeroes_and_flags(self):
        cons, think, flags = score_with_judge(parse_output(PERFECT), FailingJudge())
        assert (cons, think) == (0, 0.0)
        assert flags and flags[0].startswith("judge_unavailable")

    def test_verdict_range_enforced(self):
        with pytest.raises(ValueError):
            JudgeVerdict(True, 6)


class TestScoreTotal:
    def test_perfect_output_scores_four(self):
        breakdown = score_total(PERFECT, "B")
        assert breakdown.total == 4.0
        assert (breakdown.accuracy, breakdown.format, breakdown.consistency,
                breakdown.thinking) == (1, 1, 1, 1.0)

    def test_component_sum_three_point_six(self):
        breakdown = score_total(PERFECT, "B", judge=FixedJudge(True, 3))
        assert breakdown.thinking == 0.6
        assert breakdown.total == 3.6

    def test_untagged_wrong_answer_scores_zero(self):
        breakdown = score_total("no tags at all", "B")
        assert breakdown.total == 0.0
        assert "missing_answer" in breakdown.flags

    def test_totals_bounded_and_thinking_quantized(self):
        outputs = [
            PERFECT,
            "<think></think><answer>B</answer>",
            "<think>short</think><answer>C</answer>",
            "nothing",
            "<answer>B</answer><think>reversed</think>",
        ]
        for raw in outputs:
            breakdown = score_total(raw, "B")
            assert 0.0 <= breakdown.total <= 4.0
            assert breakdown.thinking in THINKING_STEP_VALUES

    def test_deterministic(self):
        first = score_total(PERFECT, "B")
        second = score_total(PERFECT, "B")
        assert first == second
