"""Composite reward for structured audio-reasoning outputs.

Four components, summed: accuracy (final answer matches gold), format (the
output carries think and answer sections in order), consistency (the
reasoning agrees with the conclusion, judged), and thinking quality (0 to 1
in 0.2 steps, judged). A deterministic stub judge ships for tests and
offline use; a real judge attaches over the line-delimited wire protocol.

Section extraction is first-match with dot-matching-newline and lazy inner
captures: the first think block, then the first answer block after it,
with arbitrary noise allowed in between.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Protocol

from .wire import LineChannel, WireError

OUTPUT_PATTERN = re.compile(r"<think>(.*?)</think>.*?<answer>(.*?)</answer>", re.DOTALL)

THINKING_STEP_VALUES = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True, slots=True)
class ParsedOutput:
    think: str
    answer: str


@dataclass(frozen=True, slots=True)
class ModelOutput:
    raw_text: str
    parsed: ParsedOutput | None = None


@dataclass(frozen=True, slots=True)
class JudgeVerdict:
    consistency: bool
    thinking_steps: int

    def __post_init__(self) -> None:
        if not 0 <= self.thinking_steps <= 5:
            raise ValueError(f"thinking_steps must be in 0..5, got {self.thinking_steps}")


@dataclass(frozen=True, slots=True)
class RewardBreakdown:
    accuracy: int
    format: int
    consistency: int
    thinking: float
    total: float
    flags: tuple[str, ...] = ()


class Judge(Protocol):
    def judge(self, think: str, answer: str, gold: str) -> JudgeVerdict: ...


class JudgeUnavailable(Exception):
    """The judge could not produce a verdict for this item."""


def parse_output(raw_text: str) -> ModelOutput:
    match = OUTPUT_PATTERN.search(raw_text)
    if match is None:
        return ModelOutput(raw_text=raw_text)
    return ModelOutput(raw_text=raw_text,
                       parsed=ParsedOutput(think=match.group(1), answer=match.group(2)))


def score_format(output: ModelOutput) -> int:
    return 1 if output.parsed is not None else 0


def normalize_answer(text: str) -> str:
    return text.strip().casefold().rstrip(".,!?;: ")


def score_accuracy(
    output: ModelOutput,
    gold: str,
    options: dict[str, str] | None = None,
) -> tuple[int, list[str]]:
    """1 when the normalized answer matches gold; 0 otherwise.

    With an option map, either the option letter or its full text is
    accepted on both sides. A missing answer section scores 0 and raises a
    flag rather than an exception.
    """
    if output.parsed is None:
        return 0, ["missing_answer"]
    answer = normalize_answer(output.parsed.answer)
    accepted = {normalize_answer(gold)}
    if options:
        gold_key = normalize_answer(gold)
        for letter, option_text in options.items():
            letter_n = normalize_answer(letter)
            text_n = normalize_answer(option_text)
            if gold_key in (letter_n, text_n):
                accepted.update({letter_n, text_n})
    return (1 if answer in accepted else 0), []


# Deterministic stub judge. Consistency asks whether the answer token shows
# up in the reasoning; thinking quality averages five 0/1 checks (one per
# quality dimension) and lands directly on a 0.2 step.
STUB_MIN_WORDS = 5
STUB_MAX_CHARS = 600
STUB_CLAUSE_CHARS = ",.;!?"
STUB_CONNECTIVES = ("because", "since", "therefore", "thus", "so", "first",
                    "then", "hence", "implies")


class StubJudge:
    def judge(self, think: str, answer: str, gold: str) -> JudgeVerdict:
        words = [normalize_answer(w) for w in think.split()]
        answer_n = normalize_answer(answer)
        if " " in answer_n:
            consistent = answer_n in " ".join(words)
        else:
            consistent = answer_n != "" and answer_n in words
        checks = (
            bool(think.strip()),
            len(think.split()) >= STUB_MIN_WORDS,
            sum(think.count(ch) for ch in STUB_CLAUSE_CHARS) >= 2,
            any(conn in words for conn in STUB_CONNECTIVES),
            len(think) <= STUB_MAX_CHARS,
        )
        return JudgeVerdict(consistency=consistent, thinking_steps=sum(checks))


class ExternalJudge:
    """Judge adapter over the wire protocol.

    Sends ``{"think", "answer", "gold"}`` and expects ``{"consistency":
    bool, "steps": 0..5}``; wire failures surface as JudgeUnavailable so
    batches can continue with zeroed components.
    """

    DEFAULT_TIMEOUT_S = 10.0

    def __init__(self, channel: LineChannel):
        self._channel = channel

    def judge(self, think: str, answer: str, gold: str) -> JudgeVerdict:
        try:
            reply = self._channel.request({"think": think, "answer": answer, "gold": gold})
            return JudgeVerdict(consistency=bool(reply["consistency"]),
                                thinking_steps=int(reply["steps"]))
        except (WireError, KeyError, TypeError, ValueError) as exc:
            raise JudgeUnavailable(str(exc)) from exc

    def close(self) -> None:
        self._channel.close()

    def __enter__(self) -> "ExternalJudge":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def score_with_judge(output: ModelOutput, judge: Judge,
                     gold: str = "") -> tuple[int, float, list[str]]:
    """Judge-backed components: (consistency, thinking, flags).

    Both are zero when there is nothing parsed to judge, and zero with a
    flag when the judge is unavailable.
    """
    if output.parsed is None:
        return 0, 0.0, []
    try:
        verdict = judge.judge(output.parsed.think, output.parsed.answer, gold)
    except JudgeUnavailable as exc:
        return 0, 0.0, [f"judge_unavailable: {exc}"]
    return (1 if verdict.consistency else 0), verdict.thinking_steps / 5, []


def score_total(
    output: ModelOutput | str,
    gold: str,
    judge: Judge | None = None,
    options: dict[str, str] | None = None,
) -> RewardBreakdown:
    """Compose the four components; the total is their exact sum."""
    if isinstance(output, str):
        output = parse_output(output)
    the_judge = judge if judge is not None else StubJudge()
    fmt = score_format(output)
    accuracy, flags = score_accuracy(output, gold, options)
    consistency, thinking, judge_flags = score_with_judge(output, the_judge, gold)
    all_flags = tuple(flags + judge_flags)
    total = accuracy + fmt + consistency + thinking
    return RewardBreakdown(accuracy=accuracy, format=fmt, consistency=consistency,
                           thinking=thinking, total=total, flags=all_flags)
