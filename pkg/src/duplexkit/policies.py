"""Bundled response policies: ground-truth oracle, degraded threshold
endpointer, a randomized grammar fuzzer, and the external wire adapter.

Apart from the oracle, which exists to read scenario ground truth in tests,
policies only ever see voice activity, chunk indices, and history; labels
are off limits.
"""

from __future__ import annotations

import random

from .core import FrameLabel, audio_token, placeholder_speak_slot, text_token
from .engine import (
    HOLD,
    TAKE_TURN,
    YIELD,
    Mode,
    Observation,
    PolicyDecision,
    continue_speaking,
)
from .simulator import Scenario
from .wire import LineChannel, WireError


def _placeholder_decision(chunk_index: int) -> PolicyDecision:
    slot = placeholder_speak_slot(chunk_index)
    return continue_speaking(slot.text, slot.audio)


class OraclePolicy:
    """Reads scenario ground truth and reacts perfectly.

    Takes the turn on the turn-end frame, holds through pauses, keeps
    speaking through backchannels, yields one chunk after a barge-in onset,
    and otherwise ends each response at its planned break chunk.
    """

    def __init__(self, scenario: Scenario):
        self._plans = scenario.plans
        self.reset()

    def reset(self) -> None:
        self._prev_annotation: FrameLabel | None = None
        self._plan_index = 0

    def decide(self, obs: Observation) -> PolicyDecision:
        annotation = obs.frame.annotation
        prev = self._prev_annotation
        self._prev_annotation = annotation

        if obs.state.mode is Mode.LISTENING:
            if annotation is FrameLabel.TURN_END:
                return TAKE_TURN
            return HOLD

        plan = self._plans[self._plan_index] if self._plan_index < len(self._plans) else None
        interrupted = prev is FrameLabel.BARGE_IN
        if interrupted or plan is None or obs.state.chunk_index >= plan.break_chunk:
            self._plan_index += 1
            return YIELD
        return _placeholder_decision(obs.state.chunk_index)


def oracle_policy(scenario: Scenario) -> OraclePolicy:
    return OraclePolicy(scenario)


class ThresholdPolicy:
    """Silence-threshold endpointer modeling the early-response failure.

    Takes the turn after ``threshold`` consecutive silent chunks once the
    user has been heard, so any intra-turn pause at least that long triggers
    a premature shift. Treats every overlap as a backchannel and never
    yields to one; responses are a fixed ``response_len`` chunks.
    """

    def __init__(self, threshold: int, response_len: int = 2):
        if threshold < 1:
            raise ValueError("pause threshold must be at least 1 chunk")
        if response_len < 1:
            raise ValueError("response length must be at least 1 chunk")
        self.threshold = threshold
        self.response_len = response_len
        self.reset()

    def reset(self) -> None:
        self._armed = False
        self._silence = 0
        self._remaining = 0

    def decide(self, obs: Observation) -> PolicyDecision:
        if obs.state.mode is Mode.LISTENING:
            if obs.frame.vad:
                self._armed = True
                self._silence = 0
                return HOLD
            if not self._armed:
                return HOLD
            self._silence += 1
            if self._silence >= self.threshold:
                self._armed = False
                self._silence = 0
                self._remaining = self.response_len
                return TAKE_TURN
            return HOLD
        if self._remaining > 0:
            self._remaining -= 1
            return _placeholder_decision(obs.state.chunk_index)
        return YIELD


def threshold_policy(pause_threshold_chunks: int, response_len: int = 2) -> ThresholdPolicy:
    return ThresholdPolicy(pause_threshold_chunks, response_len=response_len)


class RandomLegalPolicy:
    """Seeded fuzzer that picks uniformly among mode-legal decisions.

    Useful for grammar soundness sweeps: whatever it does, the engine must
    still emit a valid log.
    """

    def __init__(self, seed: int, take_prob: float = 0.15, yield_prob: float = 0.2):
        self.seed = seed
        self.take_prob = take_prob
        self.yield_prob = yield_prob
        self.reset()

    def reset(self) -> None:
        self._rng = random.Random(self.seed)

    def decide(self, obs: Observation) -> PolicyDecision:
        if obs.state.mode is Mode.LISTENING:
            if self._rng.random() < self.take_prob:
                return TAKE_TURN
            return HOLD
        if self._rng.random() < self.yield_prob:
            return YIELD
        return _placeholder_decision(obs.state.chunk_index)


def random_policy(seed: int, take_prob: float = 0.15, yield_prob: float = 0.2) -> RandomLegalPolicy:
    return RandomLegalPolicy(seed, take_prob=take_prob, yield_prob=yield_prob)


class ExternalPolicyError(Exception):
    """The external policy timed out or broke the wire protocol."""


class ExternalPolicy:
    """Adapter speaking the line-delimited JSON policy protocol.

    Per chunk the engine side sends ``{"obs": {"mode", "vad", "idx"}}`` and
    expects ``{"d": "HOLD"|"TAKE"|"CONT"|"YIELD", "t": int?, "a": [4 ints]?}``
    within the channel timeout; a timeout is a session error.
    """

    def __init__(self, channel: LineChannel):
        self._channel = channel

    def decide(self, obs: Observation) -> PolicyDecision:
        request = {"obs": {"mode": obs.state.mode.value,
                           "vad": obs.frame.vad,
                           "idx": obs.state.chunk_index}}
        try:
            reply = self._channel.request(request)
        except WireError as exc:
            raise ExternalPolicyError(
                f"chunk {obs.state.chunk_index}: external policy failed: {exc}") from exc
        decision = reply.get("d")
        if decision == "HOLD":
            return HOLD
        if decision == "TAKE":
            return TAKE_TURN
        if decision == "YIELD":
            return YIELD
        if decision == "CONT":
            text = reply.get("t")
            audio = reply.get("a")
            if text is None or audio is None:
                slot = placeholder_speak_slot(obs.state.chunk_index)
                return continue_speaking(slot.text, slot.audio)
            return continue_speaking(text_token(text), tuple(audio_token(a) for a in audio))
        raise ExternalPolicyError(
            f"chunk {obs.state.chunk_index}: unknown decision {decision!r}")

    def close(self) -> None:
        self._channel.close()

    def __enter__(self) -> "ExternalPolicy":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
