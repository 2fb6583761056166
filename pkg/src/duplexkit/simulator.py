"""Scripted scenarios and the virtual-clock session driver.

A scenario is a user-side timeline laid out on the chunk grid: speech
segments and intra-turn pauses form turns, a marker event tags each turn's
final speech chunk, and overlap events (barge-ins, backchannels) are
scheduled inside the interval where the model is expected to be speaking.
Ground-truth labels name the behavior each event tests; response plans
record where the expected model turn starts and would normally end, which
is what the oracle policy and the interruption scorer read.

Generation is a pure function of config and seed. Event-length defaults
(speech 5-40 chunks, pauses 1-8, backchannels 1-4, barge-ins 4-20) are
synthetic stand-ins for natural recordings and are labeled as such in
reports.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

from .core import DuplexLog, FrameLabel, UserFrame, derive_seed
from .engine import ResponsePolicy, run_session

DEFAULT_FEATURE_DIM = 16


class EventKind(Enum):
    USER_SPEECH = "USER_SPEECH"
    INTRA_TURN_PAUSE = "INTRA_TURN_PAUSE"
    TURN_END = "TURN_END"
    BARGE_IN = "BARGE_IN"
    BACKCHANNEL = "BACKCHANNEL"


# Overlap events carry user voice activity; TURN_END is a marker on the
# final chunk of a turn's last speech segment, not a span of its own.
_VOICED_KINDS = (EventKind.USER_SPEECH, EventKind.BARGE_IN, EventKind.BACKCHANNEL)


class Behavior(Enum):
    TURN_TAKING = "TURN_TAKING"
    PAUSE_HANDLING = "PAUSE_HANDLING"
    BACKCHANNELING = "BACKCHANNELING"
    INTERRUPTION = "INTERRUPTION"


_EVENT_BEHAVIOR = {
    EventKind.TURN_END: Behavior.TURN_TAKING,
    EventKind.INTRA_TURN_PAUSE: Behavior.PAUSE_HANDLING,
    EventKind.BARGE_IN: Behavior.INTERRUPTION,
    EventKind.BACKCHANNEL: Behavior.BACKCHANNELING,
}


@dataclass(frozen=True, slots=True)
class ScenarioEvent:
    kind: EventKind
    start_chunk: int
    length_chunks: int

    @property
    def end_chunk(self) -> int:
        """First chunk after the event."""
        return self.start_chunk + self.length_chunks


@dataclass(frozen=True, slots=True)
class ReactionWindow:
    """Chunk window within which a timed reaction counts as a success."""

    min_delay_chunks: int = 0
    max_delay_chunks: int = 6

    def __post_init__(self) -> None:
        if self.min_delay_chunks < 0 or self.min_delay_chunks > self.max_delay_chunks:
            raise ValueError("reaction window requires 0 <= min <= max")


@dataclass(frozen=True, slots=True)
class BehaviorLabel:
    behavior: Behavior
    event_index: int
    window: ReactionWindow


@dataclass(frozen=True, slots=True)
class ResponsePlan:
    """Expected model turn: SHIFT at the turn-end chunk, BREAK where the
    response would end if nothing interrupted it."""

    turn: int
    shift_chunk: int
    break_chunk: int


@dataclass(frozen=True, slots=True)
class Scenario:
    session_id: str
    seed: int
    events: tuple[ScenarioEvent, ...] = ()
    labels: tuple[BehaviorLabel, ...] = ()
    plans: tuple[ResponsePlan, ...] = ()
    horizon_chunks: int = 0
    feature_dim: int = DEFAULT_FEATURE_DIM


@dataclass(frozen=True, slots=True)
class Turn:
    """One user turn reconstructed from the event list."""

    index: int
    start_chunk: int
    end_chunk: int  # chunk carrying the TURN_END marker
    pause_event_indices: tuple[int, ...] = ()


def turns_of(scenario: Scenario) -> list[Turn]:
    """Group the user-side events into turns, closing each at its marker."""
    turns: list[Turn] = []
    start: int | None = None
    pauses: list[int] = []
    for idx, event in enumerate(scenario.events):
        if event.kind is EventKind.USER_SPEECH:
            if start is None:
                start = event.start_chunk
        elif event.kind is EventKind.INTRA_TURN_PAUSE:
            pauses.append(idx)
        elif event.kind is EventKind.TURN_END:
            turns.append(Turn(index=len(turns),
                              start_chunk=start if start is not None else event.start_chunk,
                              end_chunk=event.start_chunk,
                              pause_event_indices=tuple(pauses)))
            start = None
            pauses = []
    return turns


class InfeasibleConfig(Exception):
    """The requested events cannot be placed inside the duration bounds."""


@dataclass(frozen=True, slots=True)
class SuiteConfig:
    """Counts, duration ranges, and the seed for a generated suite.

    Counts are per scenario; the suite holds ``scenarios`` independently
    seeded instances. All length ranges are inclusive chunk counts.
    """

    scenarios: int = 1
    turns: int = 1
    pauses: int = 0
    barge_ins: int = 0
    backchannels: int = 0
    speech_len: tuple[int, int] = (5, 40)
    pause_len: tuple[int, int] = (1, 8)
    barge_in_len: tuple[int, int] = (4, 20)
    backchannel_len: tuple[int, int] = (1, 4)
    response_extra: tuple[int, int] = (1, 6)
    gap_len: tuple[int, int] = (1, 6)
    lead_in: tuple[int, int] = (0, 3)
    tail_silence: int = 16
    window: ReactionWindow = field(default_factory=ReactionWindow)
    feature_dim: int = DEFAULT_FEATURE_DIM
    seed: int = 0


def _check_range(name: str, rng: tuple[int, int], minimum: int = 1) -> None:
    lo, hi = rng
    if lo < minimum or hi < lo:
        raise InfeasibleConfig(f"{name} range {rng} invalid (need {minimum} <= lo <= hi)")


def generate_suite(config: SuiteConfig) -> list[Scenario]:
    """Deterministically expand a config into scripted scenarios.

    Every scenario carries exactly the configured number of events per
    behavior; barge-ins and backchannels land strictly inside the expected
    model-speaking interval of their turn, spaced so that an oracle run
    satisfies all four behaviors.
    """
    if config.scenarios < 1:
        raise InfeasibleConfig("need at least one scenario")
    for count_name in ("turns", "pauses", "barge_ins", "backchannels"):
        if getattr(config, count_name) < 0:
            raise InfeasibleConfig(f"{count_name} must be non-negative")
    if config.turns == 0 and (config.pauses or config.barge_ins or config.backchannels):
        raise InfeasibleConfig("pauses and overlap events need at least one turn")
    if config.barge_ins > config.turns:
        raise InfeasibleConfig(
            f"at most one barge-in per turn: {config.barge_ins} > {config.turns}")
    _check_range("speech_len", config.speech_len)
    _check_range("pause_len", config.pause_len)
    _check_range("barge_in_len", config.barge_in_len)
    _check_range("backchannel_len", config.backchannel_len)
    _check_range("response_extra", config.response_extra)
    _check_range("gap_len", config.gap_len, minimum=0)
    _check_range("lead_in", config.lead_in, minimum=0)

    return [
        _generate_scenario(config, index, derive_seed(config.seed, "scenario", index))
        for index in range(config.scenarios)
    ]


def _generate_scenario(config: SuiteConfig, index: int, seed: int) -> Scenario:
    session_id = f"scn-{config.seed}-{index:05d}"
    if config.turns == 0:
        return Scenario(session_id=session_id, seed=seed,
                        feature_dim=config.feature_dim)

    rng = random.Random(seed)
    pauses_per_turn = [0] * config.turns
    for _ in range(config.pauses):
        pauses_per_turn[rng.randrange(config.turns)] += 1
    backchannels_per_turn = [0] * config.turns
    for _ in range(config.backchannels):
        backchannels_per_turn[rng.randrange(config.turns)] += 1
    barge_turns = set(rng.sample(range(config.turns), config.barge_ins))

    window = config.window
    events: list[ScenarioEvent] = []
    labels: list[BehaviorLabel] = []
    plans: list[ResponsePlan] = []

    def add_event(kind: EventKind, start: int, length: int) -> int:
        events.append(ScenarioEvent(kind, start, length))
        event_index = len(events) - 1
        behavior = _EVENT_BEHAVIOR.get(kind)
        if behavior is not None:
            labels.append(BehaviorLabel(behavior, event_index, window))
        return event_index

    t = rng.randint(*config.lead_in)
    for turn in range(config.turns):
        for segment in range(pauses_per_turn[turn] + 1):
            seg_len = rng.randint(*config.speech_len)
            add_event(EventKind.USER_SPEECH, t, seg_len)
            t += seg_len
            if segment < pauses_per_turn[turn]:
                p_len = rng.randint(*config.pause_len)
                add_event(EventKind.INTRA_TURN_PAUSE, t, p_len)
                t += p_len
        turn_end = t - 1
        add_event(EventKind.TURN_END, turn_end, 1)

        # Expected model turn: SHIFT lands on the turn-end chunk, speech
        # starts the chunk after. Overlap events are placed so every
        # backchannel's protected window closes before any legitimate BREAK.
        speak_start = turn_end + 1
        cursor = speak_start + rng.randint(0, 2)
        break_allowed_from = speak_start + 1
        for _ in range(backchannels_per_turn[turn]):
            b_len = rng.randint(*config.backchannel_len)
            add_event(EventKind.BACKCHANNEL, cursor, b_len)
            break_allowed_from = max(break_allowed_from,
                                     cursor + b_len + window.max_delay_chunks + 1)
            cursor = cursor + b_len + rng.randint(1, 3)

        if turn in barge_turns:
            onset = max(cursor, break_allowed_from) + rng.randint(0, 2)
            bi_len = rng.randint(*config.barge_in_len)
            add_event(EventKind.BARGE_IN, onset, bi_len)
            planned_break = onset + 2 + rng.randint(*config.response_extra)
            # Oracle breaks at onset + 1; the user keeps voicing to the end
            # of the barge-in, which does not open a new turn.
            t = max(onset + bi_len, onset + 2)
        else:
            planned_break = max(cursor, break_allowed_from) + rng.randint(*config.response_extra)
            t = planned_break + 1
        plans.append(ResponsePlan(turn=turn, shift_chunk=turn_end, break_chunk=planned_break))
        t += rng.randint(*config.gap_len)

    horizon = t + config.tail_silence
    return Scenario(session_id=session_id, seed=seed, events=tuple(events),
                    labels=tuple(labels), plans=tuple(plans),
                    horizon_chunks=horizon, feature_dim=config.feature_dim)


def frames_of(scenario: Scenario) -> list[UserFrame]:
    """Expand a scenario into one frame per chunk over its horizon.

    VAD is true during speech, barge-ins, and backchannels; annotations copy
    the event kind, with the turn-end marker overriding the final speech
    frame of its turn and plain silence everywhere else.
    """
    horizon = scenario.horizon_chunks
    annotations: list[FrameLabel] = [FrameLabel.SILENCE] * horizon
    vad = [False] * horizon
    for event in scenario.events:
        if event.kind is EventKind.TURN_END:
            continue
        label = FrameLabel(event.kind.value) if event.kind is not EventKind.USER_SPEECH \
            else FrameLabel.TURN_SPEECH
        voiced = event.kind in _VOICED_KINDS
        for chunk in range(event.start_chunk, min(event.end_chunk, horizon)):
            annotations[chunk] = label
            vad[chunk] = voiced
    for event in scenario.events:
        if event.kind is EventKind.TURN_END and event.start_chunk < horizon:
            annotations[event.start_chunk] = FrameLabel.TURN_END

    rng = random.Random(derive_seed(scenario.seed, "features"))
    dim = scenario.feature_dim
    silent_feature = (0.0,) * dim
    frames = []
    for chunk in range(horizon):
        if vad[chunk]:
            feature = tuple(rng.random() for _ in range(dim))
        else:
            feature = silent_feature
        frames.append(UserFrame(feature=feature, vad=vad[chunk],
                                annotation=annotations[chunk]))
    return frames


def run(scenario: Scenario, policy: ResponsePolicy) -> DuplexLog:
    """Drive one policy through one scenario under the virtual clock."""
    return run_session(frames_of(scenario), policy,
                       session_id=scenario.session_id, seed=scenario.seed)


def run_suite(
    scenarios: Iterable[Scenario],
    policy_factory: Callable[[Scenario], ResponsePolicy],
    jobs: int = 1,
) -> list[DuplexLog]:
    """Run every scenario with a fresh policy, in stable session-id order."""
    scenario_list = list(scenarios)
    if jobs <= 1:
        logs = [run(s, policy_factory(s)) for s in scenario_list]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            logs = list(pool.map(lambda s: run(s, policy_factory(s)), scenario_list))
    return sorted(logs, key=lambda log: log.session_id)


# --- scenario JSONL ------------------------------------------------------
# One scenario per line: {"sid", "seed", "h", "fd", "events": [{"k","s","n"}],
# "labels": [{"b","e","w":[min,max]}], "plans": [{"t","s","b"}]}.


def scenario_to_json(scenario: Scenario) -> str:
    doc = {
        "sid": scenario.session_id,
        "seed": scenario.seed,
        "h": scenario.horizon_chunks,
        "fd": scenario.feature_dim,
        "events": [
            {"k": e.kind.value, "s": e.start_chunk, "n": e.length_chunks}
            for e in scenario.events
        ],
        "labels": [
            {"b": l.behavior.value, "e": l.event_index,
             "w": [l.window.min_delay_chunks, l.window.max_delay_chunks]}
            for l in scenario.labels
        ],
        "plans": [
            {"t": p.turn, "s": p.shift_chunk, "b": p.break_chunk}
            for p in scenario.plans
        ],
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


def scenario_from_json(line: str) -> Scenario:
    doc = json.loads(line)
    return Scenario(
        session_id=doc["sid"],
        seed=doc["seed"],
        events=tuple(ScenarioEvent(EventKind(e["k"]), e["s"], e["n"])
                     for e in doc["events"]),
        labels=tuple(BehaviorLabel(Behavior(l["b"]), l["e"],
                                   ReactionWindow(l["w"][0], l["w"][1]))
                     for l in doc["labels"]),
        plans=tuple(ResponsePlan(p["t"], p["s"], p["b"]) for p in doc["plans"]),
        horizon_chunks=doc["h"],
        feature_dim=doc["fd"],
    )


def write_scenarios(path, scenarios: Iterable[Scenario]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for scenario in scenarios:
            fh.write(scenario_to_json(scenario) + "\n")


def read_scenarios(path) -> list[Scenario]:
    with open(path, "r", encoding="utf-8") as fh:
        return [scenario_from_json(line) for line in fh if line.strip()]
