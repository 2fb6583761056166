"""Full-duplex session controller.

The engine consumes one user frame per chunk, asks a response policy for an
abstract decision, and emits exactly one model slot per chunk. Policies
never emit control tokens themselves: the engine maps decisions onto
THINK/SHIFT/SPEAK/BREAK and rejects any decision that is illegal for the
current mode, so no policy, however buggy, can produce a log that fails the
control grammar.

Mode transitions are LISTENING -> SPEAKING on SHIFT and SPEAKING ->
LISTENING on BREAK, with the shift and break each occupying their own
chunk slot.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Protocol, Sequence

from .core import (
    AUDIO_TOKENS_PER_CHUNK,
    BREAK_SLOT,
    SHIFT_SLOT,
    THINK_SLOT,
    ChunkRecord,
    DuplexLog,
    ModelSlot,
    SlotKind,
    TimeBase,
    Token,
    TokenKind,
    UserFrame,
)

DEFAULT_HISTORY_WINDOW = 32


class Mode(Enum):
    LISTENING = "LISTENING"
    SPEAKING = "SPEAKING"


@dataclass(frozen=True, slots=True)
class EngineState:
    mode: Mode = Mode.LISTENING
    chunk_index: int = 0
    turn_count: int = 0


class DecisionKind(Enum):
    HOLD = "HOLD"
    TAKE_TURN = "TAKE_TURN"
    CONTINUE = "CONTINUE"
    YIELD = "YIELD"


@dataclass(frozen=True, slots=True)
class PolicyDecision:
    """Abstract per-chunk decision returned by a response policy.

    HOLD and TAKE_TURN are legal only while LISTENING; CONTINUE (which
    carries the chunk's one text and four audio tokens) and YIELD only
    while SPEAKING.
    """

    kind: DecisionKind
    text: Token | None = None
    audio: tuple[Token, ...] = ()


HOLD = PolicyDecision(DecisionKind.HOLD)
TAKE_TURN = PolicyDecision(DecisionKind.TAKE_TURN)
YIELD = PolicyDecision(DecisionKind.YIELD)


def continue_speaking(text: Token, audio: Iterable[Token]) -> PolicyDecision:
    return PolicyDecision(DecisionKind.CONTINUE, text=text, audio=tuple(audio))


@dataclass(frozen=True, slots=True)
class Observation:
    """What a policy sees each chunk: engine state, the current frame, and a
    read-only window of the most recent chunk records (length <= W)."""

    state: EngineState
    frame: UserFrame
    history_window: Sequence[ChunkRecord] = ()


class ResponsePolicy(Protocol):
    def decide(self, obs: Observation) -> PolicyDecision: ...


class IllegalDecision(Exception):
    """A policy returned a decision variant illegal for the engine mode.

    ``partial_log`` carries the chunks emitted before the failure when the
    error is raised from :func:`run_session`.
    """

    def __init__(self, chunk_index: int, mode: Mode, decision: DecisionKind, detail: str = ""):
        self.chunk_index = chunk_index
        self.mode = mode
        self.decision = decision
        self.partial_log: DuplexLog | None = None
        message = f"chunk {chunk_index}: {decision.value} is illegal while {mode.value}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


def step(
    state: EngineState,
    frame: UserFrame,
    policy: ResponsePolicy,
    history: Sequence[ChunkRecord] = (),
) -> tuple[ModelSlot, EngineState]:
    """Advance the session by one chunk.

    Exactly one slot is emitted per frame consumed. Raises
    :class:`IllegalDecision` when the policy's variant does not match the
    mode or a CONTINUE payload is malformed.
    """
    decision = policy.decide(Observation(state=state, frame=frame, history_window=history))
    kind = decision.kind
    if state.mode is Mode.LISTENING:
        if kind is DecisionKind.HOLD:
            slot = THINK_SLOT
            next_state = replace(state, chunk_index=state.chunk_index + 1)
        elif kind is DecisionKind.TAKE_TURN:
            slot = SHIFT_SLOT
            next_state = replace(state, mode=Mode.SPEAKING,
                                 chunk_index=state.chunk_index + 1)
        else:
            raise IllegalDecision(state.chunk_index, state.mode, kind)
    else:
        if kind is DecisionKind.CONTINUE:
            slot = _speak_slot_from(decision, state)
            next_state = replace(state, chunk_index=state.chunk_index + 1)
        elif kind is DecisionKind.YIELD:
            slot = BREAK_SLOT
            next_state = replace(state, mode=Mode.LISTENING,
                                 chunk_index=state.chunk_index + 1,
                                 turn_count=state.turn_count + 1)
        else:
            raise IllegalDecision(state.chunk_index, state.mode, kind)
    return slot, next_state


def _speak_slot_from(decision: PolicyDecision, state: EngineState) -> ModelSlot:
    text = decision.text
    audio = decision.audio
    if text is None or text.kind is not TokenKind.TEXT:
        raise IllegalDecision(state.chunk_index, state.mode, decision.kind,
                              "CONTINUE must carry one TEXT token")
    if len(audio) != AUDIO_TOKENS_PER_CHUNK or any(
        tok.kind is not TokenKind.AUDIO for tok in audio
    ):
        raise IllegalDecision(state.chunk_index, state.mode, decision.kind,
                              f"CONTINUE must carry {AUDIO_TOKENS_PER_CHUNK} AUDIO tokens")
    return ModelSlot(SlotKind.SPEAK, text=text, audio=audio)


def run_session(
    frames: Iterable[UserFrame],
    policy: ResponsePolicy,
    session_id: str = "session",
    seed: int = 0,
    time_base: TimeBase | None = None,
    history_window: int = DEFAULT_HISTORY_WINDOW,
) -> DuplexLog:
    """Drive a policy over a finite frame stream and return the session log.

    Deterministic given (frames, policy, seed); the log always has one chunk
    per frame and validates against the control grammar. On an illegal
    decision the exception carries the partial log for debugging.
    """
    reset = getattr(policy, "reset", None)
    if callable(reset):
        reset()
    state = EngineState()
    history: deque[ChunkRecord] = deque(maxlen=history_window)
    chunks: list[ChunkRecord] = []
    tb = time_base if time_base is not None else TimeBase()
    for frame in frames:
        index = state.chunk_index
        try:
            slot, state = step(state, frame, policy, history)
        except IllegalDecision as exc:
            exc.partial_log = DuplexLog(session_id=session_id, seed=seed,
                                        chunks=tuple(chunks), time_base=tb)
            raise
        record = ChunkRecord(index=index, user=frame, model=slot)
        chunks.append(record)
        history.append(record)
    return DuplexLog(session_id=session_id, seed=seed, chunks=tuple(chunks), time_base=tb)
