"""Shared time base, token vocabulary, and the dual-stream session log.

Everything downstream (engine, simulator, metrics, datagen) speaks in terms
of the types defined here. The scheduling quantum is the *chunk*: 0.16 s of
wall time holding exactly one user frame (6.25 Hz input stream) and one
model slot (a control token, or one text token followed by four audio
tokens on the 25 Hz output stream).

A session log is valid when its model-slot sequence matches the regular
language ``THINK* (SHIFT SPEAK* BREAK THINK*)*``: the model listens, takes
the turn with SHIFT, speaks, yields with BREAK, and listens again.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

# Stream-rate constants. One chunk is 0.16 s: exactly one 6.25 Hz user frame
# and four 25 Hz audio tokens. The 50 Hz encoder stream reduces to 6.25 Hz
# through three stacked 2x downsampling stages (factor 8).
CHUNK_SECONDS = 0.16
USER_FRAME_HZ = 6.25
AUDIO_TOKEN_HZ = 25.0
ENCODER_FRAME_HZ = 50.0
ENCODER_DOWNSAMPLE = 8
AUDIO_TOKENS_PER_CHUNK = 4
AUDIO_CODEBOOK_SIZE = 16_384

LOG_FORMAT_VERSION = "duplexlog/1"


@dataclass(frozen=True, slots=True)
class TimeBase:
    """Fixed stream-rate arithmetic for a session."""

    chunk_duration_s: float = CHUNK_SECONDS
    user_frame_rate_hz: float = USER_FRAME_HZ
    audio_token_rate_hz: float = AUDIO_TOKEN_HZ
    encoder_frame_rate_hz: float = ENCODER_FRAME_HZ

    def validate(self) -> None:
        if self.user_frame_rate_hz * self.chunk_duration_s != 1.0:
            raise ValueError("expected exactly one user frame per chunk")
        if self.audio_token_rate_hz * self.chunk_duration_s != 4.0:
            raise ValueError("expected exactly four audio tokens per chunk")
        if self.encoder_frame_rate_hz / self.user_frame_rate_hz != 8.0:
            raise ValueError("expected an 8x encoder-to-frame downsample")


class TokenKind(Enum):
    TEXT = "TEXT"
    AUDIO = "AUDIO"
    CONTROL = "CONTROL"


class Control(Enum):
    """Control-token ids: listen, take the turn, yield the turn."""

    THINK = 0
    SHIFT = 1
    BREAK = 2


@dataclass(frozen=True, slots=True)
class Token:
    kind: TokenKind
    id: int

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError(f"token id must be non-negative, got {self.id}")
        if self.kind is TokenKind.AUDIO and self.id >= AUDIO_CODEBOOK_SIZE:
            raise ValueError(
                f"audio token id {self.id} outside codebook [0, {AUDIO_CODEBOOK_SIZE})"
            )
        if self.kind is TokenKind.CONTROL and self.id not in (0, 1, 2):
            raise ValueError(f"control token id must be THINK/SHIFT/BREAK, got {self.id}")


def text_token(token_id: int) -> Token:
    return Token(TokenKind.TEXT, token_id)


def audio_token(token_id: int) -> Token:
    return Token(TokenKind.AUDIO, token_id)


THINK_TOKEN = Token(TokenKind.CONTROL, Control.THINK.value)
SHIFT_TOKEN = Token(TokenKind.CONTROL, Control.SHIFT.value)
BREAK_TOKEN = Token(TokenKind.CONTROL, Control.BREAK.value)


class FrameLabel(Enum):
    """Ground-truth annotation carried by frames that come from a scenario."""

    TURN_SPEECH = "TURN_SPEECH"
    INTRA_TURN_PAUSE = "INTRA_TURN_PAUSE"
    TURN_END = "TURN_END"
    BARGE_IN = "BARGE_IN"
    BACKCHANNEL = "BACKCHANNEL"
    SILENCE = "SILENCE"


@dataclass(frozen=True, slots=True)
class UserFrame:
    """One 6.25 Hz input frame: feature placeholder, VAD flag, optional label.

    ``annotation`` is present exactly when the frame was produced from a
    scripted scenario; frames from a live source carry ``None``.
    """

    feature: tuple[float, ...] = ()
    vad: bool = False
    annotation: FrameLabel | None = None


class SlotKind(Enum):
    THINK = "THINK"
    SHIFT = "SHIFT"
    SPEAK = "SPEAK"
    BREAK = "BREAK"


@dataclass(frozen=True, slots=True)
class ModelSlot:
    """One chunk of model output: a single control token, or 1 text + 4 audio.

    Construct SPEAK slots through :func:`speak_slot`, which enforces arity;
    direct construction is allowed so that malformed slots remain
    representable for :func:`validate_log` to report.
    """

    kind: SlotKind
    text: Token | None = None
    audio: tuple[Token, ...] = ()

    @property
    def control_token(self) -> Token | None:
        if self.kind is SlotKind.THINK:
            return THINK_TOKEN
        if self.kind is SlotKind.SHIFT:
            return SHIFT_TOKEN
        if self.kind is SlotKind.BREAK:
            return BREAK_TOKEN
        return None


THINK_SLOT = ModelSlot(SlotKind.THINK)
SHIFT_SLOT = ModelSlot(SlotKind.SHIFT)
BREAK_SLOT = ModelSlot(SlotKind.BREAK)


def speak_slot(text: Token, audio: Iterable[Token]) -> ModelSlot:
    """Build a speaking slot carrying one text token and four audio tokens."""
    audio_tuple = tuple(audio)
    if text.kind is not TokenKind.TEXT:
        raise ValueError(f"speak slot text token must be TEXT, got {text.kind.value}")
    if len(audio_tuple) != AUDIO_TOKENS_PER_CHUNK:
        raise ValueError(
            f"speak slot needs exactly {AUDIO_TOKENS_PER_CHUNK} audio tokens, "
            f"got {len(audio_tuple)}"
        )
    for tok in audio_tuple:
        if tok.kind is not TokenKind.AUDIO:
            raise ValueError(f"speak slot audio token must be AUDIO, got {tok.kind.value}")
    return ModelSlot(SlotKind.SPEAK, text=text, audio=audio_tuple)


def placeholder_speak_slot(chunk_index: int) -> ModelSlot:
    """Deterministic placeholder content: text id 0, audio ids derived from
    the chunk index so every slot in a session is distinct but reproducible."""
    audio = tuple(
        audio_token((chunk_index * AUDIO_TOKENS_PER_CHUNK + k) % AUDIO_CODEBOOK_SIZE)
        for k in range(AUDIO_TOKENS_PER_CHUNK)
    )
    return ModelSlot(SlotKind.SPEAK, text=text_token(0), audio=audio)


@dataclass(frozen=True, slots=True)
class ChunkRecord:
    index: int
    user: UserFrame
    model: ModelSlot


@dataclass(frozen=True, slots=True)
class DuplexLog:
    """Time-aligned dual-stream record of one session."""

    session_id: str
    seed: int
    chunks: tuple[ChunkRecord, ...] = ()
    time_base: TimeBase = field(default_factory=TimeBase)

    def __len__(self) -> int:
        return len(self.chunks)

    def slots(self) -> Iterator[ModelSlot]:
        return (c.model for c in self.chunks)


@dataclass(frozen=True, slots=True)
class Violation:
    chunk_index: int
    rule: str
    detail: str


def validate_log(log: DuplexLog) -> list[Violation]:
    """Check every structural invariant of a session log.

    Returns one entry per violation (empty list when the log is valid):
    chunk indices must increase by one from zero, SHIFT/BREAK must strictly
    alternate with SPEAK only between them, and each SPEAK slot must carry
    exactly one text token followed by four in-range audio tokens.
    """
    violations: list[Violation] = []
    speaking = False
    for position, chunk in enumerate(log.chunks):
        if chunk.index != position:
            violations.append(
                Violation(chunk.index, "index-contiguity",
                          f"expected index {position}, got {chunk.index}")
            )
        slot = chunk.model
        if slot.kind is SlotKind.THINK:
            if speaking:
                violations.append(
                    Violation(position, "think-while-speaking",
                              "THINK emitted between SHIFT and BREAK")
                )
        elif slot.kind is SlotKind.SHIFT:
            if speaking:
                violations.append(
                    Violation(position, "shift-while-speaking",
                              "SHIFT emitted before the previous turn's BREAK")
                )
            speaking = True
        elif slot.kind is SlotKind.BREAK:
            if not speaking:
                violations.append(
                    Violation(position, "break-while-listening",
                              "BREAK emitted with no open SHIFT")
                )
            speaking = False
        elif slot.kind is SlotKind.SPEAK:
            if not speaking:
                violations.append(
                    Violation(position, "speak-before-shift",
                              "SPEAK emitted outside a SHIFT..BREAK turn")
                )
            violations.extend(_speak_slot_violations(position, slot))
    return violations


def _speak_slot_violations(position: int, slot: ModelSlot) -> list[Violation]:
    out: list[Violation] = []
    if slot.text is None or slot.text.kind is not TokenKind.TEXT:
        out.append(Violation(position, "speak-text-kind",
                             "SPEAK slot must carry exactly one TEXT token"))
    if len(slot.audio) != AUDIO_TOKENS_PER_CHUNK:
        out.append(Violation(position, "speak-audio-arity",
                             f"audio arity {len(slot.audio)} != {AUDIO_TOKENS_PER_CHUNK}"))
    for tok in slot.audio:
        if tok.kind is not TokenKind.AUDIO:
            out.append(Violation(position, "speak-audio-kind",
                                 f"expected AUDIO token, got {tok.kind.value}"))
        elif not 0 <= tok.id < AUDIO_CODEBOOK_SIZE:
            out.append(Violation(position, "audio-id-range",
                                 f"audio id {tok.id} outside [0, {AUDIO_CODEBOOK_SIZE})"))
    return out


def frames_from_encoder(n_50hz: int) -> int:
    """Number of 6.25 Hz frames produced from ``n_50hz`` encoder frames.

    The final group of fewer than eight encoder frames is right-padded
    before downsampling, so the count rounds up.
    """
    if n_50hz < 0:
        raise ValueError(f"encoder frame count must be non-negative, got {n_50hz}")
    return (n_50hz + ENCODER_DOWNSAMPLE - 1) // ENCODER_DOWNSAMPLE


def derive_seed(seed: int, label: str, index: int = 0) -> int:
    """Counter-based seed splitting.

    Children are keyed by ``(seed, label, index)`` through SHA-256, so adding
    a scenario or task never perturbs the streams of earlier ones.
    """
    key = f"{seed}/{label}/{index}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


# --- JSONL serialization -------------------------------------------------
#
# Line 1 is a header: {"format", "session_id", "seed", "time_base",
# "features", "feature_dim"}. Every following line is one chunk:
# {"i": index, "u": {"vad", "ann", "f"?}, "m": {"k", "t", "a"}}.
# Feature vectors are bulky, so including them is configurable; the header
# records the choice and deserialization restores empty features when they
# were omitted.


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def serialize_log(log: DuplexLog, include_features: bool = True) -> str:
    feature_dim = len(log.chunks[0].user.feature) if log.chunks else 0
    header = {
        "format": LOG_FORMAT_VERSION,
        "session_id": log.session_id,
        "seed": log.seed,
        "time_base": {
            "chunk_s": log.time_base.chunk_duration_s,
            "user_hz": log.time_base.user_frame_rate_hz,
            "audio_hz": log.time_base.audio_token_rate_hz,
            "encoder_hz": log.time_base.encoder_frame_rate_hz,
        },
        "features": include_features,
        "feature_dim": feature_dim,
    }
    lines = [_dump(header)]
    for chunk in log.chunks:
        user: dict = {
            "vad": chunk.user.vad,
            "ann": chunk.user.annotation.value if chunk.user.annotation else None,
        }
        if include_features:
            user["f"] = list(chunk.user.feature)
        slot = chunk.model
        model = {
            "k": slot.kind.value,
            "t": slot.text.id if slot.text is not None else None,
            "a": [tok.id for tok in slot.audio] if slot.audio else None,
        }
        lines.append(_dump({"i": chunk.index, "u": user, "m": model}))
    return "\n".join(lines) + "\n"


def deserialize_log(text: str) -> DuplexLog:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("empty log document")
    header = json.loads(lines[0])
    if header.get("format") != LOG_FORMAT_VERSION:
        raise ValueError(f"unsupported log format {header.get('format')!r}")
    time_base = TimeBase(
        chunk_duration_s=header["time_base"]["chunk_s"],
        user_frame_rate_hz=header["time_base"]["user_hz"],
        audio_token_rate_hz=header["time_base"]["audio_hz"],
        encoder_frame_rate_hz=header["time_base"]["encoder_hz"],
    )
    chunks = []
    for line in lines[1:]:
        row = json.loads(line)
        user_row = row["u"]
        frame = UserFrame(
            feature=tuple(user_row.get("f", ())),
            vad=user_row["vad"],
            annotation=FrameLabel(user_row["ann"]) if user_row["ann"] else None,
        )
        model_row = row["m"]
        kind = SlotKind(model_row["k"])
        if kind is SlotKind.SPEAK:
            slot = ModelSlot(
                kind,
                text=text_token(model_row["t"]),
                audio=tuple(audio_token(a) for a in model_row["a"]),
            )
        else:
            slot = ModelSlot(kind)
        chunks.append(ChunkRecord(index=row["i"], user=frame, model=slot))
    return DuplexLog(
        session_id=header["session_id"],
        seed=header["seed"],
        chunks=tuple(chunks),
        time_base=time_base,
    )


def write_log(path, log: DuplexLog, include_features: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_log(log, include_features=include_features))


def read_log(path) -> DuplexLog:
    with open(path, "r", encoding="utf-8") as fh:
        return deserialize_log(fh.read())
