"""Training-sequence construction.

Builds modality-tagged segment sequences with explicit per-position loss
masks: tri-modal interleaving at phrase or sentence scale, task recipes
with weighted mixture sampling, voice-transfer pseudo-dialogues whose text
response is excluded from the loss, cross-modal attribute QA triplets, and
hierarchical stratified sampling for demographic balance.

Three modalities appear in a sample: continuous-audio placeholders (AC,
a frame count plus source span, never contributing to the loss), discrete
audio token lists (AD), and text (T, one position per code point so that
concatenating T segments reproduces the transcript byte-exactly).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Iterator, Sequence

from .core import AUDIO_CODEBOOK_SIZE

AUDIO_TOKENS_PER_FEATURE_FRAME = 4  # 25 Hz tokens vs 6.25 Hz frames


class Modality(Enum):
    AC = "AC"
    AD = "AD"
    T = "T"


class Role(Enum):
    QUERY = "QUERY"
    RESPONSE = "RESPONSE"
    CONTEXT = "CONTEXT"


class Scale(Enum):
    PHRASE = "PHRASE"
    SENTENCE = "SENTENCE"


class EmptyText(Exception):
    pass


class AlignmentError(Exception):
    pass


class MissingModality(Exception):
    pass


class BadWeights(Exception):
    pass


class EmptyAudio(Exception):
    pass


class UnknownAttribute(Exception):
    pass


class EmptyCorpus(Exception):
    pass


class BudgetExceedsSupply(Exception):
    pass


@dataclass(frozen=True, slots=True)
class Segment:
    """One modality-tagged stretch of a sample.

    ``span`` is the (char_start, char_end) slice of the source transcript
    the segment was cut from, absent for content that has no transcript
    anchor (contexts, synthesized queries).
    """

    modality: Modality
    role: Role
    text: str | None = None
    tokens: tuple[int, ...] = ()
    frame_count: int = 0
    span: tuple[int, int] | None = None

    def position_count(self) -> int:
        if self.modality is Modality.T:
            return len(self.text or "")
        if self.modality is Modality.AD:
            return len(self.tokens)
        return self.frame_count


def text_segment(text: str, role: Role, span: tuple[int, int] | None = None) -> Segment:
    return Segment(Modality.T, role, text=text, span=span)


def audio_segment(tokens: Sequence[int], role: Role,
                  span: tuple[int, int] | None = None) -> Segment:
    tokens = tuple(tokens)
    for tok in tokens:
        if not 0 <= tok < AUDIO_CODEBOOK_SIZE:
            raise ValueError(f"audio token {tok} outside [0, {AUDIO_CODEBOOK_SIZE})")
    return Segment(Modality.AD, role, tokens=tokens, span=span)


def feature_segment(frame_count: int, role: Role,
                    span: tuple[int, int] | None = None) -> Segment:
    if frame_count < 0:
        raise ValueError("frame count must be non-negative")
    return Segment(Modality.AC, role, frame_count=frame_count, span=span)


@dataclass(frozen=True, slots=True)
class TaskRecipe:
    name: str
    pattern: str
    mix_weight: float


@dataclass(frozen=True, slots=True)
class InterleavedSample:
    segments: tuple[Segment, ...]
    loss_mask: tuple[bool, ...]
    recipe: TaskRecipe
    scale: Scale

    def position_count(self) -> int:
        return sum(seg.position_count() for seg in self.segments)


def reconstruct_transcript(sample: InterleavedSample) -> str:
    """Concatenate the transcript-anchored text segments, in order."""
    return "".join(seg.text or "" for seg in sample.segments
                   if seg.modality is Modality.T and seg.span is not None)


# --- transcript segmentation ---------------------------------------------

_PHRASE_DELIMITERS = set(",;:.!?")
_SENTENCE_DELIMITERS = set(".!?")


def segment_transcript(text: str, scale: Scale) -> list[tuple[int, int]]:
    """Cut a transcript into contiguous spans at the given scale.

    A span ends after a delimiter followed by whitespace (the whitespace
    run stays with the preceding span); phrase scale splits on clause
    punctuation, sentence scale on terminators only. Spans cover the text
    exactly, in order, without overlap.
    """
    if not text:
        raise EmptyText("cannot segment an empty transcript")
    delimiters = _PHRASE_DELIMITERS if scale is Scale.PHRASE else _SENTENCE_DELIMITERS
    spans: list[tuple[int, int]] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in delimiters and i + 1 < n and text[i + 1].isspace():
            j = i + 1
            while j < n and text[j].isspace():
                j += 1
            if j < n:
                spans.append((start, j))
                start = j
            i = j
        else:
            i += 1
    if start < n:
        spans.append((start, n))
    return spans


def allocate_proportional(total: int, weights: Sequence[int]) -> list[int]:
    """Split ``total`` across weights with largest-remainder rounding.

    Deterministic and exact: the parts always sum to ``total``.
    """
    if total < 0:
        raise ValueError("cannot allocate a negative total")
    weight_sum = sum(weights)
    if weight_sum <= 0:
        if total > 0:
            raise AlignmentError(f"cannot place {total} positions across zero-weight spans")
        return [0] * len(weights)
    exact = [total * w / weight_sum for w in weights]
    parts = [int(x) for x in exact]
    shortfall = total - sum(parts)
    by_remainder = sorted(range(len(weights)), key=lambda i: (-(exact[i] - parts[i]), i))
    for i in by_remainder[:shortfall]:
        parts[i] += 1
    return parts


# --- pattern realization ---------------------------------------------------

_OPERANDS = ("a_c", "a_d", "t")


def parse_pattern(pattern: str) -> tuple[tuple[str, ...], ...]:
    """Parse a task formula into stages of parallel operands.

    ``->`` chains query to response stages, ``|`` pairs operands inside a
    stage, e.g. ``a_c->t|a_d`` is one continuous-audio query stage followed
    by a coupled text/discrete-audio response stage.
    """
    stages = []
    for stage_text in pattern.split("->"):
        operands = tuple(op.strip() for op in stage_text.split("|"))
        if not operands or any(op not in _OPERANDS for op in operands):
            raise ValueError(f"malformed pattern {pattern!r}")
        stages.append(operands)
    if len(stages) < 2:
        raise ValueError(f"pattern {pattern!r} needs a query and a response stage")
    return tuple(stages)


@dataclass(frozen=True, slots=True)
class SampleInputs:
    """Raw material for one sample; provide whatever the pattern names."""

    transcript: str | None = None
    ad_tokens: tuple[int, ...] | None = None
    ac_frames: int | None = None
    response_text: str | None = None


def build_interleaved(
    transcript: str,
    ad_tokens: Sequence[int],
    ac_frames: int,
    pattern: str,
    scale: Scale,
) -> InterleavedSample:
    """Interleave a transcript with its audio streams span by span.

    Tokens and frames are split across spans proportionally to span length;
    each span then realizes the pattern in order, so the whole sample reads
    as span-sized chains (for example AC, T, AD, AC, T, AD, ...). The loss
    mask covers text and discrete-audio positions on the response side
    only; continuous placeholders never take loss.
    """
    recipe = TaskRecipe("interleave", pattern, 1.0)
    return apply_recipe(
        recipe,
        SampleInputs(transcript=transcript, ad_tokens=tuple(ad_tokens), ac_frames=ac_frames),
        scale=scale,
        interleaved=True,
    )


def apply_recipe(
    recipe: TaskRecipe,
    inputs: SampleInputs,
    scale: Scale = Scale.SENTENCE,
    interleaved: bool = False,
) -> InterleavedSample:
    """Realize a task formula over the given inputs.

    The first stage of the pattern is the query (mask false); every later
    stage is response (mask true on T and AD positions). Utterance-level by
    default; ``interleaved=True`` repeats the pattern per transcript span.
    """
    stages = parse_pattern(recipe.pattern)
    flat_operands = [op for stage in stages for op in stage]
    uses_text = "t" in flat_operands
    text_occurrences = flat_operands.count("t")

    if uses_text and not inputs.transcript:
        raise MissingModality(f"pattern {recipe.pattern!r} needs a transcript")
    if "a_d" in flat_operands and inputs.ad_tokens is None:
        raise MissingModality(f"pattern {recipe.pattern!r} needs discrete audio tokens")
    if "a_c" in flat_operands and inputs.ac_frames is None:
        raise MissingModality(f"pattern {recipe.pattern!r} needs continuous audio frames")
    if text_occurrences > 1 and inputs.response_text is None:
        raise MissingModality(
            f"pattern {recipe.pattern!r} names text twice; provide response_text")

    transcript = inputs.transcript or ""
    if interleaved:
        spans = segment_transcript(transcript, scale)
        span_weights = [end - start for start, end in spans]
    else:
        # Utterance level: one span holding everything, weight 1 even for
        # transcript-free (audio-only) patterns.
        spans = [(0, len(transcript))]
        span_weights = [max(1, len(transcript))]

    ad_parts = (allocate_proportional(len(inputs.ad_tokens), span_weights)
                if inputs.ad_tokens is not None else None)
    ac_parts = (allocate_proportional(inputs.ac_frames, span_weights)
                if inputs.ac_frames is not None else None)

    segments: list[Segment] = []
    ad_cursor = 0
    texts_seen = 0
    for span_index, (start, end) in enumerate(spans):
        anchor = (start, end) if transcript else None
        for stage_index, stage in enumerate(stages):
            role = Role.QUERY if stage_index == 0 else Role.RESPONSE
            for op in stage:
                if op == "t":
                    # First occurrence reads the transcript span; a second
                    # occurrence is the separate response text.
                    if text_occurrences > 1 and texts_seen % text_occurrences == text_occurrences - 1:
                        segments.append(text_segment(inputs.response_text or "", role))
                    else:
                        segments.append(text_segment(transcript[start:end], role, span=anchor))
                    texts_seen += 1
                elif op == "a_d":
                    count = ad_parts[span_index] if ad_parts is not None else 0
                    tokens = inputs.ad_tokens[ad_cursor:ad_cursor + count] \
                        if inputs.ad_tokens is not None else ()
                    segments.append(audio_segment(tokens, role, span=anchor))
                elif op == "a_c":
                    count = ac_parts[span_index] if ac_parts is not None else 0
                    segments.append(feature_segment(count, role, span=anchor))
        if ad_parts is not None:
            ad_cursor += ad_parts[span_index]

    # A pattern may name a_d on both sides of one span (a_d->t->a_d): each
    # occurrence within the span repeats the same allocation, mirroring the
    # same utterance appearing as both query and response.
    mask = _response_mask(segments)
    return InterleavedSample(tuple(segments), mask, recipe, scale)


def _response_mask(segments: Sequence[Segment]) -> tuple[bool, ...]:
    mask: list[bool] = []
    for seg in segments:
        masked_in = seg.role is Role.RESPONSE and seg.modality in (Modality.T, Modality.AD)
        mask.extend([masked_in] * seg.position_count())
    return tuple(mask)


# --- task tables -----------------------------------------------------------

# Pre-training tasks: stage, task name, formulas, and trained-token budget
# in billions. Budgets are mixture-weight metadata only; nothing here
# produces those volumes.
PRETRAIN_TASKS: tuple[tuple[int, str, tuple[str, ...], float], ...] = (
    (1, "asr-alignment", ("a_c->t",), 30.0),
    (2, "asr", ("a_c->t",), 80.0),
    (2, "tts", ("t->a_d",), 160.0),
    (2, "audio-only", ("a_c->a_d", "a_d->a_d"), 240.0),
    (2, "speech-continuation", ("a_c->t",), 160.0),
    (2, "speech-text-interleave", ("a_c->t|a_d", "a_c->t->a_c"), 360.0),
    (2, "speech-text-interleave-chain", ("a_d->t->a_d", "a_c->t->a_d"), 180.0),
    (2, "text-only", ("t->t",), 800.0),
    (2, "full-duplex", ("a_c->t|a_d",), 5.0),
)

# Post-training task mixture: five groups with ratios 0.4/0.3/0.1/0.1/0.1.
POSTTRAIN_FORMULAS: dict[str, tuple[str, ...]] = {
    "general-intelligence": ("t->t", "t->a_d", "a_c->t", "a_c->t|a_d"),
    "spoken-dialogue": ("a_c->t|a_d",),
    "speech-understanding": ("a_c->t", "a_c|t->t", "a_c|a_c->t", "a_c|a_c->t|a_d"),
    "speech-generation": ("t->a_d",),
    "audio-understanding": ("t|a_c->t",),
}

DEFAULT_POSTTRAIN_RECIPES: tuple[TaskRecipe, ...] = (
    TaskRecipe("general-intelligence", "t->t", 0.4),
    TaskRecipe("spoken-dialogue", "a_c->t|a_d", 0.3),
    TaskRecipe("speech-understanding", "a_c->t", 0.1),
    TaskRecipe("speech-generation", "t->a_d", 0.1),
    TaskRecipe("audio-understanding", "t|a_c->t", 0.1),
)

# Patterns built span-by-span rather than at utterance level.
INTERLEAVED_PATTERNS = frozenset(
    {"a_c->t|a_d", "a_c->t->a_c", "a_d->t->a_d", "a_c->t->a_d"})


def pretrain_recipes(stage: int = 2) -> list[TaskRecipe]:
    """Stage tasks as recipes, weights proportional to trained-token budgets
    and split evenly across a task's formulas."""
    rows = [(name, formulas, budget) for s, name, formulas, budget in PRETRAIN_TASKS
            if s == stage]
    total = sum(budget for _, _, budget in rows)
    recipes = []
    for name, formulas, budget in rows:
        for formula in formulas:
            recipes.append(TaskRecipe(name, formula, budget / total / len(formulas)))
    return recipes


def choose_pattern(recipe: TaskRecipe, rng: random.Random) -> str:
    """Pick one of a task group's formulas, uniformly."""
    formulas = POSTTRAIN_FORMULAS.get(recipe.name)
    if not formulas:
        return recipe.pattern
    return formulas[rng.randrange(len(formulas))]


def sample_mixture(
    recipes: Sequence[TaskRecipe],
    rng: random.Random | int,
) -> Iterator[TaskRecipe]:
    """Endless i.i.d. recipe draws by mix weight, deterministic given seed.

    Weights are validated immediately, before the first draw.
    """
    if not recipes:
        raise BadWeights("no recipes to sample from")
    weights = [r.mix_weight for r in recipes]
    if any(w < 0 for w in weights):
        raise BadWeights("mix weights must be non-negative")
    total = sum(weights)
    if abs(total - 1.0) > 1e-9:
        raise BadWeights(f"mix weights must sum to 1, got {total}")
    generator = random.Random(rng) if isinstance(rng, int) else rng
    cumulative = []
    acc = 0.0
    for w in weights:
        acc += w
        cumulative.append(acc)
    cumulative[-1] = 1.0

    def draws() -> Iterator[TaskRecipe]:
        while True:
            u = generator.random()
            for recipe, bound in zip(recipes, cumulative):
                if u < bound:
                    yield recipe
                    break
            else:
                yield recipes[-1]

    return draws()


def draw_mixture(recipes: Sequence[TaskRecipe], seed: int, n: int) -> list[TaskRecipe]:
    stream = sample_mixture(recipes, seed)
    return [next(stream) for _ in range(n)]


# --- voice-transfer pseudo-dialogues ---------------------------------------


@dataclass(frozen=True, slots=True)
class TtsRecord:
    """One read-speech recording: transcript, its discrete tokens, speaker,
    and optional demographic attributes (age bucket, language, gender)."""

    text: str
    audio_tokens: tuple[int, ...]
    speaker_id: str = ""
    attributes: dict[str, str] = field(default_factory=dict)
    ac_frames: int = 0


DEFAULT_CONTEXT_TEMPLATE = "Let's chat for a bit. Tell me something on your mind."


def build_pseudo_dialogue(record: TtsRecord,
                          context_template: str = DEFAULT_CONTEXT_TEMPLATE) -> InterleavedSample:
    """Recast a read-speech recording as one dialogue exchange.

    The rendered template plays the user's side (context, no loss); the
    assistant reply reuses the recording's transcript and audio, with the
    text half excluded from the loss so only the audio response trains.
    The mask therefore has exactly ``len(record.audio_tokens)`` true bits.
    """
    if not record.audio_tokens:
        raise EmptyAudio("pseudo-dialogue needs a non-empty audio response")
    context_text = context_template.format(speaker_id=record.speaker_id)
    context_frames = max(1, -(-len(context_text) // AUDIO_TOKENS_PER_FEATURE_FRAME))
    segments = (
        text_segment(context_text, Role.CONTEXT),
        feature_segment(context_frames, Role.CONTEXT),
        text_segment(record.text, Role.RESPONSE, span=(0, len(record.text))),
        audio_segment(record.audio_tokens, Role.RESPONSE),
    )
    mask: list[bool] = []
    for seg in segments:
        masked_in = seg.modality is Modality.AD and seg.role is Role.RESPONSE
        mask.extend([masked_in] * seg.position_count())
    recipe = TaskRecipe("pseudo-dialogue", "a_c->t|a_d", 1.0)
    return InterleavedSample(segments, tuple(mask), recipe, Scale.SENTENCE)


# --- attribute QA triplets --------------------------------------------------

QA_ATTRIBUTES = ("gender", "age", "emotion", "language", "speaker_count")

DEFAULT_QA_TEMPLATES: dict[str, tuple[str, str]] = {
    "gender": ("What is the speaker's gender?", "The speaker sounds {value}."),
    "age": ("Roughly how old does the speaker sound?", "The speaker sounds {value}."),
    "emotion": ("What emotion does the speaker convey?", "The speaker sounds {value}."),
    "language": ("Which language is being spoken?", "The speech is in {value}."),
    "speaker_count": ("How many speakers are there?", "There are {value} speakers."),
}


def default_tts_stub(text: str) -> tuple[int, ...]:
    """Token-id placeholder for synthesized speech: one token per character."""
    return tuple(ord(ch) % AUDIO_CODEBOOK_SIZE for ch in text)


@dataclass(frozen=True, slots=True)
class QaTriplet:
    """One attribute question over a source recording: the text and spoken
    forms of the query and of the shared response."""

    source_audio_frames: int
    text_query: str
    audio_query: tuple[int, ...]
    text_response: str
    audio_response: tuple[int, ...] | None = None


def make_qa_triplet(
    source_audio_frames: int,
    label: tuple[str, str],
    templates: dict[str, tuple[str, str]] | None = None,
    tts_stub: Callable[[str], Sequence[int]] | None = None,
) -> QaTriplet:
    attribute, value = label
    if attribute not in QA_ATTRIBUTES:
        raise UnknownAttribute(f"unsupported attribute {attribute!r}")
    question_tpl, answer_tpl = (templates or DEFAULT_QA_TEMPLATES)[attribute]
    synthesize = tts_stub if tts_stub is not None else default_tts_stub
    question = question_tpl.format(value=value)
    answer = answer_tpl.format(value=value)
    return QaTriplet(
        source_audio_frames=source_audio_frames,
        text_query=question,
        audio_query=tuple(synthesize(question)),
        text_response=answer,
        audio_response=tuple(synthesize(answer)),
    )


def build_qa_triplets(
    source_audio_frames: int,
    label: tuple[str, str],
    templates: dict[str, tuple[str, str]] | None = None,
    tts_stub: Callable[[str], Sequence[int]] | None = None,
) -> tuple[InterleavedSample, InterleavedSample, InterleavedSample]:
    """Emit the three modality configurations for one attribute label.

    Text query to text answer, spoken query to text answer, and spoken
    query to spoken answer, all sharing the same answer text. Spoken
    queries enter as continuous placeholders sized from the synthesizer
    stub's tokens; the spoken answer keeps the tokens themselves.
    """
    triplet = make_qa_triplet(source_audio_frames, label, templates, tts_stub)
    query_frames = max(1, -(-len(triplet.audio_query) // AUDIO_TOKENS_PER_FEATURE_FRAME))

    def sample(recipe_name: str, pattern: str, segments: tuple[Segment, ...]) -> InterleavedSample:
        recipe = TaskRecipe(recipe_name, pattern, 1.0)
        return InterleavedSample(segments, _response_mask(segments), recipe, Scale.SENTENCE)

    source = feature_segment(triplet.source_audio_frames, Role.QUERY)
    text_to_text = sample("qa-text-query", "a_c|t->t", (
        source,
        text_segment(triplet.text_query, Role.QUERY),
        text_segment(triplet.text_response, Role.RESPONSE),
    ))
    speech_to_text = sample("qa-speech-query", "a_c|a_c->t", (
        source,
        feature_segment(query_frames, Role.QUERY),
        text_segment(triplet.text_response, Role.RESPONSE),
    ))
    speech_to_speech = sample("qa-speech-to-speech", "a_c|a_c->t|a_d", (
        source,
        feature_segment(query_frames, Role.QUERY),
        text_segment(triplet.text_response, Role.RESPONSE),
        audio_segment(triplet.audio_response or (), Role.RESPONSE),
    ))
    return text_to_text, speech_to_text, speech_to_speech


# --- stratified sampling -----------------------------------------------------

STRATIFY_PRIORITY = ("age", "language", "gender")


def stratified_sample(
    records: Sequence[TtsRecord],
    budget: int,
    priority: Sequence[str] = STRATIFY_PRIORITY,
    seed: int = 0,
) -> list[TtsRecord]:
    """Greedy hierarchical balancing across demographic attributes.

    The budget is split as evenly as supply allows across the first
    attribute's buckets (leftover from exhausted buckets redistributed
    evenly among the rest), then the same rule recurses inside each bucket
    for the following attributes. Output preserves corpus order.
    """
    if not records:
        raise EmptyCorpus("no records to sample from")
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if budget > len(records):
        raise BudgetExceedsSupply(f"budget {budget} exceeds corpus size {len(records)}")
    rng = random.Random(seed)
    indexed = list(enumerate(records))
    chosen = _stratify(indexed, budget, tuple(priority), rng)
    return [record for _, record in sorted(chosen, key=lambda pair: pair[0])]


def _bucket_key(record: TtsRecord, attribute: str) -> str:
    return record.attributes.get(attribute, "unspecified")


def _stratify(indexed, budget: int, attrs: tuple[str, ...], rng: random.Random):
    if budget >= len(indexed):
        return list(indexed)
    if not attrs:
        picked = rng.sample(range(len(indexed)), budget)
        return [indexed[i] for i in sorted(picked)]
    buckets: dict[str, list] = {}
    for pair in indexed:
        buckets.setdefault(_bucket_key(pair[1], attrs[0]), []).append(pair)
    allocation = allocate_evenly(budget, {k: len(v) for k, v in buckets.items()})
    out = []
    for key in sorted(buckets):
        out.extend(_stratify(buckets[key], allocation[key], attrs[1:], rng))
    return out


def allocate_evenly(budget: int, supplies: dict[str, int]) -> dict[str, int]:
    """Supply-capped max-even split by water filling.

    The common level rises until a cell's supply caps it; capped cells keep
    their supply and the leftover keeps filling the rest, so every cell ends
    at min(supply, fair share + redistributed remainder). A final partial
    level goes one unit each to the first cells in key order.
    """
    allocation = {key: 0 for key in supplies}
    active = sorted(supplies, key=lambda k: (supplies[k], k))
    remaining = budget
    level = 0
    while remaining > 0 and active:
        headroom = supplies[active[0]] - level
        if headroom * len(active) <= remaining:
            remaining -= headroom * len(active)
            level = supplies[active[0]]
            for key in active:
                allocation[key] = level
            while active and supplies[active[0]] == level:
                active.pop(0)
        else:
            bump, extra = divmod(remaining, len(active))
            for key in active:
                allocation[key] = level + bump
            for key in sorted(active)[:extra]:
                allocation[key] += 1
            remaining = 0
    return allocation


# --- JSONL input/output -------------------------------------------------------
#
# Corpus records: {"text", "ad": [ints], "ac_frames": int, "speaker",
# "attrs": {"age", "lang", "gender"}}. Samples: {"segs": [...], "mask":
# [0/1...], "recipe": {"name", "pattern", "w"}, "scale"}.

_ATTR_SHORT = {"age": "age", "language": "lang", "gender": "gender"}
_ATTR_LONG = {v: k for k, v in _ATTR_SHORT.items()}


def record_to_json(record: TtsRecord) -> str:
    attrs = {_ATTR_SHORT.get(k, k): v for k, v in record.attributes.items()}
    doc = {
        "text": record.text,
        "ad": list(record.audio_tokens),
        "ac_frames": record.ac_frames,
        "speaker": record.speaker_id,
        "attrs": attrs,
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


def record_from_json(line: str) -> TtsRecord:
    doc = json.loads(line)
    attrs = {_ATTR_LONG.get(k, k): v for k, v in doc.get("attrs", {}).items()}
    return TtsRecord(
        text=doc["text"],
        audio_tokens=tuple(doc.get("ad", ())),
        speaker_id=doc.get("speaker", ""),
        attributes=attrs,
        ac_frames=doc.get("ac_frames", 0),
    )


def read_corpus(path) -> list[TtsRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return [record_from_json(line) for line in fh if line.strip()]


def write_corpus(path, records: Iterable[TtsRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record_to_json(record) + "\n")


def _segment_to_doc(seg: Segment) -> dict:
    doc: dict = {"m": seg.modality.value, "r": seg.role.value}
    if seg.modality is Modality.T:
        doc["text"] = seg.text
    elif seg.modality is Modality.AD:
        doc["ad"] = list(seg.tokens)
    else:
        doc["n"] = seg.frame_count
    doc["span"] = list(seg.span) if seg.span is not None else None
    return doc


def _segment_from_doc(doc: dict) -> Segment:
    modality = Modality(doc["m"])
    role = Role(doc["r"])
    span = tuple(doc["span"]) if doc.get("span") is not None else None
    if modality is Modality.T:
        return Segment(modality, role, text=doc["text"], span=span)
    if modality is Modality.AD:
        return Segment(modality, role, tokens=tuple(doc["ad"]), span=span)
    return Segment(modality, role, frame_count=doc["n"], span=span)


def sample_to_json(sample: InterleavedSample) -> str:
    doc = {
        "segs": [_segment_to_doc(seg) for seg in sample.segments],
        "mask": [1 if bit else 0 for bit in sample.loss_mask],
        "recipe": {"name": sample.recipe.name, "pattern": sample.recipe.pattern,
                   "w": sample.recipe.mix_weight},
        "scale": sample.scale.value,
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


def sample_from_json(line: str) -> InterleavedSample:
    doc = json.loads(line)
    recipe = TaskRecipe(doc["recipe"]["name"], doc["recipe"]["pattern"],
                        doc["recipe"]["w"])
    return InterleavedSample(
        segments=tuple(_segment_from_doc(seg) for seg in doc["segs"]),
        loss_mask=tuple(bool(bit) for bit in doc["mask"]),
        recipe=recipe,
        scale=Scale(doc["scale"]),
    )


def write_samples(path, samples: Iterable[InterleavedSample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(sample_to_json(sample) + "\n")


def read_samples(path) -> list[InterleavedSample]:
    with open(path, "r", encoding="utf-8") as fh:
        return [sample_from_json(line) for line in fh if line.strip()]
