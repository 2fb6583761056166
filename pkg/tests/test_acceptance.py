"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``. Every tolerance is
pinned here; nothing defers to later calibration.
"""

import json
import math
import random
import sys
import time
from collections import Counter

from duplexkit.core import (
    DuplexLog,
    ChunkRecord,
    FrameLabel,
    SlotKind,
    THINK_SLOT,
    SHIFT_SLOT,
    BREAK_SLOT,
    UserFrame,
    deserialize_log,
    frames_from_encoder,
    placeholder_speak_slot,
    serialize_log,
    validate_log,
)
from duplexkit.cli import main as cli_main
from duplexkit.datagen import (
    DEFAULT_POSTTRAIN_RECIPES,
    SampleInputs,
    Scale,
    TaskRecipe,
    TtsRecord,
    apply_recipe,
    build_pseudo_dialogue,
    build_qa_triplets,
    draw_mixture,
    Modality,
    reconstruct_transcript,
    sample_from_json,
    sample_to_json,
    write_corpus,
)
from duplexkit.engine import run_session
from duplexkit.metrics import Behavior, aggregate, score_log, score_pause_handling, score_turn_taking
from duplexkit.policies import (
    ExternalPolicy,
    oracle_policy,
    random_policy,
    threshold_policy,
)
from duplexkit.reward import ExternalJudge, StubJudge, parse_output, score_total
from duplexkit.simulator import (
    EventKind,
    ReactionWindow,
    SuiteConfig,
    frames_of,
    generate_suite,
    run,
    turns_of,
)
from duplexkit.wire import LineChannel

from reward_fixture import CASES, EXPECTED, check_breakdown, scan_sections


def report(name: str, detail: str = "") -> None:
    line = f"ACCEPTANCE {name}: PASS"
    if detail:
        line += f" ({detail})"
    print(line)


def test_c01_grammar_soundness():
    """10,000 randomized sessions across mixed policies validate cleanly."""
    started = time.monotonic()
    chunks = 0
    for seed in range(10_000):
        config = SuiteConfig(
            scenarios=1,
            turns=1 + seed % 2,
            pauses=seed % 3,
            barge_ins=seed % 2,
            backchannels=(seed >> 1) % 2,
            speech_len=(5, 15),
            seed=seed,
        )
        scenario, = generate_suite(config)
        flavor = seed % 3
        if flavor == 0:
            policy = oracle_policy(scenario)
        elif flavor == 1:
            policy = threshold_policy(1 + seed % 8)
        else:
            policy = random_policy(seed)
        log = run_session(frames_of(scenario), policy,
                          session_id=scenario.session_id, seed=seed)
        violations = validate_log(log)
        assert violations == [], f"seed {seed}: {violations}"
        chunks += len(log)
    elapsed = time.monotonic() - started
    assert elapsed < 60.0, f"took {elapsed:.1f}s"
    report("1 grammar-soundness", f"10000 sessions, {chunks} chunks, {elapsed:.1f}s")


def test_c02_oracle_perfection():
    """Oracle policy scores exactly 1.0 on all four behaviors over 500
    scenarios with at least 200 events per behavior."""
    config = SuiteConfig(scenarios=500, turns=2, pauses=1, barge_ins=1,
                         backchannels=1, seed=2025)
    outcomes = []
    per_behavior = Counter()
    for scenario in generate_suite(config):
        for label in scenario.labels:
            per_behavior[label.behavior] += 1
        outcomes.extend(score_log(run(scenario, oracle_policy(scenario)), scenario))
    assert all(per_behavior[b] >= 200 for b in Behavior), per_behavior
    stats = aggregate(outcomes).stats
    for behavior in Behavior:
        assert stats[behavior].excluded == 0
        assert stats[behavior].rate == 1.0, (behavior, stats[behavior])
    report("2 oracle-perfection",
           f"events per behavior {dict((b.value, per_behavior[b]) for b in Behavior)}")


def test_c03_threshold_oracle_equivalence():
    """threshold_policy(T) matches brute-force pause and turn accounting
    exactly for T in {1,2,3,5,8} (tolerance 0).

    Inter-turn gaps are at least 8 chunks and the scoring window reaches 10
    so the slowest threshold still answers inside the window; speech
    segments are at least 5 chunks so the policy always re-arms before the
    next pause.
    """
    config = SuiteConfig(scenarios=40, turns=3, pauses=4, seed=1234,
                         gap_len=(8, 12), window=ReactionWindow(0, 10))
    suite = generate_suite(config)
    for threshold in (1, 2, 3, 5, 8):
        sim_pause_success = sim_pause_total = brute_pause_success = 0
        sim_turn_failures = brute_turn_failures = 0
        for scenario in suite:
            log = run(scenario, threshold_policy(threshold))
            pause_outcomes = score_pause_handling(log, scenario)
            sim_pause_total += len(pause_outcomes)
            sim_pause_success += sum(o.success for o in pause_outcomes)
            sim_turn_failures += sum(
                not o.success for o in score_turn_taking(log, scenario))
            for event in scenario.events:
                if event.kind is EventKind.INTRA_TURN_PAUSE:
                    brute_pause_success += event.length_chunks < threshold
            for turn in turns_of(scenario):
                lengths = [scenario.events[i].length_chunks
                           for i in turn.pause_event_indices]
                brute_turn_failures += any(n >= threshold for n in lengths)
        assert sim_pause_success == brute_pause_success, f"T={threshold}"
        assert sim_turn_failures == brute_turn_failures, f"T={threshold}"
        assert sim_pause_total == 40 * 4
    report("3 threshold-oracle-equivalence", "T in {1,2,3,5,8}, exact")


def test_c04_chunk_arithmetic():
    """frames_from_encoder == ceil(n/8) over [0, 10000]; every generated log
    chunk carries one user frame and either one control token or one text
    plus four audio tokens."""
    for n in range(0, 10_001):
        assert frames_from_encoder(n) == math.ceil(n / 8)

    config = SuiteConfig(scenarios=20, turns=2, pauses=1, barge_ins=1,
                         backchannels=1, seed=404)
    checked = 0
    for i, scenario in enumerate(generate_suite(config)):
        policy = (oracle_policy(scenario), threshold_policy(1 + i % 6),
                  random_policy(i))[i % 3]
        log = run(scenario, policy)
        for chunk in log.chunks:
            assert isinstance(chunk.user, UserFrame)
            slot = chunk.model
            audio_count = len(slot.audio)
            text_count = 1 if slot.text is not None else 0
            control_count = 1 if slot.control_token is not None else 0
            assert audio_count in (0, 4)
            assert text_count <= 1
            assert control_count <= 1
            if slot.kind is SlotKind.SPEAK:
                assert (text_count, audio_count, control_count) == (1, 4, 0)
            else:
                assert (text_count, audio_count, control_count) == (0, 0, 1)
            checked += 1
    report("4 chunk-arithmetic", f"10001 frame counts, {checked} chunks")


def test_c05_decoupling_mask_law():
    """Every pseudo-dialogue masks in exactly the audio response positions:
    true-count == token count and no true bit on text, over 1000 records."""
    rng = random.Random(909)
    for i in range(1000):
        text = "".join(rng.choice("abcde fgh, ij. ") for _ in range(rng.randrange(1, 80)))
        tokens = tuple(rng.randrange(16_384) for _ in range(rng.randrange(1, 200)))
        record = TtsRecord(text=text or "x", audio_tokens=tokens, speaker_id=f"sp{i}")
        sample = build_pseudo_dialogue(record)
        assert sum(sample.loss_mask) == len(tokens)
        cursor = 0
        for segment in sample.segments:
            n = segment.position_count()
            if segment.modality is not Modality.AD:
                assert not any(sample.loss_mask[cursor:cursor + n])
            cursor += n
    report("5 decoupling-mask-law", "1000 records, tolerance 0")


def test_c06_mixture_fidelity():
    """100,000 seeded draws match the post-training ratios within 0.01."""
    weights = [r.mix_weight for r in DEFAULT_POSTTRAIN_RECIPES]
    assert weights == [0.4, 0.3, 0.1, 0.1, 0.1]
    draws = draw_mixture(DEFAULT_POSTTRAIN_RECIPES, seed=31337, n=100_000)
    counts = Counter(r.name for r in draws)
    worst = 0.0
    for recipe in DEFAULT_POSTTRAIN_RECIPES:
        deviation = abs(counts[recipe.name] / 100_000 - recipe.mix_weight)
        worst = max(worst, deviation)
        assert deviation <= 0.01, (recipe.name, deviation)
    report("6 mixture-fidelity", f"worst deviation {worst:.4f}")


def test_c07_reward_conformance():
    """The 50-case fixture reproduces the frozen hand-derived breakdowns
    exactly, totals stay in [0,4], thinking stays on the 0.2 grid, and
    section extraction agrees byte-for-byte with the scanning checker."""
    assert len(CASES) == 50 and len(EXPECTED) == 50
    for index, ((raw, gold, options), want) in enumerate(zip(CASES, EXPECTED), 1):
        breakdown = score_total(raw, gold, options=options)
        got = (breakdown.accuracy, breakdown.format, breakdown.consistency,
               breakdown.thinking, breakdown.total)
        assert got == want, f"case {index}: {got} != {want}"
        assert check_breakdown(raw, gold, options) == want, f"oracle drift at {index}"
        assert 0.0 <= breakdown.total <= 4.0
        assert breakdown.thinking in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
        parsed = parse_output(raw).parsed
        scanned = scan_sections(raw)
        if parsed is None:
            assert scanned is None, f"case {index}: extraction disagrees"
        else:
            assert scanned == (parsed.think, parsed.answer), f"case {index}"
    report("7 reward-conformance", "50 cases, exact")


def _random_log(rng: random.Random) -> DuplexLog:
    labels = list(FrameLabel) + [None]
    chunks = []
    speaking = False
    for index in range(rng.randrange(0, 200)):
        frame = UserFrame(
            feature=tuple(rng.random() for _ in range(rng.choice((0, 4, 16)))),
            vad=rng.random() < 0.5,
            annotation=rng.choice(labels),
        )
        if speaking:
            roll = rng.random()
            if roll < 0.2:
                slot, speaking = BREAK_SLOT, False
            else:
                slot = placeholder_speak_slot(index)
        else:
            roll = rng.random()
            if roll < 0.15:
                slot, speaking = SHIFT_SLOT, True
            else:
                slot = THINK_SLOT
        chunks.append(ChunkRecord(index=index, user=frame, model=slot))
    return DuplexLog(session_id=f"rand-{rng.randrange(1_000_000)}",
                     seed=rng.randrange(1 << 31), chunks=tuple(chunks))


def _random_sample(rng: random.Random):
    alphabet = "words flow, nicely. over and over! more? yes; fine éß中文"
    text = "".join(rng.choice(alphabet) for _ in range(rng.randrange(1, 120))).strip()
    text = text or "fallback text."
    tokens = tuple(rng.randrange(16_384) for _ in range(rng.randrange(0, 80)))
    flavor = rng.randrange(4)
    if flavor == 0:
        record = TtsRecord(text=text, audio_tokens=tokens or (1,))
        return build_pseudo_dialogue(record)
    if flavor == 1:
        attr = rng.choice(["gender", "age", "emotion", "language", "speaker_count"])
        return build_qa_triplets(rng.randrange(1, 40), (attr, "value"))[rng.randrange(3)]
    pattern = rng.choice(["a_c->t->a_d", "a_c->t|a_d", "a_c->t", "t->a_d", "a_d->t->a_d"])
    scale = rng.choice([Scale.PHRASE, Scale.SENTENCE])
    recipe = TaskRecipe("plan", pattern, 1.0)
    inputs = SampleInputs(transcript=text, ad_tokens=tokens,
                          ac_frames=rng.randrange(0, 30))
    return apply_recipe(recipe, inputs, scale=scale, interleaved=flavor == 2)


def test_c08_round_trips():
    """1000 random logs and 1000 random samples survive JSONL round trips
    bit-exactly; transcripts rebuild byte-for-byte from text segments."""
    rng = random.Random(808)
    for _ in range(1000):
        log = _random_log(rng)
        text = serialize_log(log)
        restored = deserialize_log(text)
        assert restored == log
        assert serialize_log(restored) == text

    rng = random.Random(809)
    for _ in range(1000):
        sample = _random_sample(rng)
        line = sample_to_json(sample)
        restored = sample_from_json(line)
        assert restored == sample
        assert sample_to_json(restored) == line
    report("8 round-trips", "1000 logs + 1000 samples, bit-exact")


def test_c08b_transcript_reconstruction():
    """Interleaved samples rebuild their source transcript byte-exactly."""
    rng = random.Random(810)
    alphabet = "abc def, ghi. jkl! mno? pqr; stu é中"
    for _ in range(500):
        text = ("".join(rng.choice(alphabet) for _ in range(rng.randrange(1, 150)))
                or "x")
        tokens = tuple(rng.randrange(16_384) for _ in range(rng.randrange(0, 60)))
        pattern = rng.choice(["a_c->t->a_d", "a_c->t|a_d", "a_d->t->a_d"])
        sample = apply_recipe(TaskRecipe("lap", pattern, 1.0),
                              SampleInputs(transcript=text, ad_tokens=tokens,
                                           ac_frames=rng.randrange(0, 20)),
                              scale=rng.choice([Scale.PHRASE, Scale.SENTENCE]),
                              interleaved=True)
        assert reconstruct_transcript(sample) == text
    report("8b transcript-reconstruction", "500 transcripts, byte-exact")


def _pipeline(root, corpus_rows, item_rows):
    run_dir = root / "run"
    assert cli_main(["simulate", "--generate", "scenarios=4", "--generate", "turns=2",
                     "--generate", "pauses=1", "--generate", "barge_ins=1",
                     "--generate", "backchannels=1", "--policy", "oracle",
                     "--seed", "17", "--out", str(run_dir)]) == 0
    assert cli_main(["eval", "--logs", str(run_dir),
                     "--scenarios", str(run_dir / "scenarios.jsonl"),
                     "--json", str(root / "report.json"),
                     "--table", str(root / "report.txt"),
                     "--svg", str(root / "report.svg")]) == 0
    corpus = root / "corpus.jsonl"
    write_corpus(corpus, corpus_rows)
    assert cli_main(["build-data", "--corpus", str(corpus), "--n", "30",
                     "--seed", "17", "--out", str(root / "samples.jsonl")]) == 0
    items = root / "items.jsonl"
    with open(items, "w", encoding="utf-8") as fh:
        for row in item_rows:
            fh.write(json.dumps(row) + "\n")
    assert cli_main(["score-reward", "--items", str(items), "--judge", "stub",
                     "--out", str(root / "rewards.jsonl")]) == 0


def test_c09_cli_determinism(tmp_path):
    """Two full pipeline runs (simulate, eval, build-data, score-reward)
    with identical seeds produce byte-identical files."""
    corpus_rows = [
        TtsRecord(text=f"Row {i} reads aloud, calmly. Then stops.",
                  audio_tokens=tuple(range(4 + i)), speaker_id=f"sp{i}",
                  attributes={"age": "a" if i % 2 else "b", "language": "en",
                              "gender": "f"}, ac_frames=5)
        for i in range(6)
    ]
    item_rows = [{"id": f"i{n}", "output": raw, "gold": gold}
                 for n, (raw, gold, _) in enumerate(CASES[:10])]
    roots = []
    for name in ("a", "b"):
        root = tmp_path / name
        root.mkdir()
        _pipeline(root, corpus_rows, item_rows)
        roots.append(root)

    produced = sorted(p.relative_to(roots[0]) for p in roots[0].rglob("*") if p.is_file())
    assert produced, "pipeline produced no files"
    for rel in produced:
        first = (roots[0] / rel).read_bytes()
        second = (roots[1] / rel).read_bytes()
        assert first == second, f"{rel} differs between runs"
    report("9 cli-determinism", f"{len(produced)} files byte-identical")


def test_c10_external_wire_conformance():
    """Reference wire peers complete a 50-scenario / 50-item run with zero
    timeouts and results identical to the in-process equivalents."""
    echo_policy_argv = [sys.executable, "-m", "duplexkit.echo_policy", "--threshold", "3"]
    scenarios = generate_suite(SuiteConfig(scenarios=50, turns=2, pauses=1, seed=555))
    for scenario in scenarios:
        with ExternalPolicy(LineChannel(echo_policy_argv, timeout_s=5.0)) as external:
            wire_log = run(scenario, external)
        local_log = run(scenario, threshold_policy(3))
        assert serialize_log(wire_log) == serialize_log(local_log), scenario.session_id

    echo_judge_argv = [sys.executable, "-m", "duplexkit.echo_judge"]
    items = [(raw, gold, options) for raw, gold, options in CASES]
    stub = StubJudge()
    with ExternalJudge(LineChannel(echo_judge_argv, timeout_s=5.0)) as judge:
        for raw, gold, options in items:
            wire_result = score_total(raw, gold, judge=judge, options=options)
            local_result = score_total(raw, gold, judge=stub, options=options)
            assert wire_result == local_result
            assert not any(f.startswith("judge_unavailable") for f in wire_result.flags)
    report("10 external-wire-conformance", "50 scenarios + 50 items, identical")
