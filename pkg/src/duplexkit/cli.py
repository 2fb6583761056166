"""Operator command line: simulate, eval, build-data, score-reward, report.

Every subcommand is deterministic given its resolved configuration; all
randomness flows from one --seed through counter-based splitting, so adding
a scenario or sample never perturbs earlier ones. Options may come from a
TOML config file (one table per subcommand), with command-line flags taking
precedence.

Exit codes: 0 success, 1 usage or input error, 2 runtime session or
scoring error.
"""

from __future__ import annotations

import argparse
import json
import random
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import datagen, metrics
from .core import DuplexLog, derive_seed, read_log, serialize_log
from .engine import IllegalDecision
from .metrics import aggregate, render_svg, render_table, report_from_json, report_to_json
from .policies import (
    ExternalPolicy,
    ExternalPolicyError,
    oracle_policy,
    random_policy,
    threshold_policy,
)
from .reward import ExternalJudge, StubJudge, score_total
from .simulator import (
    InfeasibleConfig,
    ReactionWindow,
    Scenario,
    SuiteConfig,
    generate_suite,
    read_scenarios,
    run,
    write_scenarios,
)
from .wire import LineChannel, TcpLineChannel

FORMAT_VERSIONS = {
    "log": "duplexlog/1",
    "scenario": "scenario/1",
    "sample": "sample/1",
    "report": "report/1",
    "policy-wire": "policy-wire/1",
    "judge-wire": "judge-wire/1",
}

_EPILOG = "file format versions: " + ", ".join(
    f"{name}={version}" for name, version in FORMAT_VERSIONS.items())


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # Usage errors are exit code 1 under our contract (argparse defaults to 2).
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_window(text: str) -> ReactionWindow:
    lo, _, hi = text.partition(":")
    try:
        return ReactionWindow(int(lo), int(hi))
    except ValueError as exc:
        raise CliError(f"bad window {text!r}: {exc}") from exc


def _parse_range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition(":")
    try:
        if not sep:
            value = int(lo)
            return value, value
        return int(lo), int(hi)
    except ValueError as exc:
        raise CliError(f"bad range {text!r}") from exc


def _load_config(path: str | None, section: str) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    table = doc.get(section, {})
    if not isinstance(table, dict):
        raise CliError(f"config section [{section}] must be a table")
    return table


def _resolve(cli_value, config: dict, key: str, default):
    if cli_value is not None:
        return cli_value
    if key in config:
        return config[key]
    return default


# --- policy and judge specs ------------------------------------------------


def _policy_factory(spec: str, seed: int, timeout_s: float):
    """Map a policy spec to a per-scenario factory.

    Specs: ``oracle``, ``threshold:T``, ``random``, ``external:tcp:HOST:PORT``
    or ``external:COMMAND``; external peers get a fresh channel per scenario
    so no state leaks across sessions.
    """
    if spec == "oracle":
        return lambda scenario: oracle_policy(scenario)
    if spec.startswith("threshold:"):
        try:
            threshold = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise CliError(f"bad policy spec {spec!r}") from exc
        return lambda scenario: threshold_policy(threshold)
    if spec == "random":
        return lambda scenario: random_policy(derive_seed(seed, "policy", _index_of(scenario)))
    if spec.startswith("external:"):
        target = spec.split(":", 1)[1]
        if target.startswith("tcp:"):
            _, host, port = target.split(":", 2)
            return lambda scenario: ExternalPolicy(
                TcpLineChannel(host, int(port), timeout_s=timeout_s))
        argv = shlex.split(target)
        if not argv:
            raise CliError(f"bad policy spec {spec!r}")
        return lambda scenario: ExternalPolicy(LineChannel(argv, timeout_s=timeout_s))
    raise CliError(f"unknown policy spec {spec!r}")


def _index_of(scenario: Scenario) -> int:
    tail = scenario.session_id.rsplit("-", 1)[-1]
    return int(tail) if tail.isdigit() else 0


def _make_judge(spec: str, timeout_s: float):
    if spec == "stub":
        return StubJudge()
    if spec.startswith("external:"):
        target = spec.split(":", 1)[1]
        if target.startswith("tcp:"):
            _, host, port = target.split(":", 2)
            return ExternalJudge(TcpLineChannel(host, int(port), timeout_s=timeout_s))
        argv = shlex.split(target)
        if not argv:
            raise CliError(f"bad judge spec {spec!r}")
        return ExternalJudge(LineChannel(argv, timeout_s=timeout_s))
    raise CliError(f"unknown judge spec {spec!r}")


# --- simulate ----------------------------------------------------------------

_GENERATE_RANGE_KEYS = ("speech_len", "pause_len", "barge_in_len", "backchannel_len",
                        "response_extra", "gap_len", "lead_in")
_GENERATE_INT_KEYS = ("scenarios", "turns", "pauses", "barge_ins", "backchannels",
                      "tail_silence", "feature_dim")


def _suite_config(pairs: list[str], config: dict, seed: int,
                  window: ReactionWindow | None) -> SuiteConfig:
    values: dict = dict(config.get("generate", {}))
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep:
            raise CliError(f"--generate expects key=value, got {pair!r}")
        values[key.replace("-", "_")] = raw
    kwargs: dict = {"seed": seed}
    for key, raw in values.items():
        if key in _GENERATE_INT_KEYS:
            kwargs[key] = int(raw)
        elif key in _GENERATE_RANGE_KEYS:
            kwargs[key] = _parse_range(raw) if isinstance(raw, str) else tuple(raw)
        elif key == "window":
            kwargs[key] = _parse_window(raw) if isinstance(raw, str) else ReactionWindow(*raw)
        else:
            raise CliError(f"unknown generate key {key!r}")
    if window is not None:
        kwargs["window"] = window
    return SuiteConfig(**kwargs)


def _cmd_simulate(args) -> int:
    config = _load_config(args.config, "simulate")
    seed = _resolve(args.seed, config, "seed", 0)
    policy_spec = _resolve(args.policy, config, "policy", "oracle")
    jobs = _resolve(args.jobs, config, "jobs", 1)
    timeout_s = _resolve(args.wire_timeout, config, "wire_timeout", 1.0)
    window = _parse_window(args.window) if args.window else None
    out_dir = Path(_resolve(args.out, config, "out", "runs"))

    if args.scenarios:
        try:
            scenarios = read_scenarios(args.scenarios)
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(f"cannot read scenarios {args.scenarios}: {exc}") from exc
    else:
        try:
            suite = _suite_config(args.generate or [], config, seed, window)
            scenarios = generate_suite(suite)
        except InfeasibleConfig as exc:
            raise CliError(f"infeasible generate config: {exc}") from exc

    factory = _policy_factory(policy_spec, seed, timeout_s)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        logs = _run_all(scenarios, factory, jobs)
    except IllegalDecision as exc:
        raise CliError(f"session aborted: {exc}", code=2) from exc
    except ExternalPolicyError as exc:
        raise CliError(f"external policy failed: {exc}", code=2) from exc

    log_names = []
    for log in logs:
        name = f"{log.session_id}.log.jsonl"
        (out_dir / name).write_text(serialize_log(log), encoding="utf-8")
        log_names.append(name)
    write_scenarios(out_dir / "scenarios.jsonl", scenarios)
    resolved = {
        "seed": seed, "policy": policy_spec, "jobs": jobs,
        "wire_timeout": timeout_s, "scenarios": len(scenarios),
        "window": [window.min_delay_chunks, window.max_delay_chunks] if window else None,
    }
    _write_manifest(out_dir / "manifest.json", "simulate", resolved, files=log_names)
    print(f"wrote {len(logs)} logs to {out_dir}")
    return 0


def _run_all(scenarios, factory, jobs):
    # External policies hold a subprocess or socket; close them per run.
    def run_one(scenario):
        policy = factory(scenario)
        try:
            return run(scenario, policy)
        finally:
            close = getattr(policy, "close", None)
            if callable(close):
                close()

    if jobs <= 1:
        logs = [run_one(s) for s in scenarios]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            logs = list(pool.map(run_one, scenarios))
    return sorted(logs, key=lambda log: log.session_id)


def _write_manifest(path: Path, subcommand: str, resolved: dict, **extra) -> None:
    doc = {"format": "duplexkit/1", "subcommand": subcommand, "config": resolved}
    doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- eval ----------------------------------------------------------------


def _cmd_eval(args) -> int:
    config = _load_config(args.config, "eval")
    window = _parse_window(args.window) if args.window else None
    suite_id = _resolve(args.suite_id, config, "suite_id", "suite")

    try:
        scenarios = {s.session_id: s for s in read_scenarios(args.scenarios)}
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read scenarios {args.scenarios}: {exc}") from exc

    logs: dict[str, DuplexLog] = {}
    for path in _log_paths(args.logs):
        try:
            log = read_log(path)
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(f"cannot read log {path}: {exc}") from exc
        logs[log.session_id] = log

    orphan_logs = sorted(set(logs) - set(scenarios))
    orphan_scenarios = sorted(set(scenarios) - set(logs))
    if orphan_logs or orphan_scenarios:
        message = "unpaired sessions:"
        if orphan_logs:
            message += f" logs without scenarios {orphan_logs}"
        if orphan_scenarios:
            message += f" scenarios without logs {orphan_scenarios}"
        raise CliError(message, code=2)

    outcomes = []
    for session_id in sorted(logs):
        outcomes.extend(metrics.score_log(logs[session_id], scenarios[session_id], window))
    effective_window = window if window is not None else _label_window(scenarios)
    report = aggregate(outcomes, suite_id=suite_id, window=effective_window,
                       config_echo={"sessions": len(logs), "suite_id": suite_id,
                                    "window": [effective_window.min_delay_chunks,
                                               effective_window.max_delay_chunks]})
    _emit_report(report, args)
    return 0


def _label_window(scenarios: dict[str, Scenario]) -> ReactionWindow:
    for scenario in scenarios.values():
        for label in scenario.labels:
            return label.window
    return ReactionWindow()


def _log_paths(specs: list[str]) -> list[Path]:
    paths: list[Path] = []
    for spec in specs:
        p = Path(spec)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.log.jsonl")))
        elif p.exists():
            paths.append(p)
        else:
            raise CliError(f"no such log path: {spec}")
    return paths


def _emit_report(report, args) -> None:
    if getattr(args, "json_out", None):
        Path(args.json_out).write_text(report_to_json(report), encoding="utf-8")
    table = render_table(report)
    if getattr(args, "table_out", None) == "-" or not getattr(args, "table_out", None):
        sys.stdout.write(table)
    else:
        Path(args.table_out).write_text(table, encoding="utf-8")
    if getattr(args, "svg_out", None):
        Path(args.svg_out).write_text(render_svg(report), encoding="utf-8")


# --- build-data ----------------------------------------------------------


def _parse_recipes(specs: list[str] | None, config: dict) -> list[datagen.TaskRecipe]:
    rows = specs if specs else config.get("recipes")
    if not rows:
        return list(datagen.DEFAULT_POSTTRAIN_RECIPES)
    recipes = []
    for row in rows:
        if isinstance(row, str):
            try:
                name, pattern, weight = row.rsplit(":", 2)
                recipes.append(datagen.TaskRecipe(name, pattern, float(weight)))
            except ValueError as exc:
                raise CliError(f"bad recipe spec {row!r} (want name:pattern:weight)") from exc
        else:
            recipes.append(datagen.TaskRecipe(row["name"], row["pattern"], row["weight"]))
    return recipes


def _cmd_build_data(args) -> int:
    config = _load_config(args.config, "build-data")
    seed = _resolve(args.seed, config, "seed", 0)
    count = _resolve(args.n, config, "n", 100)
    phrase_ratio = _resolve(args.phrase_ratio, config, "phrase_ratio", 0.5)
    recipes = _parse_recipes(args.recipe, config)

    try:
        stream = datagen.sample_mixture(recipes, derive_seed(seed, "mixture"))
    except datagen.BadWeights as exc:
        raise CliError(f"bad mixture weights: {exc}") from exc

    if args.verify_mixture:
        return _verify_mixture(recipes, seed, args.verify_mixture)

    if args.dry_run:
        print(f"plan: {count} samples, seed {seed}, phrase ratio {phrase_ratio}")
        for recipe in recipes:
            print(f"  {recipe.mix_weight:6.3f}  {recipe.name}  {recipe.pattern}")
        return 0

    if not args.corpus:
        raise CliError("--corpus is required unless --dry-run or --verify-mixture")
    try:
        corpus = datagen.read_corpus(args.corpus)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read corpus {args.corpus}: {exc}") from exc
    if not corpus:
        raise CliError(f"corpus {args.corpus} is empty")

    rng = random.Random(derive_seed(seed, "build-data"))
    samples = []
    for i in range(count):
        recipe = next(stream)
        record = corpus[i % len(corpus)]
        pattern = datagen.choose_pattern(recipe, rng)
        scale = datagen.Scale.PHRASE if rng.random() < phrase_ratio else datagen.Scale.SENTENCE
        interleaved = pattern in datagen.INTERLEAVED_PATTERNS
        inputs = datagen.SampleInputs(
            transcript=record.text,
            ad_tokens=record.audio_tokens or None,
            ac_frames=record.ac_frames or max(1, len(record.audio_tokens) // 4),
            response_text=corpus[(i + 1) % len(corpus)].text,
        )
        try:
            sample = datagen.apply_recipe(
                datagen.TaskRecipe(recipe.name, pattern, recipe.mix_weight),
                inputs, scale=scale, interleaved=interleaved)
        except (datagen.MissingModality, datagen.AlignmentError, datagen.EmptyText) as exc:
            raise CliError(f"sample {i} ({recipe.name}): {exc}", code=2) from exc
        samples.append(sample)

    out = Path(_resolve(args.out, config, "out", "samples.jsonl"))
    datagen.write_samples(out, samples)
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "build-data",
                    {"seed": seed, "n": count, "phrase_ratio": phrase_ratio,
                     "recipes": [[r.name, r.pattern, r.mix_weight] for r in recipes],
                     "corpus": Path(args.corpus).name})
    print(f"wrote {len(samples)} samples to {out}")
    return 0


def _verify_mixture(recipes, seed: int, draws: int) -> int:
    counts = {recipe.name: 0 for recipe in recipes}
    for recipe in datagen.draw_mixture(recipes, derive_seed(seed, "mixture"), draws):
        counts[recipe.name] += 1
    worst = 0.0
    print(f"mixture check over {draws} draws (seed {seed}):")
    for recipe in recipes:
        freq = counts[recipe.name] / draws
        deviation = abs(freq - recipe.mix_weight)
        worst = max(worst, deviation)
        print(f"  {recipe.name:24s} want {recipe.mix_weight:.4f} got {freq:.4f} "
              f"(dev {deviation:.4f})")
    if worst > 0.01:
        print("FAIL: deviation exceeds 0.01", file=sys.stderr)
        return 2
    print("ok: all deviations within 0.01")
    return 0


# --- score-reward ----------------------------------------------------------


def _cmd_score_reward(args) -> int:
    config = _load_config(args.config, "score-reward")
    judge_spec = _resolve(args.judge, config, "judge", "stub")
    jobs = _resolve(args.jobs, config, "jobs", 1)
    timeout_s = _resolve(args.judge_timeout, config, "judge_timeout",
                         ExternalJudge.DEFAULT_TIMEOUT_S)
    try:
        with open(args.items, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise CliError(f"cannot read items {args.items}: {exc}") from exc

    items = []
    skipped = 0
    for line in lines:
        line = line.strip()
        if not line:
            continue
        try:
            item = json.loads(line)
            items.append((item["id"], item["output"], item["gold"], item.get("options")))
        except (json.JSONDecodeError, KeyError, TypeError):
            skipped += 1

    judge = _make_judge(judge_spec, timeout_s)
    try:
        def score_one(entry):
            item_id, output, gold, options = entry
            breakdown = score_total(output, gold, judge=judge, options=options)
            return {
                "id": item_id,
                "acc": breakdown.accuracy,
                "fmt": breakdown.format,
                "cons": breakdown.consistency,
                "think": breakdown.thinking,
                "total": breakdown.total,
                "flags": list(breakdown.flags),
            }

        # A wire judge owns one channel, so its in-flight cap is one; the
        # in-process stub is pure and fans out freely.
        if jobs > 1 and judge_spec == "stub":
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                rows = list(pool.map(score_one, items))
        else:
            rows = [score_one(entry) for entry in items]
    finally:
        close = getattr(judge, "close", None)
        if callable(close):
            close()

    out = Path(_resolve(args.out, config, "out", "rewards.jsonl"))
    with open(out, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "score-reward",
                    {"judge": judge_spec, "judge_timeout": timeout_s,
                     "items": Path(args.items).name, "scored": len(rows),
                     "skipped": skipped})
    print(f"scored {len(rows)} items, skipped {skipped} malformed lines", file=sys.stderr)
    return 0


# --- report ----------------------------------------------------------------


def _cmd_report(args) -> int:
    try:
        report = report_from_json(Path(args.input).read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read report {args.input}: {exc}") from exc
    _emit_report(report, args)
    return 0


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="duplexkit", description=__doc__, epilog=_EPILOG,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run scripted sessions", epilog=_EPILOG)
    sim.add_argument("--config", help="TOML config file")
    sim.add_argument("--generate", action="append", metavar="KEY=VALUE",
                     help="suite generation parameter (repeatable)")
    sim.add_argument("--scenarios", help="existing scenario JSONL instead of --generate")
    sim.add_argument("--policy", help="oracle | threshold:T | random | external:CMD "
                                      "| external:tcp:HOST:PORT")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--jobs", type=int)
    sim.add_argument("--window", help="reaction window MIN:MAX in chunks")
    sim.add_argument("--wire-timeout", type=float, dest="wire_timeout",
                     help="external policy timeout in seconds (default 1.0)")
    sim.add_argument("--out", help="output directory")
    sim.set_defaults(func=_cmd_simulate)

    ev = sub.add_parser("eval", help="score logs against scenarios", epilog=_EPILOG)
    ev.add_argument("--config", help="TOML config file")
    ev.add_argument("--logs", nargs="+", required=True,
                    help="log files or directories of *.log.jsonl")
    ev.add_argument("--scenarios", required=True)
    ev.add_argument("--window", help="override reaction window MIN:MAX")
    ev.add_argument("--suite-id", dest="suite_id")
    ev.add_argument("--json", dest="json_out", help="write JSON report here")
    ev.add_argument("--table", dest="table_out", help="write text table here ('-' = stdout)")
    ev.add_argument("--svg", dest="svg_out", help="write SVG bar chart here")
    ev.set_defaults(func=_cmd_eval)

    bd = sub.add_parser("build-data", help="construct training samples", epilog=_EPILOG)
    bd.add_argument("--config", help="TOML config file")
    bd.add_argument("--corpus", help="corpus JSONL of records")
    bd.add_argument("--recipe", action="append", metavar="NAME:PATTERN:WEIGHT",
                    help="mixture recipe (repeatable; default post-training mixture)")
    bd.add_argument("--n", type=int, help="number of samples")
    bd.add_argument("--seed", type=int)
    bd.add_argument("--phrase-ratio", type=float, dest="phrase_ratio",
                    help="share of phrase-scale samples (default 0.5)")
    bd.add_argument("--out", help="output sample JSONL")
    bd.add_argument("--dry-run", action="store_true", help="print the mixture plan only")
    bd.add_argument("--verify-mixture", type=int, metavar="N",
                    help="draw N recipes and check empirical ratios")
    bd.set_defaults(func=_cmd_build_data)

    sr = sub.add_parser("score-reward", help="score model outputs", epilog=_EPILOG)
    sr.add_argument("--config", help="TOML config file")
    sr.add_argument("--items", required=True, help="items JSONL")
    sr.add_argument("--judge", help="stub | external:CMD | external:tcp:HOST:PORT")
    sr.add_argument("--judge-timeout", type=float, dest="judge_timeout",
                    help="external judge timeout in seconds (default 10.0)")
    sr.add_argument("--jobs", type=int, help="parallel scoring workers (stub judge only)")
    sr.add_argument("--out", help="output breakdown JSONL")
    sr.set_defaults(func=_cmd_score_reward)

    rp = sub.add_parser("report", help="re-render a saved report", epilog=_EPILOG)
    rp.add_argument("--in", dest="input", required=True, help="report JSON")
    rp.add_argument("--table", dest="table_out", help="write text table here ('-' = stdout)")
    rp.add_argument("--svg", dest="svg_out", help="write SVG bar chart here")
    rp.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"duplexkit: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    raise SystemExit(main())
