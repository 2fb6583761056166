"""Behavior scoring of session logs against scenario ground truth.

Four behaviors are scored per event: turn-taking (a SHIFT inside the
reaction window after a turn end, with no earlier SHIFT in that turn),
pause handling (no SHIFT inside an intra-turn pause), interruption (a BREAK
inside the window after a barge-in onset while speaking), and backchanneling
(no BREAK from a backchannel onset through its protected window).

Overlap events that land where the model never spoke are scenario defects
for that run: they are excluded from denominators and counted separately
rather than scored as failures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .core import DuplexLog, SlotKind
from .simulator import (
    Behavior,
    ReactionWindow,
    Scenario,
    Turn,
    turns_of,
)

# Success rates reported for a published full-duplex dialogue system,
# rendered alongside our numbers for context. Never used as expectations:
# scripted-policy runs are not comparable to a trained model.
REFERENCE_RATES = {
    Behavior.TURN_TAKING: 99.7,
    Behavior.PAUSE_HANDLING: 97.6,
    Behavior.BACKCHANNELING: 93.89,
    Behavior.INTERRUPTION: 96.81,
}

REPORT_NOTE = ("synthetic scripted scenarios; the reference row is a published "
               "full-duplex baseline shown for context only")


class MissingAnnotations(Exception):
    """The log carries no scenario annotations, so it cannot be scored."""


@dataclass(frozen=True, slots=True)
class BehaviorOutcome:
    behavior: Behavior
    event_ref: int
    success: bool
    detail: str
    reaction_chunks: int | None = None
    excluded: bool = False


@dataclass(frozen=True, slots=True)
class BehaviorStats:
    successes: int = 0
    total: int = 0
    excluded: int = 0

    @property
    def rate(self) -> float | None:
        if self.total == 0:
            return None
        return self.successes / self.total


@dataclass(slots=True)
class MetricsReport:
    suite_id: str
    window: ReactionWindow
    stats: dict[Behavior, BehaviorStats]
    config_echo: dict = field(default_factory=dict)
    reference_rates: dict[Behavior, float] = field(default_factory=lambda: dict(REFERENCE_RATES))
    note: str = REPORT_NOTE


@dataclass(frozen=True, slots=True)
class _SlotTimeline:
    shifts: tuple[int, ...]
    breaks: tuple[int, ...]
    speaking: tuple[bool, ...]  # mode entering each chunk


def _timeline(log: DuplexLog) -> _SlotTimeline:
    shifts: list[int] = []
    breaks: list[int] = []
    speaking: list[bool] = []
    mode_speaking = False
    for chunk in log.chunks:
        speaking.append(mode_speaking)
        if chunk.model.kind is SlotKind.SHIFT:
            shifts.append(chunk.index)
            mode_speaking = True
        elif chunk.model.kind is SlotKind.BREAK:
            breaks.append(chunk.index)
            mode_speaking = False
    return _SlotTimeline(tuple(shifts), tuple(breaks), tuple(speaking))


def _require_annotations(log: DuplexLog, scenario: Scenario) -> None:
    if scenario.labels and not any(c.user.annotation is not None for c in log.chunks):
        raise MissingAnnotations(
            f"log {log.session_id!r} has no scenario annotations")


def _labels_for(scenario: Scenario, behavior: Behavior,
                window: ReactionWindow | None):
    for label in scenario.labels:
        if label.behavior is behavior:
            yield label.event_index, (window if window is not None else label.window)


def _turn_containing(turns: list[Turn], chunk: int) -> Turn | None:
    for turn in turns:
        if turn.start_chunk <= chunk <= turn.end_chunk:
            return turn
    return None


def score_turn_taking(
    log: DuplexLog,
    scenario: Scenario,
    window: ReactionWindow | None = None,
) -> list[BehaviorOutcome]:
    """One outcome per turn end: a timely SHIFT with no premature SHIFT."""
    _require_annotations(log, scenario)
    timeline = _timeline(log)
    turns = turns_of(scenario)
    outcomes = []
    for event_index, win in _labels_for(scenario, Behavior.TURN_TAKING, window):
        turn_end = scenario.events[event_index].start_chunk
        turn = _turn_containing(turns, turn_end)
        turn_start = turn.start_chunk if turn else 0
        earliest = turn_end + win.min_delay_chunks
        latest = turn_end + win.max_delay_chunks
        premature = [s for s in timeline.shifts if turn_start <= s < earliest]
        timely = [s for s in timeline.shifts if earliest <= s <= latest]
        if premature:
            outcomes.append(BehaviorOutcome(
                Behavior.TURN_TAKING, event_index, False,
                f"premature shift at chunk {premature[0]}"))
        elif timely:
            outcomes.append(BehaviorOutcome(
                Behavior.TURN_TAKING, event_index, True, "ok",
                reaction_chunks=timely[0] - turn_end))
        else:
            outcomes.append(BehaviorOutcome(
                Behavior.TURN_TAKING, event_index, False, "no response"))
    return outcomes


def score_pause_handling(log: DuplexLog, scenario: Scenario) -> list[BehaviorOutcome]:
    """One outcome per intra-turn pause: no SHIFT may land inside it."""
    _require_annotations(log, scenario)
    timeline = _timeline(log)
    outcomes = []
    for event_index, _ in _labels_for(scenario, Behavior.PAUSE_HANDLING, None):
        event = scenario.events[event_index]
        inside = [s for s in timeline.shifts
                  if event.start_chunk <= s < event.end_chunk]
        if inside:
            outcomes.append(BehaviorOutcome(
                Behavior.PAUSE_HANDLING, event_index, False,
                f"shift at pause chunk {inside[0] - event.start_chunk + 1}"))
        else:
            outcomes.append(BehaviorOutcome(
                Behavior.PAUSE_HANDLING, event_index, True, "ok"))
    return outcomes


def score_interruption(
    log: DuplexLog,
    scenario: Scenario,
    window: ReactionWindow | None = None,
) -> list[BehaviorOutcome]:
    """One outcome per barge-in: a BREAK inside the window after onset.

    Requires the engine to have been speaking at onset. If it had already
    yielded earlier in that response the outcome is a spurious-yield
    failure; if it never spoke there at all, the event was untestable and
    is excluded.
    """
    _require_annotations(log, scenario)
    timeline = _timeline(log)
    outcomes = []
    for event_index, win in _labels_for(scenario, Behavior.INTERRUPTION, window):
        onset = scenario.events[event_index].start_chunk
        speaking = onset < len(timeline.speaking) and timeline.speaking[onset]
        if not speaking:
            response_start = _response_start_for(scenario, onset)
            broke_early = any(response_start <= b < onset for b in timeline.breaks)
            if broke_early:
                outcomes.append(BehaviorOutcome(
                    Behavior.INTERRUPTION, event_index, False, "yield before event"))
            else:
                outcomes.append(BehaviorOutcome(
                    Behavior.INTERRUPTION, event_index, False,
                    "event outside any speaking interval", excluded=True))
            continue
        timely = [b for b in timeline.breaks
                  if onset + win.min_delay_chunks <= b <= onset + win.max_delay_chunks]
        if timely:
            outcomes.append(BehaviorOutcome(
                Behavior.INTERRUPTION, event_index, True, "ok",
                reaction_chunks=timely[0] - onset))
        else:
            outcomes.append(BehaviorOutcome(
                Behavior.INTERRUPTION, event_index, False, "no yield"))
    return outcomes


def _response_start_for(scenario: Scenario, onset: int) -> int:
    """First chunk of the expected model turn an overlap event targets."""
    start = 0
    for plan in scenario.plans:
        if plan.shift_chunk < onset:
            start = plan.shift_chunk
    return start


def score_backchanneling(
    log: DuplexLog,
    scenario: Scenario,
    window: ReactionWindow | None = None,
) -> list[BehaviorOutcome]:
    """One outcome per backchannel: speech must survive the protected span
    from onset through onset + length + window.max."""
    _require_annotations(log, scenario)
    timeline = _timeline(log)
    outcomes = []
    for event_index, win in _labels_for(scenario, Behavior.BACKCHANNELING, window):
        event = scenario.events[event_index]
        onset = event.start_chunk
        speaking = onset < len(timeline.speaking) and timeline.speaking[onset]
        if not speaking:
            outcomes.append(BehaviorOutcome(
                Behavior.BACKCHANNELING, event_index, False,
                "event outside any speaking interval", excluded=True))
            continue
        guard_end = onset + event.length_chunks + win.max_delay_chunks
        broke = [b for b in timeline.breaks if onset <= b <= guard_end]
        if broke:
            outcomes.append(BehaviorOutcome(
                Behavior.BACKCHANNELING, event_index, False,
                f"yielded at chunk {broke[0]}"))
        else:
            outcomes.append(BehaviorOutcome(
                Behavior.BACKCHANNELING, event_index, True, "ok"))
    return outcomes


def score_log(
    log: DuplexLog,
    scenario: Scenario,
    window: ReactionWindow | None = None,
) -> list[BehaviorOutcome]:
    """All four behaviors for one (log, scenario) pair."""
    return (
        score_turn_taking(log, scenario, window)
        + score_pause_handling(log, scenario)
        + score_interruption(log, scenario, window)
        + score_backchanneling(log, scenario, window)
    )


def aggregate(
    outcomes: Iterable[BehaviorOutcome],
    suite_id: str = "",
    window: ReactionWindow | None = None,
    config_echo: dict | None = None,
) -> MetricsReport:
    """Fold outcomes into per-behavior success rates.

    Excluded (untestable) events are reported separately and never enter
    the denominators; rates are null when a behavior has no scored events.
    """
    successes = {b: 0 for b in Behavior}
    totals = {b: 0 for b in Behavior}
    excluded = {b: 0 for b in Behavior}
    for outcome in outcomes:
        if outcome.excluded:
            excluded[outcome.behavior] += 1
            continue
        totals[outcome.behavior] += 1
        if outcome.success:
            successes[outcome.behavior] += 1
    stats = {
        b: BehaviorStats(successes=successes[b], total=totals[b], excluded=excluded[b])
        for b in Behavior
    }
    return MetricsReport(
        suite_id=suite_id,
        window=window if window is not None else ReactionWindow(),
        stats=stats,
        config_echo=dict(config_echo or {}),
    )


# --- report rendering ----------------------------------------------------


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "format": "report/1",
        "suite_id": report.suite_id,
        "window": [report.window.min_delay_chunks, report.window.max_delay_chunks],
        "behaviors": {
            b.value: {
                "successes": s.successes,
                "total": s.total,
                "excluded": s.excluded,
                "rate": s.rate,
            }
            for b, s in report.stats.items()
        },
        "reference_rates_pct": {b.value: r for b, r in report.reference_rates.items()},
        "note": report.note,
        "config": report.config_echo,
    }


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"


def report_from_json(text: str) -> MetricsReport:
    doc = json.loads(text)
    stats = {
        Behavior(name): BehaviorStats(successes=row["successes"], total=row["total"],
                                      excluded=row["excluded"])
        for name, row in doc["behaviors"].items()
    }
    return MetricsReport(
        suite_id=doc["suite_id"],
        window=ReactionWindow(doc["window"][0], doc["window"][1]),
        stats=stats,
        config_echo=doc.get("config", {}),
        reference_rates={Behavior(b): r for b, r in doc["reference_rates_pct"].items()},
        note=doc.get("note", REPORT_NOTE),
    )


_COLUMN_ORDER = (Behavior.TURN_TAKING, Behavior.PAUSE_HANDLING,
                 Behavior.BACKCHANNELING, Behavior.INTERRUPTION)
_COLUMN_TITLES = {
    Behavior.TURN_TAKING: "Turn-taking",
    Behavior.PAUSE_HANDLING: "Pause handling",
    Behavior.BACKCHANNELING: "Backchanneling",
    Behavior.INTERRUPTION: "Interruption",
}


def render_table(report: MetricsReport) -> str:
    """Aligned plain-text success-rate table, one behavior per column."""
    width = 16
    header = "".ljust(18) + "".join(_COLUMN_TITLES[b].rjust(width) for b in _COLUMN_ORDER)

    def rate_cell(stats: BehaviorStats) -> str:
        return "-" if stats.rate is None else f"{100.0 * stats.rate:.2f}"

    rows = [
        header,
        "success rate (%)".ljust(18) + "".join(
            rate_cell(report.stats[b]).rjust(width) for b in _COLUMN_ORDER),
        "successes/total".ljust(18) + "".join(
            f"{report.stats[b].successes}/{report.stats[b].total}".rjust(width)
            for b in _COLUMN_ORDER),
        "excluded".ljust(18) + "".join(
            str(report.stats[b].excluded).rjust(width) for b in _COLUMN_ORDER),
        "reference (%)".ljust(18) + "".join(
            f"{report.reference_rates[b]:.2f}".rjust(width) for b in _COLUMN_ORDER),
    ]
    rows.append(f"window: [{report.window.min_delay_chunks}, "
                f"{report.window.max_delay_chunks}] chunks")
    rows.append(f"note: {report.note}")
    return "\n".join(rows) + "\n"


def render_svg(report: MetricsReport) -> str:
    """Minimal bar chart of per-behavior success rates."""
    bar_width = 90
    gap = 40
    chart_height = 220
    base_y = 180
    left = 60
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{left * 2 + 4 * (bar_width + gap)}" height="{chart_height}">',
        f'<text x="{left}" y="20" font-family="monospace" font-size="14">'
        f'full-duplex behavior success rate (%) - suite {report.suite_id}</text>',
    ]
    for i, behavior in enumerate(_COLUMN_ORDER):
        stats = report.stats[behavior]
        rate = 0.0 if stats.rate is None else stats.rate
        height = int(round(rate * 130))
        x = left + i * (bar_width + gap)
        label = "-" if stats.rate is None else f"{100.0 * rate:.1f}"
        parts.append(
            f'<rect x="{x}" y="{base_y - height}" width="{bar_width}" '
            f'height="{height}" fill="#4878a8"/>')
        parts.append(
            f'<text x="{x}" y="{base_y - height - 6}" font-family="monospace" '
            f'font-size="12">{label}</text>')
        parts.append(
            f'<text x="{x}" y="{base_y + 16}" font-family="monospace" '
            f'font-size="11">{_COLUMN_TITLES[behavior]}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
