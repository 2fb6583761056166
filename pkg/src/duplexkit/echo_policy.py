"""Reference external policy speaking the line-delimited JSON protocol.

Runs the bundled silence-threshold policy behind the wire so that an
external run is decision-for-decision identical to the in-process one.
Start with ``python -m duplexkit.echo_policy --threshold 3``.
"""

from __future__ import annotations

import argparse

from .engine import DecisionKind, EngineState, Mode, Observation
from .core import UserFrame
from .policies import ThresholdPolicy
from .wire import serve_lines


def make_handler(threshold: int, response_len: int):
    policy = ThresholdPolicy(threshold, response_len=response_len)

    def handle(request: dict) -> dict:
        obs_doc = request["obs"]
        obs = Observation(
            state=EngineState(mode=Mode(obs_doc["mode"]), chunk_index=obs_doc["idx"]),
            frame=UserFrame(vad=obs_doc["vad"]),
        )
        decision = policy.decide(obs)
        if decision.kind is DecisionKind.HOLD:
            return {"d": "HOLD"}
        if decision.kind is DecisionKind.TAKE_TURN:
            return {"d": "TAKE"}
        if decision.kind is DecisionKind.YIELD:
            return {"d": "YIELD"}
        return {"d": "CONT", "t": decision.text.id, "a": [tok.id for tok in decision.audio]}

    return handle


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--threshold", type=int, default=3)
    parser.add_argument("--response-len", type=int, default=2)
    args = parser.parse_args(argv)
    serve_lines(make_handler(args.threshold, args.response_len))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
