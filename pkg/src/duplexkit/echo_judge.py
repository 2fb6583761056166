"""Reference external judge speaking the line-delimited JSON protocol.

Serves the deterministic stub judge over stdin/stdout so external scoring
matches in-process scoring exactly. Start with
``python -m duplexkit.echo_judge``.
"""

from __future__ import annotations

from .reward import StubJudge
from .wire import serve_lines


def handle(request: dict) -> dict:
    verdict = StubJudge().judge(request["think"], request["answer"], request.get("gold", ""))
    return {"consistency": verdict.consistency, "steps": verdict.thinking_steps}


def main(argv=None) -> int:
    serve_lines(handle)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
