"""Line-delimited JSON channels to external processes or TCP peers.

Both the external-policy and external-judge protocols are strict
request/response: one JSON object per line out, one JSON object per line
back, within a wall-clock timeout. Subprocess channels read the child's
stdout from a daemon thread so that timeouts work portably.
"""

from __future__ import annotations

import json
import queue
import socket
import subprocess
import threading
from typing import Sequence


class WireError(Exception):
    """Protocol failure on an external channel."""


class WireTimeout(WireError):
    """The peer did not answer within the configured timeout."""


class LineChannel:
    """Request/response channel over a child process's stdin/stdout."""

    def __init__(self, argv: Sequence[str], timeout_s: float = 1.0):
        self.timeout_s = timeout_s
        self._proc = subprocess.Popen(
            list(argv),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def request(self, obj: dict) -> dict:
        if self._proc.poll() is not None:
            raise WireError(f"peer exited with status {self._proc.returncode}")
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(json.dumps(obj, separators=(",", ":")) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise WireError(f"peer pipe closed: {exc}") from exc
        try:
            line = self._lines.get(timeout=self.timeout_s)
        except queue.Empty:
            raise WireTimeout(f"no reply within {self.timeout_s} s") from None
        if line is None:
            raise WireError("peer closed its output stream")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise WireError(f"undecodable reply {line!r}") from exc

    def close(self) -> None:
        if self._proc.poll() is None:
            if self._proc.stdin is not None:
                try:
                    self._proc.stdin.close()
                except OSError:
                    pass
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "LineChannel":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


class TcpLineChannel:
    """Request/response channel over a TCP connection."""

    def __init__(self, host: str, port: int, timeout_s: float = 1.0):
        self.timeout_s = timeout_s
        self._sock = socket.create_connection((host, port), timeout=timeout_s)
        self._sock.settimeout(timeout_s)
        self._reader = self._sock.makefile("r", encoding="utf-8")
        self._writer = self._sock.makefile("w", encoding="utf-8")

    def request(self, obj: dict) -> dict:
        try:
            self._writer.write(json.dumps(obj, separators=(",", ":")) + "\n")
            self._writer.flush()
            line = self._reader.readline()
        except socket.timeout:
            raise WireTimeout(f"no reply within {self.timeout_s} s") from None
        except OSError as exc:
            raise WireError(f"connection failed: {exc}") from exc
        if not line:
            raise WireError("peer closed the connection")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise WireError(f"undecodable reply {line!r}") from exc

    def close(self) -> None:
        for stream in (self._reader, self._writer):
            try:
                stream.close()
            except OSError:
                pass
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "TcpLineChannel":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def serve_lines(handler, stdin=None, stdout=None) -> None:
    """Run a peer-side loop: one JSON object in, one JSON object out.

    Used by the bundled reference peers; ``handler`` maps a request dict to
    a response dict. EOF on stdin ends the loop.
    """
    import sys

    inp = stdin if stdin is not None else sys.stdin
    out = stdout if stdout is not None else sys.stdout
    for line in inp:
        line = line.strip()
        if not line:
            continue
        response = handler(json.loads(line))
        out.write(json.dumps(response, separators=(",", ":")) + "\n")
        out.flush()
