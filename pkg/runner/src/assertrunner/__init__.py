"""Assertion-job runner shim.

Reads exactly one JSON job object from stdin::

    {"source": <code>, "tests": [<assertion>, ...], "interface_name": <name>}

evaluates the candidate source in a fresh namespace, executes each
assertion in order in that namespace, and writes exactly one JSON response
record to stdout::

    {"ok": true}
    {"error": <exception class>, "test": <index or -1>, "message": <text>}

``test`` is -1 when the candidate source itself fails (compile or
top-level execution), before any assertion ran. The process exits 0
whenever a response record was produced, regardless of verdict; only an
unreadable job yields {"error": "ProtocolError"} and a nonzero exit.

The shim imports nothing beyond the standard distribution. Before any
candidate code runs, socket creation is replaced with a raising stub and
the candidate's stdout/stdin are detached from the protocol stream, so
accidental network use or printing cannot corrupt the response.
"""

from __future__ import annotations

import contextlib
import io
import json
import sys

_MESSAGE_LIMIT = 1000


def execute_job(job: dict) -> dict:
    """Run one validated job and return the response record."""
    source = job["source"]
    tests = job["tests"]
    _deny_network()
    namespace: dict = {"__name__": "__main__", "__builtins__": __builtins__}
    sink = io.StringIO()
    with contextlib.redirect_stdout(sink):
        sys.stdin = io.StringIO("")
        try:
            code = compile(source, "<candidate>", "exec")
        except SyntaxError as exc:
            return _failure("SyntaxError", -1, exc)
        try:
            exec(code, namespace)
        except BaseException as exc:
            return _failure(type(exc).__name__, -1, exc)
        for index, test in enumerate(tests):
            try:
                test_code = compile(test, f"<test {index}>", "exec")
            except SyntaxError as exc:
                return _failure("SyntaxError", index, exc)
            try:
                exec(test_code, namespace)
            except BaseException as exc:
                return _failure(type(exc).__name__, index, exc)
    return {"ok": True}


def main() -> int:
    try:
        raw = sys.stdin.read()
        job = json.loads(raw)
        if not isinstance(job, dict):
            raise ValueError("job is not an object")
        source = job.get("source")
        tests = job.get("tests")
        if not isinstance(source, str) or not isinstance(tests, list):
            raise ValueError("job needs a source string and a tests list")
        if not all(isinstance(t, str) for t in tests):
            raise ValueError("tests must be strings")
    except (ValueError, json.JSONDecodeError) as exc:
        _emit({"error": "ProtocolError", "test": -1, "message": str(exc)[:_MESSAGE_LIMIT]})
        return 1
    _emit(execute_job(job))
    return 0


def _failure(error: str, test: int, exc: BaseException) -> dict:
    return {"error": error, "test": test, "message": str(exc)[:_MESSAGE_LIMIT]}


def _emit(record: dict) -> None:
    out = sys.__stdout__
    out.write(json.dumps(record) + "\n")
    out.flush()


def _deny_network() -> None:
    import socket

    def _denied(*_args, **_kwargs):
        raise OSError("network access is disabled in the sandbox")

    socket.socket = _denied  # type: ignore[misc]
    socket.create_connection = _denied
    socket.socketpair = _denied
    socket.create_server = _denied
