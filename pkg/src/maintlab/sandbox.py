"""Isolated execution of candidate solutions against assertion tests.

Each job runs in a fresh interpreter subprocess with a private temp
directory as cwd/TMPDIR/HOME, a hard address-space cap, and a wall-clock
timeout. The runner protocol is one JSON object on the child's stdin::

    {"source": <code>, "tests": [<assertion>, ...], "interface_name": <name>}

and one JSON object on its stdout::

    {"ok": true}
    {"error": <exception class>, "test": <index or -1>, "message": <text>}

Exit code 0 means protocol success regardless of verdict. ``test`` is -1
for failures raised by the candidate source itself, before any assertion.
"""

from __future__ import annotations

import importlib.util
import json
import os
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .errors import DomainError, ProtocolError, SandboxSpawnError

try:
    import resource
except ImportError:  # non-POSIX host; caps degrade to timeout-only
    resource = None

DEFAULT_TIMEOUT = 10.0
DEFAULT_MEMORY_CAP = 512 * 1024 * 1024
#: Scheduling slack allowed on top of the configured timeout.
DEFAULT_TIMEOUT_SLACK = 1.0

_STDERR_EXCERPT_LIMIT = 2000


class VerdictStatus(str, Enum):
    PASS = "pass"
    ASSERTION_FAIL = "assertion_fail"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"
    SYNTAX_ERROR = "syntax_error"


@dataclass(frozen=True)
class SandboxJob:
    source: str
    tests: tuple[str, ...]
    interface_name: str = ""
    timeout: float = DEFAULT_TIMEOUT
    memory_cap: int = DEFAULT_MEMORY_CAP

    def __post_init__(self):
        object.__setattr__(self, "tests", tuple(self.tests))
        if self.timeout <= 0:
            raise DomainError("sandbox timeout must be positive")
        if not self.tests:
            raise DomainError("sandbox job needs at least one test")


@dataclass(frozen=True)
class SandboxVerdict:
    status: VerdictStatus
    failed_index: int | None = None
    stderr_excerpt: str = ""
    wall_time: float = 0.0


def default_runner_command() -> list[str]:
    """Locate the installed runner shim; the child is spawned isolated."""
    if importlib.util.find_spec("assertrunner") is None:
        raise SandboxSpawnError(
            "assertrunner is not installed; install the runner package or "
            "pass runner_cmd explicitly"
        )
    return [sys.executable, "-I", "-m", "assertrunner"]


def run_candidate(job: SandboxJob, runner_cmd: Sequence[str] | None = None) -> SandboxVerdict:
    """Execute one candidate in a fresh subprocess and classify the outcome."""
    cmd = list(runner_cmd) if runner_cmd is not None else default_runner_command()
    payload = json.dumps(
        {"source": job.source, "tests": list(job.tests), "interface_name": job.interface_name}
    )
    started = time.monotonic()
    with tempfile.TemporaryDirectory(prefix="maintlab-job-") as workdir:
        try:
            proc = subprocess.Popen(
                cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                cwd=workdir,
                env=_child_env(workdir),
                text=True,
                preexec_fn=_limit_resources(job.memory_cap) if resource else None,
            )
        except OSError as exc:
            raise SandboxSpawnError(f"could not spawn runner: {exc}") from exc
        try:
            stdout, stderr = proc.communicate(payload, timeout=job.timeout)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.communicate()
            return SandboxVerdict(
                status=VerdictStatus.TIMEOUT,
                stderr_excerpt=f"wall clock exceeded {job.timeout}s",
                wall_time=time.monotonic() - started,
            )
    wall = time.monotonic() - started
    stderr_tail = stderr[-_STDERR_EXCERPT_LIMIT:]
    if not stdout.strip():
        # Child died without a protocol record (hard crash, abort, OOM kill).
        return SandboxVerdict(
            status=VerdictStatus.RUNTIME_ERROR,
            failed_index=-1,
            stderr_excerpt=stderr_tail or f"runner exited {proc.returncode} with no output",
            wall_time=wall,
        )
    try:
        record = json.loads(stdout.strip().splitlines()[-1])
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"unparseable runner response: {stdout!r}") from exc
    return classify_outcome(record, wall_time=wall, stderr_excerpt=stderr_tail)


def classify_outcome(
    raw: Mapping, wall_time: float = 0.0, stderr_excerpt: str = ""
) -> SandboxVerdict:
    """Map a runner response record onto a :class:`SandboxVerdict`.

    Classification is by reported exception class: assertion violations
    give assertion_fail, parse failures give syntax_error, anything else
    gives runtime_error. Raises :class:`ProtocolError` for records outside
    the protocol.
    """
    if not isinstance(raw, Mapping):
        raise ProtocolError(f"runner response is not an object: {raw!r}")
    if raw.get("ok") is True:
        return SandboxVerdict(VerdictStatus.PASS, wall_time=wall_time)
    error = raw.get("error")
    if not isinstance(error, str):
        raise ProtocolError(f"runner response lacks ok/error: {raw!r}")
    if error == "ProtocolError":
        raise ProtocolError(f"runner rejected the job: {raw.get('message', '')}")
    test = raw.get("test", -1)
    if not isinstance(test, int):
        raise ProtocolError(f"non-integer test index in response: {raw!r}")
    message = str(raw.get("message", ""))
    excerpt = message or stderr_excerpt
    if error == "AssertionError":
        return SandboxVerdict(
            VerdictStatus.ASSERTION_FAIL,
            failed_index=test,
            stderr_excerpt=excerpt,
            wall_time=wall_time,
        )
    if error == "SyntaxError":
        return SandboxVerdict(
            VerdictStatus.SYNTAX_ERROR, stderr_excerpt=excerpt, wall_time=wall_time
        )
    return SandboxVerdict(
        VerdictStatus.RUNTIME_ERROR,
        failed_index=test,
        stderr_excerpt=f"{error}: {excerpt}" if excerpt else error,
        wall_time=wall_time,
    )


def run_many(
    jobs: Sequence[SandboxJob],
    max_workers: int | None = None,
    runner_cmd: Sequence[str] | None = None,
) -> list[SandboxVerdict]:
    """Run jobs across a bounded worker pool (default: logical CPU count)."""
    workers = max_workers or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: run_candidate(job, runner_cmd), jobs))


def _child_env(workdir: str) -> dict[str, str]:
    return {
        "PATH": os.defpath,
        "HOME": workdir,
        "TMPDIR": workdir,
        "TEMP": workdir,
        "TMP": workdir,
        "PYTHONIOENCODING": "utf-8",
    }


def _limit_resources(memory_cap: int):
    def apply() -> None:
        resource.setrlimit(resource.RLIMIT_AS, (memory_cap, memory_cap))
        resource.setrlimit(resource.RLIMIT_CORE, (0, 0))

    return apply
