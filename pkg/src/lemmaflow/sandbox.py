"""Sandboxed execution of agent-generated compute scripts.

Scripts run in an isolated child interpreter with a scratch working
directory, a stripped environment, POSIX resource limits, and a
``sitecustomize`` guard that blocks writes outside the scratch directory and
disables socket networking. Output is captured up to a byte cap.
"""

from __future__ import annotations

import os
import subprocess
import sys
import tempfile
from dataclasses import dataclass

_GUARD = """\
import builtins, os, socket

_SCRATCH = os.path.realpath({scratch!r})
_orig_open = builtins.open

def _guarded_open(file, mode="r", *args, **kwargs):
    if isinstance(file, (str, bytes, os.PathLike)) and any(c in str(mode) for c in "wax+"):
        target = os.path.realpath(os.path.join(os.getcwd(), os.fspath(file)))
        if not target.startswith(_SCRATCH + os.sep) and target != _SCRATCH:
            raise PermissionError(f"write blocked outside scratch dir: {{file}}")
    return _orig_open(file, mode, *args, **kwargs)

builtins.open = _guarded_open

def _no_network(*args, **kwargs):
    raise PermissionError("network access disabled")

socket.socket = _no_network
"""


@dataclass(frozen=True)
class ExecLimits:
    cpu_seconds: float = 5.0
    memory_bytes: int = 256 * 1024 * 1024
    output_bytes: int = 8192


@dataclass
class ExecOutcome:
    status: str  # ok | error | timeout
    output: str
    truncated: bool
    exit_code: int | None = None


def exec_script(source: str, limits: ExecLimits = ExecLimits()) -> ExecOutcome:
    """Run one Python script under the sandbox policy and capture its output."""
    with tempfile.TemporaryDirectory(prefix="lf-sandbox-") as scratch:
        script_path = os.path.join(scratch, "script.py")
        with open(script_path, "w", encoding="utf-8") as fh:
            fh.write(source)
        with open(os.path.join(scratch, "sitecustomize.py"), "w", encoding="utf-8") as fh:
            fh.write(_GUARD.format(scratch=scratch))

        def _apply_limits():
            import resource

            cpu = max(1, int(limits.cpu_seconds))
            resource.setrlimit(resource.RLIMIT_CPU, (cpu, cpu + 1))
            resource.setrlimit(resource.RLIMIT_AS, (limits.memory_bytes, limits.memory_bytes))

        env = {
            "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
            "PYTHONPATH": scratch,
            "HOME": scratch,
            "TMPDIR": scratch,
        }
        try:
            proc = subprocess.run(
                [sys.executable, "-B", script_path],
                cwd=scratch,
                env=env,
                capture_output=True,
                text=True,
                timeout=limits.cpu_seconds + 2,
                preexec_fn=_apply_limits,
            )
        except subprocess.TimeoutExpired as exc:
            combined = _decode(exc.stdout) + _decode(exc.stderr)
            output, truncated = _cap(combined, limits.output_bytes)
            return ExecOutcome("timeout", output, truncated)
        combined = proc.stdout + proc.stderr
        output, truncated = _cap(combined, limits.output_bytes)
        status = "ok" if proc.returncode == 0 else "error"
        if proc.returncode and proc.returncode < 0:
            # Killed by signal: the CPU rlimit delivers SIGKILL/SIGXCPU.
            status = "timeout" if -proc.returncode in (9, 24) else "error"
        return ExecOutcome(status, output, truncated, proc.returncode)


def _decode(data) -> str:
    if data is None:
        return ""
    return data.decode("utf-8", "replace") if isinstance(data, bytes) else data


def _cap(text: str, limit: int) -> tuple[str, bool]:
    raw = text.encode("utf-8")
    if len(raw) <= limit:
        return text, False
    return raw[:limit].decode("utf-8", "ignore"), True
