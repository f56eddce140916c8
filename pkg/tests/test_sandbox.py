"""Sandbox policy: isolation, limits, and output capping."""

import os

import pytest

from lemmaflow.sandbox import ExecLimits, exec_script

FAST = ExecLimits(cpu_seconds=3)


def test_stdout_captured():
    out = exec_script("print(6 * 7)", FAST)
    assert out.status == "ok"
    assert out.output.strip() == "42"
    assert out.exit_code == 0


def test_stderr_and_nonzero_exit():
    out = exec_script("import sys; sys.exit('boom')", FAST)
    assert out.status == "error"
    assert "boom" in out.output


def test_exception_reported_as_error():
    out = exec_script("1 / 0", FAST)
    assert out.status == "error"
    assert "ZeroDivisionError" in out.output


def test_scratch_writes_allowed():
    out = exec_script(
        "open('note.txt', 'w').write('hi')\nprint(open('note.txt').read())", FAST
    )
    assert out.status == "ok"
    assert out.output.strip() == "hi"


def test_writes_outside_scratch_blocked(tmp_path):
    target = tmp_path / "escape.txt"
    out = exec_script(f"open({str(target)!r}, 'w').write('x')", FAST)
    assert out.status == "error"
    assert "PermissionError" in out.output
    assert not target.exists()


def test_network_blocked():
    out = exec_script("import socket\nsocket.socket()", FAST)
    assert out.status == "error"
    assert "network access disabled" in out.output


def test_cpu_limit_enforced():
    out = exec_script("while True:\n    pass", ExecLimits(cpu_seconds=1))
    assert out.status == "timeout"


def test_output_cap():
    out = exec_script("print('x' * 100000)", ExecLimits(cpu_seconds=3, output_bytes=512))
    assert out.truncated
    assert len(out.output.encode()) <= 512


def test_environment_is_stripped():
    os.environ["LF_SANDBOX_CANARY"] = "leaked"
    try:
        out = exec_script("import os\nprint(os.environ.get('LF_SANDBOX_CANARY'))", FAST)
    finally:
        del os.environ["LF_SANDBOX_CANARY"]
    assert out.status == "ok"
    assert out.output.strip() == "None"


def test_scratch_is_cwd_and_temporary():
    out = exec_script("import os\nprint(os.getcwd())", FAST)
    assert out.status == "ok"
    scratch = out.output.strip()
    assert "lf-sandbox-" in scratch
    assert not os.path.exists(scratch)


def test_memory_limit_enforced():
    out = exec_script(
        "x = bytearray(512 * 1024 * 1024)\nprint('allocated')",
        ExecLimits(cpu_seconds=3, memory_bytes=128 * 1024 * 1024),
    )
    assert out.status == "error"
    assert "allocated" not in out.output
