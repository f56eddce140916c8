"""Tool registry and transcript wire format for the agent loop.

Tool calls are embedded in agent turns as fenced blocks::

    <<tool>>
    {"id": "c1", "tool": "verify_lemma", "args": {"source": "..."}}
    <</tool>>

Results are injected back as ``<<result id=...>> ... <</result>>`` blocks.
Malformed blocks never abort a turn; they surface as synthetic error results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import index as index_mod
from . import sandbox
from .errors import UnknownTool
from .verifier import VerifierSession

TOOL_OPEN = "<<tool>>"
TOOL_CLOSE = "<</tool>>"
DEFAULT_PAYLOAD_CAP = 8192
DEFAULT_SEARCH_K = 5

TOOLS = ("verify_lemma", "verify_final", "search_decls", "exec_script")
_REQUIRED_ARGS = {
    "verify_lemma": ("source",),
    "verify_final": ("source",),
    "search_decls": ("query",),
    "exec_script": ("source",),
}


@dataclass(frozen=True)
class ToolCall:
    id: str
    tool: str
    args: dict[str, str]


@dataclass
class ToolResult:
    id: str
    status: str  # ok | error | timeout
    payload: str
    truncated: bool = False

    def render(self) -> str:
        return f"<<result id={self.id} status={self.status}>>\n{self.payload}\n<</result>>"


@dataclass
class ParsedTurn:
    calls: list[ToolCall] = field(default_factory=list)
    malformed: list[ToolResult] = field(default_factory=list)


def parse_tool_calls(turn_text: str) -> ParsedTurn:
    """Extract every call block in order; malformedness is data, not failure."""
    parsed = ParsedTurn()
    lines = turn_text.splitlines()
    i = 0
    block_no = 0
    while i < len(lines):
        if lines[i].strip() != TOOL_OPEN:
            i += 1
            continue
        block_no += 1
        body = []
        j = i + 1
        while j < len(lines) and lines[j].strip() != TOOL_CLOSE:
            body.append(lines[j])
            j += 1
        if j >= len(lines):
            parsed.malformed.append(
                ToolResult(f"malformed-{block_no}", "error", "unterminated tool block")
            )
            break
        i = j + 1
        call = _parse_block("\n".join(body), block_no)
        if isinstance(call, ToolCall):
            parsed.calls.append(call)
        else:
            parsed.malformed.append(call)
    return parsed


def _parse_block(body: str, block_no: int) -> ToolCall | ToolResult:
    try:
        envelope = json.loads(body)
    except json.JSONDecodeError as exc:
        return ToolResult(f"malformed-{block_no}", "error", f"bad tool envelope: {exc}")
    if not isinstance(envelope, dict):
        return ToolResult(f"malformed-{block_no}", "error", "tool envelope is not an object")
    call_id = str(envelope.get("id", f"call-{block_no}"))
    tool = envelope.get("tool")
    args = envelope.get("args", {})
    if tool not in TOOLS:
        return ToolResult(call_id, "error", f"unknown tool {tool!r}")
    if not isinstance(args, dict):
        return ToolResult(call_id, "error", "args must be an object")
    args = {str(k): str(v) for k, v in args.items()}
    missing = [a for a in _REQUIRED_ARGS[tool] if a not in args]
    if missing:
        return ToolResult(call_id, "error", f"missing required args: {', '.join(missing)}")
    return ToolCall(call_id, tool, args)


def serialize_tool_call(call: ToolCall) -> str:
    envelope = json.dumps({"id": call.id, "tool": call.tool, "args": call.args})
    return f"{TOOL_OPEN}\n{envelope}\n{TOOL_CLOSE}"


class ToolHub:
    """Routes parsed tool calls to the verifier, search index, and sandbox."""

    def __init__(
        self,
        search_index: index_mod.SearchIndex | None = None,
        embedder=None,
        exec_limits: sandbox.ExecLimits = sandbox.ExecLimits(),
        payload_cap: int = DEFAULT_PAYLOAD_CAP,
    ):
        self.search_index = search_index
        self.embedder = embedder
        self.exec_limits = exec_limits
        self.payload_cap = payload_cap

    def load_index(self, path: str, expected_pin: str | None = None) -> index_mod.SearchIndex:
        self.search_index = index_mod.load_index(path, expected_pin)
        return self.search_index

    def dispatch(self, call: ToolCall, session: VerifierSession | None) -> ToolResult:
        if call.tool == "verify_lemma":
            return self._verify(call, session, final=False)
        if call.tool == "verify_final":
            return self._verify(call, session, final=True)
        if call.tool == "search_decls":
            return self._search(call)
        if call.tool == "exec_script":
            return self._exec(call)
        raise UnknownTool(call.tool)

    def _finish(self, call_id: str, status: str, payload: str) -> ToolResult:
        raw = payload.encode("utf-8")
        if len(raw) > self.payload_cap:
            return ToolResult(call_id, status, raw[: self.payload_cap].decode("utf-8", "ignore"), True)
        return ToolResult(call_id, status, payload)

    def _verify(self, call: ToolCall, session: VerifierSession | None, final: bool) -> ToolResult:
        if session is None:
            return self._finish(call.id, "error", "no verifier session bound")
        from .errors import DuplicateName, GoalMismatch, SessionClosed

        try:
            if final:
                result = session.submit_final(call.args["source"])
            else:
                result = session.submit_lemma(call.args["source"])
        except (DuplicateName, GoalMismatch, SessionClosed) as exc:
            return self._finish(call.id, "error", f"{type(exc).__name__}: {exc}")
        lines = ["ok" if result.ok else "failed"]
        lines.extend(f"[{m.severity.value}] {m.text}" for m in result.messages)
        if result.ok and final:
            lines.append("final theorem verified")
        status = "ok" if result.ok else "error"
        if any("Timeout" in m.text for m in result.messages):
            status = "timeout"
        return self._finish(call.id, status, "\n".join(lines))

    def _search(self, call: ToolCall) -> ToolResult:
        if self.search_index is None:
            return self._finish(call.id, "error", "no search index loaded")
        if self.embedder is None:
            return self._finish(call.id, "error", "no embedder configured")
        try:
            k = int(call.args.get("k", DEFAULT_SEARCH_K))
        except ValueError:
            return self._finish(call.id, "error", f"bad k {call.args.get('k')!r}")
        query = np.asarray(self.embedder.embed(call.args["query"]), dtype=np.float32)
        hits = index_mod.search(self.search_index, query, max(1, k))
        lines = [f"{d.name}\t{d.kind}\t{score:.4f}\t{d.statement}" for d, score in hits]
        return self._finish(call.id, "ok", "\n".join(lines) if lines else "no results")

    def _exec(self, call: ToolCall) -> ToolResult:
        outcome = sandbox.exec_script(call.args["source"], self.exec_limits)
        result = self._finish(call.id, outcome.status, outcome.output)
        result.truncated = result.truncated or outcome.truncated
        return result
