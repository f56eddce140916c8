"""Session-oriented verification environment with lemma caching.

A session holds an immutable statement header plus an append-only cache of
proved lemmas; the context presented to the backend is always header followed
by the cache in submission order. Two backends are provided: the in-process
toy checker (complete and deterministic, used by all desk-scale tests) and an
adapter speaking newline-delimited JSON to an external REPL process.
"""

from __future__ import annotations

import enum
import json
import re
import subprocess
import threading
import time
import uuid
from dataclasses import dataclass, field

from . import toy
from .errors import (
    BackendUnavailable,
    DuplicateName,
    GoalMismatch,
    InvalidHeader,
    SessionClosed,
    ToyParseError,
    UnknownSession,
)

DEFAULT_BANNED_TOKENS = ("native_decide",)
DEFAULT_SUBMIT_TIMEOUT_S = 120.0


class Severity(enum.Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


class LemmaStatus(enum.Enum):
    PROVED = "proved"
    SORRY_ADMITTED = "sorry_admitted"
    FAILED = "failed"


@dataclass(frozen=True)
class Message:
    severity: Severity
    text: str
    position: tuple[int, int] | None = None  # 1-based (line, column)


@dataclass(frozen=True)
class StatementHeader:
    goal_statement: str
    imports: str = ""
    options: str = ""

    def validate(self) -> None:
        if not self.goal_statement.strip():
            raise InvalidHeader("goal_statement is empty")


@dataclass
class LemmaRecord:
    name: str
    source: str
    status: LemmaStatus
    diagnostics: list[Message]
    elapsed: float
    sequence_index: int


@dataclass
class VerifyResult:
    ok: bool
    messages: list[Message] = field(default_factory=list)
    elapsed: float = 0.0
    uses_banned_tactic: bool = False

    @property
    def error_text(self) -> str:
        return "; ".join(m.text for m in self.messages if m.severity is Severity.ERROR)


def scan_banned_tactics(source: str, banned: tuple[str, ...] = DEFAULT_BANNED_TOKENS) -> bool:
    """True iff a banned token occurs outside comments and string literals."""
    stripped = []
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch == '"':
            i += 1
            while i < n and source[i] != '"':
                i += 2 if source[i] == "\\" else 1
            i += 1
        elif source.startswith("--", i):
            while i < n and source[i] != "\n":
                i += 1
        elif source.startswith("/-", i):
            depth = 1
            i += 2
            while i < n and depth:
                if source.startswith("/-", i):
                    depth += 1
                    i += 2
                elif source.startswith("-/", i):
                    depth -= 1
                    i += 2
                else:
                    i += 1
        else:
            stripped.append(ch)
            i += 1
    code = "".join(stripped)
    return any(re.search(rf"(?<![A-Za-z0-9_']){re.escape(tok)}(?![A-Za-z0-9_'])", code) for tok in banned)


def toy_verify(
    source: str,
    context: dict[str, toy.Formula],
    allow_sorry: bool = False,
) -> VerifyResult:
    """Check one toy declaration against a citation context (pure oracle)."""
    start = time.monotonic()
    try:
        _, outcome = toy.check_declaration(source, context, allow_sorry=allow_sorry)
    except ToyParseError as exc:
        return VerifyResult(False, [Message(Severity.ERROR, str(exc))], time.monotonic() - start)
    messages = [Message(Severity.ERROR, text) for text in outcome.errors]
    if outcome.used_sorry:
        messages.append(Message(Severity.WARNING, "declaration admitted via placeholder"))
    return VerifyResult(outcome.ok, messages, time.monotonic() - start)


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


class ToyBackend:
    """Pure in-process backend over the toy language."""

    kind = "toy"

    def open(self, header: StatementHeader) -> None:
        # The header's goal must itself be a toy declaration.
        try:
            toy.parse_declaration(header.goal_statement)
        except ToyParseError as exc:
            raise InvalidHeader(str(exc)) from exc

    def verify(
        self,
        source: str,
        context: list[LemmaRecord],
        allow_sorry: bool = False,
        timeout: float | None = None,
    ) -> VerifyResult:
        formulas: dict[str, toy.Formula] = {}
        for record in context:
            decl = toy.parse_declaration(record.source)
            formulas[decl.name] = toy.parse_formula(decl.statement_text)
        return toy_verify(source, formulas, allow_sorry=allow_sorry)

    def close(self) -> None:
        pass


# Default field names for the REPL wire protocol; adjustable because REPL
# versions drift.
DEFAULT_REPL_FIELDS = {
    "cmd": "cmd",
    "env_in": "env",
    "env_out": "env",
    "messages": "messages",
    "severity": "severity",
    "pos": "pos",
    "line": "line",
    "column": "column",
    "data": "data",
}


class LeanReplBackend:
    """Adapter over an external REPL process (newline-delimited JSON).

    Each request carries the source and the environment id of the last
    successful submission; the returned environment id is pinned so the
    process itself implements the lemma cache.
    """

    kind = "lean_repl"

    def __init__(self, command: list[str] | None, fields: dict[str, str] | None = None):
        self.command = command
        self.fields = dict(DEFAULT_REPL_FIELDS, **(fields or {}))
        self._proc: subprocess.Popen | None = None
        self._env_id: int | None = None

    def open(self, header: StatementHeader) -> None:
        if not self.command:
            raise BackendUnavailable("no REPL command configured")
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BackendUnavailable(f"failed to start REPL: {exc}") from exc
        boot = "\n".join(part for part in (header.imports, header.options) if part.strip())
        result = self._roundtrip(boot or "-- empty header", None)
        if not result.ok:
            raise BackendUnavailable(f"REPL handshake failed: {result.error_text}")

    def verify(
        self,
        source: str,
        context: list[LemmaRecord],
        allow_sorry: bool = False,
        timeout: float | None = None,
    ) -> VerifyResult:
        # `sorry` surfaces as a warning in the REPL protocol, so allow_sorry
        # needs no special handling: ok already means "no error messages".
        return self._roundtrip(source, timeout)

    def _roundtrip(self, source: str, timeout: float | None) -> VerifyResult:
        if self._proc is None or self._proc.poll() is not None:
            raise BackendUnavailable("REPL process is not running")
        f = self.fields
        request: dict = {f["cmd"]: source}
        if self._env_id is not None:
            request[f["env_in"]] = self._env_id
        start = time.monotonic()
        self._proc.stdin.write(json.dumps(request) + "\n")
        self._proc.stdin.flush()
        line = _readline_with_timeout(self._proc.stdout, timeout)
        elapsed = time.monotonic() - start
        if line is None:
            return VerifyResult(False, [Message(Severity.ERROR, "Timeout: REPL response")], elapsed)
        response = json.loads(line)
        messages = []
        for item in response.get(f["messages"], []):
            severity = {
                "error": Severity.ERROR,
                "warning": Severity.WARNING,
            }.get(str(item.get(f["severity"], "info")).lower(), Severity.INFO)
            pos = item.get(f["pos"]) or {}
            position = None
            if f["line"] in pos and f["column"] in pos:
                position = (pos[f["line"]], pos[f["column"]])
            messages.append(Message(severity, str(item.get(f["data"], "")), position))
        ok = not any(m.severity is Severity.ERROR for m in messages)
        if ok and f["env_out"] in response:
            self._env_id = response[f["env_out"]]
        return VerifyResult(ok, messages, elapsed)

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._proc = None


def _readline_with_timeout(stream, timeout: float | None) -> str | None:
    if timeout is None:
        line = stream.readline()
        return line if line else None
    box: list[str | None] = [None]

    def _read():
        box[0] = stream.readline() or None

    worker = threading.Thread(target=_read, daemon=True)
    worker.start()
    worker.join(timeout)
    return None if worker.is_alive() else box[0]


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------


@dataclass
class VerifierSession:
    id: str
    header: StatementHeader
    backend: ToyBackend | LeanReplBackend
    banned_tokens: tuple[str, ...] = DEFAULT_BANNED_TOKENS
    submit_timeout: float = DEFAULT_SUBMIT_TIMEOUT_S
    cache: list[LemmaRecord] = field(default_factory=list)
    closed: bool = False
    complete: bool = False
    final_source: str | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def _check_open(self) -> None:
        if self.closed:
            raise SessionClosed(f"session {self.id} is closed")

    def _screen(self, source: str) -> VerifyResult | None:
        if scan_banned_tactics(source, self.banned_tokens):
            msg = Message(Severity.ERROR, "source uses a banned tactic")
            return VerifyResult(False, [msg], uses_banned_tactic=True)
        return None

    def submit_lemma(self, source: str, allow_sorry: bool = False) -> VerifyResult:
        with self._lock:
            self._check_open()
            banned = self._screen(source)
            if banned is not None:
                return banned
            name = _declared_name(source)
            if name is not None and any(r.name == name for r in self.cache):
                raise DuplicateName(f"lemma {name!r} already cached")
            result = self.backend.verify(
                source, self.cache, allow_sorry=allow_sorry, timeout=self.submit_timeout
            )
            if result.ok:
                status = LemmaStatus.PROVED
                if allow_sorry and any(m.severity is Severity.WARNING for m in result.messages):
                    status = LemmaStatus.SORRY_ADMITTED
                # Cache invariant: only fully proved lemmas enter the context.
                if status is LemmaStatus.PROVED:
                    self.cache.append(
                        LemmaRecord(
                            name=name or f"anon_{len(self.cache)}",
                            source=source,
                            status=status,
                            diagnostics=list(result.messages),
                            elapsed=result.elapsed,
                            sequence_index=len(self.cache),
                        )
                    )
            return result

    def submit_final(self, source: str) -> VerifyResult:
        with self._lock:
            self._check_open()
            if not _goals_match(source, self.header.goal_statement):
                raise GoalMismatch("final declaration does not match the header goal")
            banned = self._screen(source)
            if banned is not None:
                return banned
            result = self.backend.verify(source, self.cache, timeout=self.submit_timeout)
            if result.ok:
                self.complete = True
                self.final_source = source
            return result

    def context(self) -> tuple[StatementHeader, list[LemmaRecord]]:
        return self.header, list(self.cache)

    def assembled_document(self) -> str:
        """The self-contained proof: header, cached lemmas, final theorem."""
        if not self.complete or self.final_source is None:
            raise SessionClosed("session has no verified final proof")
        parts = [p for p in (self.header.imports, self.header.options) if p.strip()]
        parts.extend(record.source for record in self.cache)
        parts.append(self.final_source)
        return "\n\n".join(parts)

    def close(self) -> None:
        if not self.closed:
            self.backend.close()
            self.closed = True


def _declared_name(source: str) -> str | None:
    m = re.match(r"\s*(?:lemma|theorem|def)\s+([A-Za-z_][A-Za-z0-9_']*)", source)
    return m.group(1) if m else None


def _signature_tokens(source: str) -> tuple[str, ...]:
    """Tokens of the declaration signature (up to `:=`), whitespace-insensitive."""
    head = source.split(":=", 1)[0]
    return tuple(re.findall(r"[A-Za-z0-9_']+|[^\sA-Za-z0-9_']", head))


def _goals_match(source: str, goal_statement: str) -> bool:
    return _signature_tokens(source) == _signature_tokens(goal_statement)


class VerifierEnv:
    """Factory and registry for verification sessions."""

    def __init__(
        self,
        repl_command: list[str] | None = None,
        repl_fields: dict[str, str] | None = None,
        banned_tokens: tuple[str, ...] = DEFAULT_BANNED_TOKENS,
        submit_timeout: float = DEFAULT_SUBMIT_TIMEOUT_S,
    ):
        self.repl_command = repl_command
        self.repl_fields = repl_fields
        self.banned_tokens = banned_tokens
        self.submit_timeout = submit_timeout
        self._sessions: dict[str, VerifierSession] = {}
        self._lock = threading.Lock()

    def open_session(self, header: StatementHeader, backend_kind: str = "toy") -> VerifierSession:
        header.validate()
        if backend_kind == "toy":
            backend: ToyBackend | LeanReplBackend = ToyBackend()
        elif backend_kind == "lean_repl":
            backend = LeanReplBackend(self.repl_command, self.repl_fields)
        else:
            raise InvalidHeader(f"unknown backend kind {backend_kind!r}")
        backend.open(header)
        session = VerifierSession(
            id=uuid.uuid4().hex,
            header=header,
            backend=backend,
            banned_tokens=self.banned_tokens,
            submit_timeout=self.submit_timeout,
        )
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> VerifierSession:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSession(session_id)
        return session

    def session_context(self, session_id: str) -> tuple[StatementHeader, list[LemmaRecord]]:
        return self.get(session_id).context()
