"""Multi-turn proving trajectories under hard budgets, plus Pass@N x M.

A trajectory drives one agent backend against one verifier session: generate,
parse tool calls, dispatch, feed results back, until the final theorem
verifies or a budget trips. The scheduler (`run_light_inference`) runs N
independent chains of up to M sequential trajectories, each round conditioned
on a self-summary of the previous failure.
"""

from __future__ import annotations

import concurrent.futures
import importlib.resources
import itertools
import re
import time
from dataclasses import dataclass, field, replace
from typing import Callable

from .errors import BackendError, TransportError
from .tools import ToolHub, parse_tool_calls
from .verifier import StatementHeader, VerifierSession

DEFAULT_MAX_TOKENS = 65536
DEFAULT_MAX_TOOL_CALLS = 28
DEFAULT_SUMMARY_CAP = 2048
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF_S = 1.0

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def count_tokens(text: str) -> int:
    """Default tokenizer: whitespace and punctuation segmentation."""
    return len(_TOKEN_RE.findall(text))


@dataclass(frozen=True)
class TrajectoryBudget:
    max_tokens: int = DEFAULT_MAX_TOKENS
    max_tool_calls: int = DEFAULT_MAX_TOOL_CALLS
    per_call_timeout: float = 120.0

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.max_tool_calls < 0:
            raise ValueError("max_tool_calls must be non-negative")


@dataclass
class Turn:
    role: str  # system | agent | tool_results
    text: str
    token_count: int
    calls: list = field(default_factory=list)


@dataclass
class Trajectory:
    problem_id: str
    turns: list[Turn] = field(default_factory=list)
    tokens_used: int = 0
    tool_calls_used: int = 0
    outcome: str = "budget_exhausted"  # solved | budget_exhausted | backend_error
    final_proof: str | None = None
    proved_lemmas: list[str] = field(default_factory=list)
    error: str | None = None


@dataclass(frozen=True)
class ProblemSpec:
    id: str
    header: StatementHeader
    nl_proof: str | None = None
    summary: str | None = None


@dataclass
class Summary:
    source_trajectory_id: str
    text: str
    token_count: int


class ScriptedBackend:
    """Deterministic backend replaying a fixed script of turn texts.

    Entries may be strings or callables taking the message list; exhausting
    the script repeats the last entry (or yields empty text for an empty
    script). `clone()` returns a fresh replay for chain isolation.
    """

    name = "scripted"

    def __init__(self, script: list):
        self.script = list(script)
        self.cursor = 0

    def generate(self, messages: list[dict]) -> str:
        if not self.script:
            return ""
        entry = self.script[min(self.cursor, len(self.script) - 1)]
        self.cursor += 1
        return entry(messages) if callable(entry) else entry

    def clone(self) -> "ScriptedBackend":
        return ScriptedBackend(self.script)


class HttpChatBackend:
    """Chat-completion backend over JSON HTTP (one request per turn)."""

    def __init__(self, endpoint: str, model: str, temperature: float = 1.0,
                 max_tokens: int = 8192, timeout: float = 300.0):
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout = timeout
        self.name = f"http:{model}"

    def generate(self, messages: list[dict]) -> str:
        import requests

        try:
            response = requests.post(
                self.endpoint,
                json={
                    "model": self.model,
                    "messages": [{"role": m["role"], "content": m["text"]} for m in messages],
                    "max_tokens": self.max_tokens,
                    "temperature": self.temperature,
                },
                timeout=self.timeout,
            )
            response.raise_for_status()
            return response.json()["choices"][0]["message"]["content"]
        except Exception as exc:
            raise TransportError(str(exc)) from exc


def _load_template(name: str) -> str:
    return importlib.resources.files("lemmaflow.assets").joinpath(name).read_text("utf-8")


def render_prompt(problem: ProblemSpec) -> str:
    """Template selection by which optional inputs are present."""
    header_text = "\n".join(
        p for p in (problem.header.imports, problem.header.options) if p.strip()
    )
    fields = {"goal": problem.header.goal_statement, "header": header_text or "(none)"}
    if problem.summary is not None:
        return _load_template("prompt_summary.txt").format(summary=problem.summary, **fields)
    if problem.nl_proof is not None:
        return _load_template("prompt_sketch.txt").format(nl_proof=problem.nl_proof, **fields)
    return _load_template("prompt_direct.txt").format(**fields)


def _generate_with_retries(backend, messages, retries=DEFAULT_RETRIES, backoff=DEFAULT_BACKOFF_S) -> str:
    for attempt in range(retries):
        try:
            return backend.generate(messages)
        except TransportError:
            if attempt == retries - 1:
                raise BackendError("backend transport failed after retries")
            time.sleep(backoff * (2**attempt))
    raise BackendError("unreachable")  # pragma: no cover


def run_trajectory(
    problem: ProblemSpec,
    backend,
    session: VerifierSession,
    hub: ToolHub,
    budget: TrajectoryBudget = TrajectoryBudget(),
    tokenizer: Callable[[str], int] = count_tokens,
    retry_backoff: float = DEFAULT_BACKOFF_S,
) -> Trajectory:
    traj = Trajectory(problem_id=problem.id)

    def _append(role: str, text: str, calls=()) -> bool:
        # Budget safety: stop before overflow, never append past the cap.
        tokens = tokenizer(text)
        if traj.tokens_used + tokens > budget.max_tokens:
            traj.outcome = "budget_exhausted"
            return False
        traj.turns.append(Turn(role, text, tokens, list(calls)))
        traj.tokens_used += tokens
        return True

    if not _append("system", render_prompt(problem)):
        return traj

    idle_turns = 0
    while True:
        messages = [{"role": t.role, "text": t.text} for t in traj.turns]
        try:
            text = _generate_with_retries(backend, messages, backoff=retry_backoff)
        except BackendError as exc:
            traj.outcome = "backend_error"
            traj.error = str(exc)
            return traj
        parsed = parse_tool_calls(text)
        if not _append("agent", text, parsed.calls):
            return traj

        results = list(parsed.malformed)
        solved = False
        for call in parsed.calls:
            if traj.tool_calls_used >= budget.max_tool_calls:
                traj.outcome = "budget_exhausted"
                return traj
            result = hub.dispatch(call, session)
            traj.tool_calls_used += 1
            results.append(result)
            if result.status == "ok" and call.tool == "verify_lemma":
                traj.proved_lemmas.append(call.args["source"])
            if result.status == "ok" and call.tool == "verify_final":
                solved = True
                break

        if results and not _append("tool_results", "\n".join(r.render() for r in results)):
            return traj
        if solved:
            traj.outcome = "solved"
            traj.final_proof = session.assembled_document()
            return traj
        if not parsed.calls and not parsed.malformed:
            # A backend that stops calling tools cannot make progress; two
            # idle turns in a row end the trajectory instead of spinning.
            idle_turns += 1
            if idle_turns >= 2:
                traj.outcome = "budget_exhausted"
                return traj
        else:
            idle_turns = 0


def summarize(
    trajectory: Trajectory,
    backend,
    token_cap: int = DEFAULT_SUMMARY_CAP,
    tokenizer: Callable[[str], int] = count_tokens,
    retry_backoff: float = DEFAULT_BACKOFF_S,
) -> Summary:
    """Condense a failed trajectory into context for the next attempt."""
    if trajectory.outcome == "solved":
        raise ValueError("summarize expects an unsolved trajectory")
    if not trajectory.turns:
        raise ValueError("summarize expects a non-empty trajectory")
    condensed = ["Summarize this proving attempt for the next attempt."]
    if trajectory.proved_lemmas:
        condensed.append("Proved lemmas:")
        condensed.extend(trajectory.proved_lemmas)
    errors = [t.text for t in trajectory.turns if t.role == "tool_results"]
    if errors:
        condensed.append("Last tool feedback:")
        condensed.append(errors[-1])
    agent_turns = [t.text for t in trajectory.turns if t.role == "agent"]
    if agent_turns:
        condensed.append("Last strategy attempted:")
        condensed.append(agent_turns[-1])
    try:
        text = _generate_with_retries(
            backend, [{"role": "system", "text": "\n".join(condensed)}], backoff=retry_backoff
        )
    except BackendError:
        return Summary(trajectory.problem_id, "", 0)  # empty-summary sentinel
    tokens = _TOKEN_RE.findall(text)
    if len(tokens) > token_cap:
        text = " ".join(tokens[:token_cap])
    return Summary(trajectory.problem_id, text, tokenizer(text))


@dataclass
class LightInferenceResult:
    best: Trajectory | None
    all: list[Trajectory]


def run_light_inference(
    problem: ProblemSpec,
    backend,
    n_parallel: int,
    m_rounds: int,
    budget: TrajectoryBudget,
    open_session: Callable[[], VerifierSession],
    hub: ToolHub,
    summarizer=None,
    tokenizer: Callable[[str], int] = count_tokens,
    retry_backoff: float = DEFAULT_BACKOFF_S,
) -> LightInferenceResult:
    """N independent chains, each up to M rounds with inter-round summaries.

    A chain stops at its first solve; `best` is the earliest-completed solved
    trajectory across chains.
    """
    if n_parallel < 1 or m_rounds < 1:
        raise ValueError("N and M must be >= 1")
    summarizer = summarizer or backend
    completion = itertools.count()
    done: list[tuple[int, Trajectory]] = []

    def _chain(chain_index: int) -> list[tuple[int, Trajectory]]:
        chain_backend = backend.clone() if hasattr(backend, "clone") else backend
        chain_summarizer = summarizer.clone() if hasattr(summarizer, "clone") else summarizer
        results = []
        summary_text: str | None = None
        for round_index in range(m_rounds):
            spec = replace(problem, summary=summary_text) if summary_text is not None else problem
            session = open_session()
            try:
                traj = run_trajectory(
                    spec, chain_backend, session, hub, budget,
                    tokenizer=tokenizer, retry_backoff=retry_backoff,
                )
            finally:
                session.close()
            results.append((next(completion), traj))
            if traj.outcome == "solved":
                break
            if round_index + 1 < m_rounds:
                summary = summarize(
                    traj, chain_summarizer, tokenizer=tokenizer, retry_backoff=retry_backoff
                )
                summary_text = summary.text or None
        return results

    if n_parallel == 1:
        done.extend(_chain(0))
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=n_parallel) as pool:
            for chunk in pool.map(_chain, range(n_parallel)):
                done.extend(chunk)

    solved = [(order, t) for order, t in done if t.outcome == "solved"]
    best = min(solved, key=lambda pair: pair[0])[1] if solved else None
    return LightInferenceResult(best=best, all=[t for _, t in done])
