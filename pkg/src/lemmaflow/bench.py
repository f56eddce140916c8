"""Benchmark harness: problem ingestion, crash-safe runs, metric reports."""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

from .agent import ProblemSpec, TrajectoryBudget, run_light_inference
from .errors import DuplicateId, FormatError
from .tools import ToolHub
from .verifier import StatementHeader, VerifierEnv
from .workflow import AgentRoles, WorkflowConfig, solve

RESULTS_SCHEMA = "lemmaflow-results-v1"

MODE_AGENT_ONLY = "agent"
MODE_FULL_WORKFLOW = "workflow"


@dataclass(frozen=True)
class BenchProblem:
    id: str
    header: StatementHeader
    nl_statement: str | None = None


@dataclass
class ProblemSet:
    name: str
    problems: list[BenchProblem]
    lean_version_tag: str = "v4.22.0"


@dataclass
class RunConfig:
    mode: str = MODE_AGENT_ONLY
    n_parallel: int = 8
    m_rounds: int = 8
    budget: TrajectoryBudget = field(default_factory=TrajectoryBudget)
    workflow: WorkflowConfig = field(default_factory=WorkflowConfig)
    backend_kind: str = "toy"
    out_dir: str = "."
    resume: bool = False
    retry_backoff: float = 1.0


@dataclass
class Metrics:
    solved_count: int
    total: int
    solve_rate: float
    hour_histogram: dict[int, int]


def load_problems(path: str) -> ProblemSet:
    """JSON-lines problem set: one header record then one problem per line."""
    problems = []
    name = os.path.splitext(os.path.basename(path))[0]
    tag = "v4.22.0"
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: {exc}") from exc
            if obj.get("schema") or obj.get("set_name"):
                name = obj.get("set_name", name)
                tag = obj.get("lean_version_tag", tag)
                continue
            if "id" not in obj or "goal_statement" not in obj:
                raise FormatError(f"line {lineno}: missing id or goal_statement")
            if obj["id"] in seen:
                raise DuplicateId(obj["id"])
            seen.add(obj["id"])
            problems.append(BenchProblem(
                id=obj["id"],
                header=StatementHeader(
                    goal_statement=obj["goal_statement"],
                    imports=obj.get("imports", ""),
                    options=obj.get("options", ""),
                ),
                nl_statement=obj.get("nl_statement"),
            ))
    return ProblemSet(name=name, problems=problems, lean_version_tag=tag)


def _results_path(out_dir: str) -> str:
    return os.path.join(out_dir, "results.jsonl")


def _load_finished(path: str) -> set[str]:
    finished = set()
    if not os.path.exists(path):
        return finished
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "id" in obj:
                finished.add(obj["id"])
    return finished


def run_benchmark(
    problem_set: ProblemSet,
    config: RunConfig,
    roles: AgentRoles,
    env: VerifierEnv | None = None,
    hub: ToolHub | None = None,
) -> list[dict]:
    """One record per problem, flushed immediately; failures never abort."""
    env = env or VerifierEnv()
    hub = hub or ToolHub()
    os.makedirs(config.out_dir, exist_ok=True)
    path = _results_path(config.out_dir)
    finished = _load_finished(path) if config.resume else set()
    if not config.resume and os.path.exists(path):
        os.remove(path)

    records = []
    with open(path, "a", encoding="utf-8") as out:
        if not finished:
            out.write(json.dumps({
                "schema": RESULTS_SCHEMA,
                "set_name": problem_set.name,
                "lean_version_tag": problem_set.lean_version_tag,
            }) + "\n")
            out.flush()
        for problem in problem_set.problems:
            if problem.id in finished:
                continue
            record = _run_one(problem, config, roles, env, hub)
            records.append(record)
            out.write(json.dumps(record) + "\n")
            out.flush()
    return records


def _run_one(problem, config: RunConfig, roles: AgentRoles, env, hub) -> dict:
    started = time.monotonic()
    record = {"id": problem.id, "solved": False, "trajectories_used": 0, "restarts_used": 0}
    try:
        if config.mode == MODE_FULL_WORKFLOW:
            result = solve(
                problem.header, roles, config.workflow,
                env=env, hub=hub, backend_kind=config.backend_kind,
            )
            record["solved"] = result.solved
            record["trajectories_used"] = result.trajectories_used
            record["restarts_used"] = result.restarts_used
        else:
            spec = ProblemSpec(id=problem.id, header=problem.header,
                               nl_proof=problem.nl_statement)
            result = run_light_inference(
                spec, roles.lean_prover, config.n_parallel, config.m_rounds,
                config.budget,
                open_session=lambda: env.open_session(problem.header, config.backend_kind),
                hub=hub, retry_backoff=config.retry_backoff,
            )
            record["solved"] = result.best is not None
            record["trajectories_used"] = len(result.all)
    except Exception as exc:
        record["error"] = str(exc)
    if record["solved"]:
        record["solve_seconds"] = time.monotonic() - started
    return record


def compute_metrics(records: list[dict]) -> Metrics:
    scored = [r for r in records if "id" in r]
    solved = [r for r in scored if r.get("solved")]
    histogram: dict[int, int] = {}
    for record in solved:
        # Ceiling-of-hours buckets: a 0.5 h solve lands in bucket 1.
        bucket = max(1, math.ceil(record.get("solve_seconds", 0.0) / 3600.0))
        histogram[bucket] = histogram.get(bucket, 0) + 1
    total = len(scored)
    return Metrics(
        solved_count=len(solved),
        total=total,
        solve_rate=(len(solved) / total) if total else 0.0,
        hour_histogram=histogram,
    )


def load_results(run_dir: str) -> list[dict]:
    path = _results_path(run_dir)
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return [r for r in records if "id" in r]


def format_rate(rate: float) -> str:
    """Percentage to 3 significant figures."""
    return f"{rate * 100:.3g}"


def emit_report(metrics: Metrics, fmt: str = "text") -> str:
    buckets = sorted(metrics.hour_histogram.items())
    if fmt == "json":
        return json.dumps({
            "solved_count": metrics.solved_count,
            "total": metrics.total,
            "solve_rate_percent": format_rate(metrics.solve_rate),
            "hour_histogram": {str(k): v for k, v in buckets},
        }, indent=1)
    if fmt == "csv":
        lines = ["hour_bucket,solved"]
        lines.extend(f"{bucket},{count}" for bucket, count in buckets)
        return "\n".join(lines)
    if fmt == "text":
        lines = [
            f"solved {metrics.solved_count}/{metrics.total} "
            f"({format_rate(metrics.solve_rate)}%)",
        ]
        for bucket, count in buckets:
            lines.append(f"  hour {bucket}: {count}")
        return "\n".join(lines)
    raise ValueError(f"unknown report format {fmt!r}")
