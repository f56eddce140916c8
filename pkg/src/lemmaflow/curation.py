"""Dataset curation: evaluate candidates under light inference, keep/drop.

Rules, applied in order per evaluation record: drop anything a variant solves
more than three times (too easy), drop anything no variant solves at all,
promote summary-only solves to the direct prompt, otherwise retain every
variant with at least one solve.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .agent import ProblemSpec, TrajectoryBudget, Trajectory, run_light_inference
from .tools import ToolHub
from .verifier import StatementHeader, VerifierEnv

VARIANT_DIRECT = "direct"
VARIANT_SKETCH = "sketch_conditioned"
VARIANT_SUMMARY = "summary_conditioned"
VARIANTS = (VARIANT_DIRECT, VARIANT_SKETCH, VARIANT_SUMMARY)

TOO_EASY_THRESHOLD = 3  # strict: drop only when solves exceed this

ACTION_KEEP = "keep"
ACTION_DROP = "drop"
REASON_TOO_EASY = "too_easy"
REASON_UNSOLVABLE = "unsolvable"
REASON_RETAINED = "retained"
REASON_PROMOTED = "promoted_to_direct"


@dataclass(frozen=True)
class CandidateProblem:
    id: str
    header: StatementHeader
    prompt_variants: tuple[str, ...] = (VARIANT_DIRECT,)
    source_tag: str = ""
    nl_proof: str | None = None

    def __post_init__(self):
        if VARIANT_DIRECT not in self.prompt_variants:
            raise ValueError("the direct variant is always required")
        for variant in self.prompt_variants:
            if variant not in VARIANTS:
                raise ValueError(f"unknown prompt variant {variant!r}")


@dataclass
class EvalRecord:
    problem_id: str
    per_variant: dict[str, int]
    budget: tuple[int, int]
    errors: dict[str, str] = field(default_factory=dict)


@dataclass
class CurationDecision:
    problem_id: str
    action: str
    kept_variants: set[str]
    reason: str


def label_reward(trajectory: Trajectory) -> int:
    """Outcome reward: +1 for a verifier-confirmed proof, -1 otherwise."""
    if trajectory.outcome == "solved" and trajectory.final_proof is not None:
        return 1
    return -1


def evaluate_candidate(
    problem: CandidateProblem,
    prover,
    env: VerifierEnv,
    hub: ToolHub,
    budget: TrajectoryBudget = TrajectoryBudget(),
    n_parallel: int = 4,
    m_rounds: int = 8,
    backend_kind: str = "toy",
    retry_backoff: float = 1.0,
) -> EvalRecord:
    """Solve counts per prompt variant; one solve per chain at most."""
    record = EvalRecord(problem.id, {}, (n_parallel, m_rounds))
    for variant in problem.prompt_variants:
        spec = ProblemSpec(
            id=f"{problem.id}:{variant}",
            header=problem.header,
            nl_proof=problem.nl_proof if variant == VARIANT_SKETCH else None,
            summary="(no earlier attempt)" if variant == VARIANT_SUMMARY else None,
        )
        try:
            result = run_light_inference(
                spec, prover, n_parallel, m_rounds, budget,
                open_session=lambda: env.open_session(problem.header, backend_kind),
                hub=hub, retry_backoff=retry_backoff,
            )
        except Exception as exc:  # errored variants count as zero solves
            record.per_variant[variant] = 0
            record.errors[variant] = str(exc)
            continue
        record.per_variant[variant] = sum(
            1 for t in result.all if t.outcome == "solved"
        )
    return record


def apply_rules(record: EvalRecord) -> CurationDecision:
    counts = record.per_variant
    if any(count > TOO_EASY_THRESHOLD for count in counts.values()):
        return CurationDecision(record.problem_id, ACTION_DROP, set(), REASON_TOO_EASY)
    if all(count == 0 for count in counts.values()):
        return CurationDecision(record.problem_id, ACTION_DROP, set(), REASON_UNSOLVABLE)
    if counts.get(VARIANT_SUMMARY, 0) > 0 and counts.get(VARIANT_DIRECT, 0) == 0:
        return CurationDecision(
            record.problem_id, ACTION_KEEP, {VARIANT_DIRECT}, REASON_PROMOTED
        )
    kept = {variant for variant, count in counts.items() if count > 0}
    return CurationDecision(record.problem_id, ACTION_KEEP, kept, REASON_RETAINED)


def run_curation(
    corpus: list[CandidateProblem],
    prover,
    env: VerifierEnv,
    hub: ToolHub,
    budget: TrajectoryBudget = TrajectoryBudget(),
    n_parallel: int = 4,
    m_rounds: int = 8,
    backend_kind: str = "toy",
    log_path: str | None = None,
    retry_backoff: float = 1.0,
) -> tuple[list[CandidateProblem], list[CurationDecision]]:
    """Batch evaluate-and-decide; errored problems are logged and skipped."""
    kept: list[CandidateProblem] = []
    decisions: list[CurationDecision] = []
    for problem in corpus:
        record = evaluate_candidate(
            problem, prover, env, hub, budget,
            n_parallel=n_parallel, m_rounds=m_rounds,
            backend_kind=backend_kind, retry_backoff=retry_backoff,
        )
        decision = apply_rules(record)
        decisions.append(decision)
        if decision.action == ACTION_KEEP:
            kept.append(replace(problem, prompt_variants=tuple(sorted(decision.kept_variants))))
        if log_path:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({
                    "problem_id": decision.problem_id,
                    "action": decision.action,
                    "reason": decision.reason,
                    "kept_variants": sorted(decision.kept_variants),
                    "counts": record.per_variant,
                    "count_semantics": "solves counted per variant over chains",
                }) + "\n")
    return kept, decisions


def load_corpus(path: str) -> list[CandidateProblem]:
    """JSON-lines corpus, one candidate per line."""
    corpus = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj["id"] in seen:
                raise ValueError(f"duplicate candidate id {obj['id']!r}")
            seen.add(obj["id"])
            corpus.append(CandidateProblem(
                id=obj["id"],
                header=StatementHeader(
                    goal_statement=obj["goal_statement"],
                    imports=obj.get("imports", ""),
                    options=obj.get("options", ""),
                ),
                prompt_variants=tuple(obj.get("prompt_variants", [VARIANT_DIRECT])),
                source_tag=obj.get("source_tag", ""),
                nl_proof=obj.get("nl_proof"),
            ))
    return corpus
