"""Orchestration framework for lemma-incremental agentic theorem proving."""

from .verifier import (
    StatementHeader,
    VerifierEnv,
    VerifierSession,
    VerifyResult,
    scan_banned_tactics,
    toy_verify,
)
from .agent import (
    ProblemSpec,
    ScriptedBackend,
    Trajectory,
    TrajectoryBudget,
    count_tokens,
    run_light_inference,
    run_trajectory,
    summarize,
)
from .tools import ToolCall, ToolHub, ToolResult, parse_tool_calls
from .sketch import (
    RewardInputs,
    RubricVerdict,
    Sketch,
    detect_delegation,
    fuse_reward,
    judge_lemma,
    judge_sketch,
    normalize_nl_score,
    parse_sketch,
    structural_check,
)
from .workflow import AgentRoles, WorkflowConfig, WorkflowRunner, solve

__version__ = "0.1.0"

__all__ = [
    "AgentRoles",
    "ProblemSpec",
    "RewardInputs",
    "RubricVerdict",
    "ScriptedBackend",
    "Sketch",
    "StatementHeader",
    "ToolCall",
    "ToolHub",
    "ToolResult",
    "Trajectory",
    "TrajectoryBudget",
    "VerifierEnv",
    "VerifierSession",
    "VerifyResult",
    "WorkflowConfig",
    "WorkflowRunner",
    "count_tokens",
    "detect_delegation",
    "fuse_reward",
    "judge_lemma",
    "judge_sketch",
    "normalize_nl_score",
    "parse_sketch",
    "parse_tool_calls",
    "run_light_inference",
    "run_trajectory",
    "scan_banned_tactics",
    "solve",
    "structural_check",
    "summarize",
    "toy_verify",
]
