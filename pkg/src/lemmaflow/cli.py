"""Command-line entry point.

Subcommands: `prove` one problem file, `bench` a problem set, `curate` a
corpus, `report` a run directory, `index search` an embedding index. Without
a config file everything runs against the deterministic toy roles, so the
full pipeline is exercisable offline.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import bench, curation, index as index_mod
from .agent import HttpChatBackend, TrajectoryBudget
from .tools import ToolHub
from .verifier import VerifierEnv
from .toyroles import ToyJudge, ToyNlProver, ToyProverBackend, ToySketcher
from .workflow import AgentRoles, WorkflowConfig


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    # Environment variables override endpoint URLs and credentials only.
    for role, settings in config.get("backends", {}).items():
        override = os.environ.get(f"LEMMAFLOW_{role.upper()}_ENDPOINT")
        if override:
            settings["endpoint"] = override
    return config


def _make_roles(config: dict) -> AgentRoles:
    backends = config.get("backends", {})

    def _backend(role: str, default):
        settings = backends.get(role)
        if not settings:
            return default
        return HttpChatBackend(
            endpoint=settings["endpoint"],
            model=settings.get("model", ""),
            temperature=settings.get("temperature", 1.0),
        )

    return AgentRoles(
        nl_prover=_backend("nl_prover", ToyNlProver()),
        sketcher=_backend("sketcher", ToySketcher()),
        lean_prover=_backend("lean_prover", ToyProverBackend()),
        judge=_backend("judge", ToyJudge()),
    )


def _parse_budget(text: str) -> tuple[int, int]:
    n, _, m = text.partition("x")
    return int(n), int(m)


def _workflow_config(config: dict, args) -> WorkflowConfig:
    section = dict(config.get("workflow", {}))
    if getattr(args, "max_depth", None) is not None:
        section["max_depth"] = args.max_depth
    budgets = config.get("budgets", {})
    budget = TrajectoryBudget(
        max_tokens=budgets.get("max_tokens", 65536),
        max_tool_calls=budgets.get("max_tool_calls", 28),
    )
    return WorkflowConfig(
        max_depth=section.get("max_depth", 4),
        lemma_n=section.get("lemma_n", 3),
        lemma_m=section.get("lemma_m", 3),
        parallel_width=section.get("parallel_width", 8),
        restart_enabled=section.get("restart_enabled", True),
        budget=budget,
    )


def _make_hub(config: dict) -> ToolHub:
    hub = ToolHub(embedder=index_mod.HashEmbedder())
    section = config.get("index", {})
    if section.get("path"):
        hub.load_index(section["path"], section.get("commit_pin"))
    return hub


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="lemmaflow")
    sub = parser.add_subparsers(dest="command", required=True)

    p_prove = sub.add_parser("prove", help="run one problem file")
    p_prove.add_argument("problem_file")
    p_prove.add_argument("--mode", choices=["agent", "workflow"], default="workflow")
    p_prove.add_argument("--budget", default="3x3", help="NxM light-inference budget")
    p_prove.add_argument("--max-depth", type=int, default=None)
    p_prove.add_argument("--out", default="runs/prove")
    p_prove.add_argument("--config", default=None)

    p_bench = sub.add_parser("bench", help="run a benchmark set")
    p_bench.add_argument("problem_set")
    p_bench.add_argument("--config", default=None)
    p_bench.add_argument("--mode", choices=["agent", "workflow"], default="agent")
    p_bench.add_argument("--budget", default="8x8")
    p_bench.add_argument("--out", default="runs/bench")
    p_bench.add_argument("--resume", action="store_true")

    p_curate = sub.add_parser("curate", help="curate an RL candidate corpus")
    p_curate.add_argument("corpus")
    p_curate.add_argument("--budget", default="4x8")
    p_curate.add_argument("--out", default="runs/curate")
    p_curate.add_argument("--config", default=None)

    p_report = sub.add_parser("report", help="report metrics for a run directory")
    p_report.add_argument("run_dir")
    p_report.add_argument("--format", choices=["text", "json", "csv"], default="text")

    p_index = sub.add_parser("index", help="index utilities")
    index_sub = p_index.add_subparsers(dest="index_command", required=True)
    p_search = index_sub.add_parser("search", help="query an index")
    p_search.add_argument("query")
    p_search.add_argument("-k", type=int, default=5)
    p_search.add_argument("--index", required=True, dest="index_path")

    args = parser.parse_args(argv)
    config = _load_config(getattr(args, "config", None))

    if args.command == "report":
        metrics = bench.compute_metrics(bench.load_results(args.run_dir))
        print(bench.emit_report(metrics, args.format))
        return 0

    if args.command == "index":
        idx = index_mod.load_index(args.index_path)
        embedder = index_mod.HashEmbedder(idx.dimension)
        for decl, score in index_mod.search(idx, embedder.embed(args.query), args.k):
            print(f"{score:.4f}\t{decl.kind}\t{decl.name}\t{decl.statement}")
        return 0

    roles = _make_roles(config)
    env = VerifierEnv()
    hub = _make_hub(config)

    if args.command in ("prove", "bench"):
        n, m = _parse_budget(args.budget)
        run_config = bench.RunConfig(
            mode=args.mode,
            n_parallel=n,
            m_rounds=m,
            workflow=_workflow_config(config, args),
            out_dir=args.out,
            resume=getattr(args, "resume", False),
        )
        path = args.problem_file if args.command == "prove" else args.problem_set
        problem_set = bench.load_problems(path)
        if not problem_set.problems:
            print("warning: empty problem set", file=sys.stderr)
        records = bench.run_benchmark(problem_set, run_config, roles, env=env, hub=hub)
        metrics = bench.compute_metrics(bench.load_results(args.out))
        print(bench.emit_report(metrics, "text"))
        return 0 if all(r.get("solved") for r in records) or args.command == "bench" else 1

    if args.command == "curate":
        n, m = _parse_budget(args.budget)
        corpus = curation.load_corpus(args.corpus)
        os.makedirs(args.out, exist_ok=True)
        log_path = os.path.join(args.out, "decisions.jsonl")
        kept, decisions = curation.run_curation(
            corpus, roles.lean_prover, env, hub,
            n_parallel=n, m_rounds=m, log_path=log_path,
        )
        print(f"kept {len(kept)}/{len(decisions)} candidates; log at {log_path}")
        return 0

    parser.error(f"unhandled command {args.command}")
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
