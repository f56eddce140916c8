"""Decomposition tree: refine-on-disproof, depth caps, pool restarts, assembly."""

import json

import pytest

from lemmaflow import toy
from lemmaflow.agent import ScriptedBackend, TrajectoryBudget
from lemmaflow.errors import AssemblyVerificationFailed
from lemmaflow.toyroles import ToyJudge, ToyNlProver, ToyProverBackend, ToySketcher
from lemmaflow.verifier import StatementHeader, VerifierEnv
from lemmaflow.workflow import (
    NODE_DECOMPOSED,
    NODE_DISPROVED,
    NODE_FAILED,
    NODE_PROVED,
    AgentRoles,
    ProvenLemmaPool,
    WorkflowConfig,
    WorkflowRunner,
    restart_with_pool,
    solve,
)


def toy_roles(max_eval_atoms=None, sketcher=None):
    return AgentRoles(
        nl_prover=ToyNlProver(),
        sketcher=sketcher or ToySketcher(),
        lean_prover=ToyProverBackend(max_eval_atoms=max_eval_atoms),
        judge=ToyJudge(),
    )


def config(**kwargs):
    kwargs.setdefault("parallel_width", 1)
    kwargs.setdefault("retry_backoff", 0.001)
    return WorkflowConfig(**kwargs)


def verify_document(document, goal):
    """Independent end-to-end re-check of an assembled proof document."""
    env = VerifierEnv()
    session = env.open_session(StatementHeader(goal_statement=goal))
    decls = [
        d for d in document.split("\n\n")
        if d.strip() and not d.lstrip().startswith("--")
    ]
    for decl in decls[:-1]:
        assert session.submit_lemma(decl).ok, decl
    assert session.submit_final(decls[-1]).ok
    session.close()


# ---------------------------------------------------------------------------
# straight-line solves


def test_flat_conjunction_solved():
    goal = "theorem main : 1 + 1 = 2 ∧ 2 * 3 = 6 := by sorry"
    result = solve(StatementHeader(goal_statement=goal), toy_roles(), config())
    assert result.solved
    assert result.restarts_used == 0
    verify_document(result.final_document, goal)


def test_tree_snapshot_shape(tmp_path):
    goal = "theorem main : 1 = 1 ∧ 2 = 2 := by sorry"
    snap = tmp_path / "tree.json"
    result = solve(
        StatementHeader(goal_statement=goal), toy_roles(),
        config(snapshot_path=str(snap)),
    )
    assert result.solved
    tree = json.loads(snap.read_text())
    assert {n["id"] for n in tree["nodes"]} == set(result.timings)
    root = next(n for n in tree["nodes"] if n["parent"] is None)
    assert root["state"] == NODE_DECOMPOSED
    assert len(root["children"]) == 2
    assert tree["config"]["lemma_budget"] == [3, 3]


def test_depth_recursion_with_weak_prover():
    # one eval per trajectory forces decomposition down to single atoms
    goal = (
        "theorem main : ((1 = 1 ∧ 2 = 2) ∧ (3 = 3 ∧ 4 = 4)) ∧ "
        "((5 = 5 ∧ 6 = 6) ∧ 7 = 7) := by sorry"
    )
    result = solve(
        StatementHeader(goal_statement=goal),
        toy_roles(max_eval_atoms=1),
        config(max_depth=3, restart_enabled=False),
    )
    assert result.solved
    verify_document(result.final_document, goal)
    depths = {n["depth"] for n in result.tree["nodes"]}
    assert max(depths) == 3


def test_depth_cap_fails_honestly():
    goal = "theorem main : (1 = 1 ∧ 2 = 2) ∧ (3 = 3 ∧ 4 = 4) := by sorry"
    result = solve(
        StatementHeader(goal_statement=goal),
        toy_roles(max_eval_atoms=1),
        config(max_depth=1, restart_enabled=False),
    )
    assert not result.solved
    assert result.final_document is None
    states = {n["state"] for n in result.tree["nodes"]}
    assert NODE_FAILED in states


def test_parallel_width_matches_sequential():
    goal = "theorem main : (1 = 1 ∧ 2 = 2) ∧ (3 = 3 ∧ 4 = 4) := by sorry"
    seq = solve(
        StatementHeader(goal_statement=goal), toy_roles(max_eval_atoms=1),
        config(max_depth=2, restart_enabled=False),
    )
    par = solve(
        StatementHeader(goal_statement=goal), toy_roles(max_eval_atoms=1),
        config(max_depth=2, restart_enabled=False, parallel_width=4),
    )
    assert seq.solved and par.solved
    assert sorted(n["statement"] for n in seq.tree["nodes"]) == sorted(
        n["statement"] for n in par.tree["nodes"]
    )


# ---------------------------------------------------------------------------
# disproof and refinement

REFINE_GOAL = "theorem main : 2 * 3 = 6 := by sorry"

# first sketch leans on a false antecedent, delivered through `mp`; the
# antecedent lemma is disprovable by evaluation
BAD_SKETCH = """\
lemma main_imp : 1 = 2 -> 2 * 3 = 6 := by
  sorry

lemma main_ante : 1 = 2 := by
  sorry

theorem main : 2 * 3 = 6 := by
  mp main_imp
  cite main_ante
"""

GOOD_SKETCH = """\
lemma main_direct : 2 * 3 = 6 := by
  sorry

theorem main : 2 * 3 = 6 := by
  cite main_direct
"""


def test_refine_on_disproof_recovers():
    roles = toy_roles(sketcher=ScriptedBackend([BAD_SKETCH, GOOD_SKETCH]))
    result = solve(
        StatementHeader(goal_statement=REFINE_GOAL), roles,
        config(restart_enabled=False),
    )
    assert result.solved
    verify_document(result.final_document, REFINE_GOAL)
    states = {n["statement"].splitlines()[0]: n["state"] for n in result.tree["nodes"]}
    assert states["lemma main_ante : 1 = 2 := by"] == NODE_DISPROVED
    assert states["lemma main_direct : 2 * 3 = 6 := by"] == NODE_PROVED


def test_refine_keeps_proved_siblings():
    runner = WorkflowRunner(
        toy_roles(sketcher=ScriptedBackend([BAD_SKETCH, GOOD_SKETCH])),
        config(restart_enabled=False),
    )
    result = runner.run_workflow(StatementHeader(goal_statement=REFINE_GOAL))
    assert result.solved
    # the vacuously-true implication lemma was proved before the disproof and
    # survives the refinement round
    imp_nodes = [n for n in runner.nodes.values() if "main_imp" in n.statement]
    assert imp_nodes and imp_nodes[0].state == NODE_PROVED
    root = next(n for n in runner.nodes.values() if n.parent is None)
    assert imp_nodes[0].id in root.children


def test_refine_attempts_bounded():
    # sketcher that never stops producing the disprovable sketch
    roles = toy_roles(sketcher=ScriptedBackend([BAD_SKETCH]))
    cfg = config(restart_enabled=False, refine_attempts=2)
    result = solve(StatementHeader(goal_statement=REFINE_GOAL), roles, cfg)
    assert not result.solved


def test_structural_reasks_bounded():
    roles = toy_roles(sketcher=ScriptedBackend(["complete garbage, no lemmas"]))
    result = solve(
        StatementHeader(goal_statement=REFINE_GOAL), roles,
        config(restart_enabled=False, sketch_reasks=2),
    )
    assert not result.solved


# ---------------------------------------------------------------------------
# restart with the proven-lemma pool

RESTART_GOAL = "theorem main : (1 = 1 ∧ 2 = 2) ∧ 3 = 3 := by sorry"

# pass 1: the whole goal rides in a single child, attempted before the small
# pieces exist in the pool, so it fails under the one-eval budget; the pieces
# themselves get proved and pooled afterwards
PASS1_SKETCH = """\
lemma main_whole : (1 = 1 ∧ 2 = 2) ∧ 3 = 3 := by
  sorry

lemma main_p1 : 1 = 1 := by
  sorry

lemma main_p2 : 2 = 2 := by
  sorry

lemma main_p3 : 3 = 3 := by
  sorry

theorem main : (1 = 1 ∧ 2 = 2) ∧ 3 = 3 := by
  cite main_whole
"""

PASS2_SKETCH = """\
lemma main_whole : (1 = 1 ∧ 2 = 2) ∧ 3 = 3 := by
  sorry

theorem main : (1 = 1 ∧ 2 = 2) ∧ 3 = 3 := by
  cite main_whole
"""


def test_restart_reuses_pooled_lemmas():
    roles = toy_roles(
        max_eval_atoms=1,
        sketcher=ScriptedBackend([PASS1_SKETCH, PASS2_SKETCH]),
    )
    result = solve(
        StatementHeader(goal_statement=RESTART_GOAL), roles,
        config(max_depth=1),
    )
    # the big lemma needs three evaluations but the prover has one per run;
    # only the restarted pass, with the atoms citable from the pool, can close it
    assert result.solved
    assert result.restarts_used == 1
    verify_document(result.final_document, RESTART_GOAL)


def test_restart_disabled_stays_failed():
    roles = toy_roles(
        max_eval_atoms=1,
        sketcher=ScriptedBackend([PASS1_SKETCH, PASS2_SKETCH]),
    )
    result = solve(
        StatementHeader(goal_statement=RESTART_GOAL), roles,
        config(max_depth=1, restart_enabled=False),
    )
    assert not result.solved
    assert result.restarts_used == 0


def test_restart_with_pool_entry_point():
    pool = ProvenLemmaPool()
    for i, stmt in enumerate(["1 = 1", "2 = 2", "3 = 3"], start=1):
        pool.add(
            f"lemma main_p{i} : {stmt} := by sorry",
            f"lemma main_p{i} : {stmt} := by\n  eval",
            f"seed{i}",
        )
    roles = toy_roles(max_eval_atoms=0, sketcher=ScriptedBackend([PASS2_SKETCH]))
    result = restart_with_pool(
        StatementHeader(goal_statement=RESTART_GOAL), pool, roles, config(max_depth=1)
    )
    assert result.solved
    assert result.restarts_used == 1
    # pooled proofs appear in the stitched document
    assert "lemma main_p1" in result.final_document


def test_pool_dedups_by_signature():
    pool = ProvenLemmaPool()
    pool.add("lemma a : 1 = 1 := by sorry", "proof-1", "n1")
    pool.add("lemma  a :  1 = 1 := by sorry", "proof-2", "n2")  # same signature
    pool.add("lemma b : 2 = 2 := by sorry", "proof-3", "n3")
    assert len(pool) == 2
    assert pool.provenance[next(iter(pool.entries))] == "n1"


# ---------------------------------------------------------------------------
# assembly


def test_assembly_deduplicates_shared_lemmas():
    # both halves of the goal lean on the same pooled sub-lemma; the stitched
    # document must contain it once
    goal = "theorem main : (1 = 1 ∧ 2 = 2) ∧ (1 = 1 ∧ 3 = 3) := by sorry"
    result = solve(
        StatementHeader(goal_statement=goal),
        toy_roles(max_eval_atoms=1),
        config(max_depth=2, restart_enabled=False),
    )
    assert result.solved
    verify_document(result.final_document, goal)
    assert result.final_document.count("lemma main_l1_l1 :") <= 1


def test_assembly_rejects_unsolved_tree():
    runner = WorkflowRunner(toy_roles(), config())
    root = runner._new_node("theorem main : 1 = 1 := by sorry", depth=0, parent=None)
    with pytest.raises(AssemblyVerificationFailed):
        runner.assemble_proof(root, StatementHeader(goal_statement=root.statement))


def test_wall_clock_limit_reported():
    goal = "theorem main : 1 = 1 ∧ 2 = 2 := by sorry"
    result = solve(
        StatementHeader(goal_statement=goal), toy_roles(),
        config(wall_clock_limit=0.0, restart_enabled=False),
    )
    assert not result.solved
    assert result.wall_clock_exceeded


def test_trajectories_counted():
    goal = "theorem main : 1 = 1 ∧ 2 = 2 := by sorry"
    result = solve(StatementHeader(goal_statement=goal), toy_roles(), config())
    assert result.solved
    assert result.trajectories_used >= 2  # at least one per child lemma
