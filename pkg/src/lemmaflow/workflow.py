"""Hierarchical test-time workflow over a recursive decomposition tree.

Three agent roles cooperate: a natural-language prover drafts a proof, a
sketcher converts it into a lemma-style sketch, and the tool-using prover
attempts each admitted lemma under a Pass@N x M budget. Unresolved lemmas are
decomposed recursively up to a depth cap; disproved lemmas send the parent
back to the sketcher; an optional restart reuses every lemma proved so far.
"""

from __future__ import annotations

import concurrent.futures
import itertools
import json
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass, field

from . import toy
from .agent import ProblemSpec, TrajectoryBudget, run_light_inference
from .errors import BackendError, AssemblyVerificationFailed, SketchRejected, ToyParseError
from .sketch import Sketch, parse_sketch, structural_check, _split_decl
from .tools import ToolHub
from .verifier import StatementHeader, ToyBackend, VerifierEnv, VerifierSession

NODE_OPEN = "open"
NODE_PROVING = "proving"
NODE_PROVED = "proved"
NODE_DISPROVED = "disproved"
NODE_DECOMPOSED = "decomposed"
NODE_FAILED = "failed"


@dataclass
class AgentRoles:
    nl_prover: object
    sketcher: object
    lean_prover: object
    judge: object


@dataclass
class WorkflowConfig:
    max_depth: int = 4
    lemma_n: int = 3
    lemma_m: int = 3
    parallel_width: int = 8
    wall_clock_limit: float | None = None
    restart_enabled: bool = True
    refine_attempts: int = 3
    sketch_reasks: int = 3
    budget: TrajectoryBudget = field(default_factory=TrajectoryBudget)
    snapshot_path: str | None = None
    retry_backoff: float = 1.0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.lemma_n < 1 or self.lemma_m < 1:
            raise ValueError("lemma budget N, M must be >= 1")


@dataclass
class SearchNode:
    id: str
    statement: str  # full declaration text with placeholder proof
    depth: int
    state: str = NODE_OPEN
    parent: str | None = None
    children: list[str] = field(default_factory=list)
    proof_source: str | None = None
    attempts_used: int = 0
    elapsed_s: float = 0.0
    disproof_note: str | None = None
    main_body: str | None = None  # assembly glue for decomposed nodes
    nl_proof: str | None = None  # kept for refine re-asks


@dataclass
class ProvenLemmaPool:
    entries: dict[tuple[str, ...], tuple[str, str]] = field(default_factory=dict)
    provenance: dict[tuple[str, ...], str] = field(default_factory=dict)

    def add(self, statement: str, proof_source: str, node_id: str) -> None:
        key = _sig_tokens(statement)
        if key not in self.entries:
            self.entries[key] = (statement, proof_source)
            self.provenance[key] = node_id

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class WorkflowResult:
    solved: bool
    final_document: str | None
    tree: dict
    timings: dict[str, float]
    restarts_used: int = 0
    wall_clock_exceeded: bool = False
    trajectories_used: int = 0


def _sig_tokens(text: str) -> tuple[str, ...]:
    head = text.split(":=", 1)[0]
    return tuple(re.findall(r"[A-Za-z0-9_']+|[^\sA-Za-z0-9_']", head))


def _split_declarations(document: str) -> list[str]:
    starts = [m.start() for m in re.finditer(r"(?m)^\s*(lemma|theorem)\s", document)]
    return [document[a:b].strip() for a, b in zip(starts, starts[1:] + [len(document)])]


class WorkflowRunner:
    """Owns one problem's decomposition tree; tree mutations are serialized."""

    def __init__(
        self,
        roles: AgentRoles,
        config: WorkflowConfig,
        env: VerifierEnv | None = None,
        hub: ToolHub | None = None,
        backend_kind: str = "toy",
    ):
        self.roles = roles
        self.config = config
        self.env = env or VerifierEnv()
        self.hub = hub or ToolHub()
        self.backend_kind = backend_kind
        self.pool = ProvenLemmaPool()
        self.nodes: dict[str, SearchNode] = {}
        self.trajectories_used = 0
        self._ids = itertools.count()
        self._tree_lock = threading.RLock()
        self._deadline: float | None = None

    # -- session plumbing ---------------------------------------------------

    def _attempt_header(self, statement: str) -> StatementHeader:
        # Pool lemmas ride along as header options so both the verifier
        # context and the prover prompt see them.
        notes = []
        for stmt, _src in self.pool.entries.values():
            try:
                decl = toy.parse_declaration(stmt)
                notes.append(f"-- have {decl.name} : {decl.statement_text}")
            except ToyParseError:
                notes.append(f"-- have {stmt.splitlines()[0]}")
        return StatementHeader(goal_statement=statement, options="\n".join(notes))

    def _open_seeded_session(self, header: StatementHeader) -> VerifierSession:
        session = self.env.open_session(header, self.backend_kind)
        for _stmt, source in self.pool.entries.values():
            for decl in _split_declarations(source):
                try:
                    session.submit_lemma(decl)
                except Exception:
                    pass  # duplicates across pool entries are fine
        return session

    def _check_clock(self) -> bool:
        return self._deadline is not None and time.monotonic() > self._deadline

    def _snapshot(self) -> dict:
        with self._tree_lock:
            return {
                "nodes": [
                    {
                        "id": n.id,
                        "statement": n.statement,
                        "depth": n.depth,
                        "state": n.state,
                        "parent": n.parent,
                        "children": list(n.children),
                        "attempts_used": n.attempts_used,
                        "elapsed_s": n.elapsed_s,
                    }
                    for n in self.nodes.values()
                ],
                "pool": [
                    {"statement": stmt, "proof_source": src}
                    for stmt, src in self.pool.entries.values()
                ],
                "config": {
                    "max_depth": self.config.max_depth,
                    "lemma_budget": [self.config.lemma_n, self.config.lemma_m],
                    "parallel_width": self.config.parallel_width,
                },
            }

    def _persist_snapshot(self) -> None:
        if not self.config.snapshot_path:
            return
        snapshot = self._snapshot()
        directory = os.path.dirname(self.config.snapshot_path) or "."
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(snapshot, fh, indent=1)
        os.replace(tmp, self.config.snapshot_path)

    def _transition(self, node: SearchNode, state: str) -> None:
        with self._tree_lock:
            node.state = state
        self._persist_snapshot()

    def _new_node(self, statement: str, depth: int, parent: str | None) -> SearchNode:
        with self._tree_lock:
            node = SearchNode(id=f"n{next(self._ids)}", statement=statement, depth=depth, parent=parent)
            self.nodes[node.id] = node
            if parent is not None:
                self.nodes[parent].children.append(node.id)
        return node

    # -- role invocations ---------------------------------------------------

    def _ask(self, backend, text: str) -> str:
        from .agent import _generate_with_retries

        return _generate_with_retries(
            backend, [{"role": "system", "text": text}], backoff=self.config.retry_backoff
        )

    def _nl_proof(self, statement: str) -> str:
        return self._ask(
            self.roles.nl_prover,
            "Write a rigorous lemma-style natural-language proof for this "
            f"formal statement.\n\nTarget declaration:\n{statement}",
        )

    def _sketch_once(self, statement: str, nl_proof: str, evidence: str | None) -> Sketch:
        prompt = (
            "Convert this natural-language proof into a lemma-style sketch: "
            "auxiliary lemmas admitted with `sorry` plus a main theorem body "
            "assembling them.\n\n"
            f"Target declaration:\n{statement}\n\n"
            f"Natural-language proof:\n{nl_proof}"
        )
        if evidence:
            prompt += f"\n\nDisproof evidence from the previous sketch:\n{evidence}"
        return parse_sketch(self._ask(self.roles.sketcher, prompt))

    def _sketch_with_reasks(self, statement: str, nl_proof: str, evidence: str | None = None) -> Sketch:
        session = self.env.open_session(StatementHeader(goal_statement=statement), self.backend_kind)
        try:
            for _ in range(self.config.sketch_reasks):
                sketch = self._sketch_once(statement, nl_proof, evidence)
                if structural_check(sketch, session) == 0:
                    return sketch
        finally:
            session.close()
        raise SketchRejected(f"no structurally sound sketch for {statement.splitlines()[0]!r}")

    # -- node processing ----------------------------------------------------

    def attempt_lemma(self, node: SearchNode) -> str:
        """Prove-or-disprove one lemma under the Pass@N x M budget."""
        self._transition(node, NODE_PROVING)
        started = time.monotonic()
        note = self._try_disprove(node.statement)
        if note is not None:
            node.disproof_note = note
            node.elapsed_s = time.monotonic() - started
            self._transition(node, NODE_DISPROVED)
            return NODE_DISPROVED

        header = self._attempt_header(node.statement)
        problem = ProblemSpec(id=node.id, header=header)
        try:
            result = run_light_inference(
                problem,
                self.roles.lean_prover,
                self.config.lemma_n,
                self.config.lemma_m,
                self.config.budget,
                open_session=lambda: self._open_seeded_session(header),
                hub=self.hub,
                retry_backoff=self.config.retry_backoff,
            )
        except BackendError:
            node.elapsed_s = time.monotonic() - started
            return "unresolved"
        node.attempts_used += len(result.all)
        self.trajectories_used += len(result.all)
        node.elapsed_s = time.monotonic() - started
        if result.best is not None:
            node.proof_source = result.best.final_proof
            self._transition(node, NODE_PROVED)
            self.pool.add(node.statement, node.proof_source, node.id)
            return NODE_PROVED
        return "unresolved"

    def _try_disprove(self, statement: str) -> str | None:
        if self.backend_kind != "toy":
            return None
        try:
            decl = toy.parse_declaration(statement)
            return toy.disprove(decl.statement_text)
        except ToyParseError:
            return None

    def recurse_decompose(self, node: SearchNode, nl_proof: str | None = None) -> list[SearchNode]:
        if node.depth >= self.config.max_depth:
            self._transition(node, NODE_FAILED)
            return []
        nl_proof = nl_proof or self._nl_proof(node.statement)
        try:
            sketch = self._sketch_with_reasks(node.statement, nl_proof)
        except SketchRejected:
            self._transition(node, NODE_FAILED)
            return []
        return self._install_sketch(node, sketch, nl_proof)

    def _install_sketch(self, node: SearchNode, sketch: Sketch, nl_proof: str) -> list[SearchNode]:
        node.main_body = self._renamed_main_body(sketch, node)
        node.nl_proof = nl_proof
        children = [
            self._new_node(lemma.source, node.depth + 1, node.id)
            for lemma in sketch.lemmas
            if lemma.admitted
        ]
        self._transition(node, NODE_DECOMPOSED)
        return children

    def _renamed_main_body(self, sketch: Sketch, node: SearchNode) -> str | None:
        if sketch.main_body is None:
            return None
        body = sketch.main_body
        if node.parent is None:
            return body
        # Sub-sketch main bodies must carry the parent lemma's own name so
        # citations in the level above keep resolving after assembly.
        try:
            node_decl = toy.parse_declaration(node.statement)
            _, body_name, _, _ = _split_decl(body)
            body = re.sub(
                rf"^(\s*)(lemma|theorem)(\s+){re.escape(body_name)}\b",
                rf"\g<1>lemma\g<3>{node_decl.name}",
                body,
                count=1,
            )
        except (ToyParseError, ValueError):
            pass
        return body

    def refine_on_disproof(self, parent: SearchNode, disproved: SearchNode) -> list[SearchNode]:
        """Re-sketch a parent after one child was disproved.

        Proved siblings stay in the pool; unresolved siblings are discarded
        with the old sketch.
        """
        if disproved.state != NODE_DISPROVED:
            raise ValueError("refine_on_disproof requires a disproved child")
        evidence = disproved.disproof_note or "a lemma was disproved"
        nl_proof = parent.nl_proof or self._nl_proof(parent.statement)
        with self._tree_lock:
            parent.children = [
                cid for cid in parent.children if self.nodes[cid].state == NODE_PROVED
            ]
        try:
            sketch = self._sketch_with_reasks(parent.statement, nl_proof, evidence)
        except SketchRejected:
            self._transition(parent, NODE_FAILED)
            return []
        return self._install_sketch(parent, sketch, nl_proof)

    def _process_subtree(self, node: SearchNode, is_root: bool = False) -> str:
        """Drive one node to a terminal state; returns the final state."""
        if self._check_clock():
            self._transition(node, NODE_FAILED)
            return NODE_FAILED
        if not is_root:
            outcome = self.attempt_lemma(node)
            if outcome in (NODE_PROVED, NODE_DISPROVED):
                return outcome
            children = self.recurse_decompose(node)
            if node.state == NODE_FAILED:
                return NODE_FAILED
        else:
            nl_proof = self._nl_proof(node.statement)
            try:
                sketch = self._sketch_with_reasks(node.statement, nl_proof)
            except SketchRejected:
                self._transition(node, NODE_FAILED)
                return NODE_FAILED
            children = self._install_sketch(node, sketch, nl_proof)

        for _refine_round in range(self.config.refine_attempts + 1):
            states = self._process_children(children)
            disproved = [c for c in children if c.state == NODE_DISPROVED]
            if disproved:
                if _refine_round == self.config.refine_attempts:
                    break
                children = self.refine_on_disproof(node, disproved[0])
                if node.state == NODE_FAILED:
                    return NODE_FAILED
                continue
            if all(s == NODE_PROVED for s in states):
                # Decomposed node fully discharged; it is provable by its
                # sketch main body over the children.
                return NODE_DECOMPOSED
            break
        self._transition(node, NODE_FAILED)
        return NODE_FAILED

    def _process_children(self, children: list[SearchNode]) -> list[str]:
        def _one(child: SearchNode) -> str:
            state = self._process_subtree(child)
            return NODE_PROVED if state == NODE_DECOMPOSED else state

        if not children:
            return []
        if self.config.parallel_width <= 1 or len(children) == 1:
            return [_one(c) for c in children]
        with concurrent.futures.ThreadPoolExecutor(
            max_workers=self.config.parallel_width
        ) as pool:
            return list(pool.map(_one, children))

    # -- assembly and entry points -------------------------------------------

    def assemble_proof(self, root: SearchNode, header: StatementHeader) -> str:
        """Stitch the tree into one document and re-verify it end to end."""
        seen: set[tuple[str, ...]] = set()
        parts: list[str] = []

        def _emit(decl: str) -> None:
            key = _sig_tokens(decl)
            if key not in seen:
                seen.add(key)
                parts.append(decl)

        def _walk(node: SearchNode) -> None:
            if node.state == NODE_PROVED:
                if node.proof_source is None:
                    raise AssemblyVerificationFailed(f"node {node.id} proved without a proof")
                for decl in _split_declarations(node.proof_source):
                    _emit(decl)
                return
            if node.state != NODE_DECOMPOSED:
                raise AssemblyVerificationFailed(f"node {node.id} is {node.state}, tree not solved")
            for child_id in node.children:
                _walk(self.nodes[child_id])
            if node.main_body is None:
                raise AssemblyVerificationFailed(f"decomposed node {node.id} lost its main body")
            if node.parent is not None:
                _emit(node.main_body)

        _walk(root)

        session = self.env.open_session(header, self.backend_kind)
        try:
            for decl in parts:
                result = session.submit_lemma(decl)
                if not result.ok:
                    raise AssemblyVerificationFailed(
                        f"stitched lemma failed re-verification: {result.error_text}"
                    )
            final = root.main_body if root.parent is None else root.proof_source
            result = session.submit_final(final)
            if not result.ok:
                raise AssemblyVerificationFailed(
                    f"stitched final theorem failed: {result.error_text}"
                )
            return session.assembled_document()
        finally:
            session.close()

    def run_workflow(self, header: StatementHeader) -> WorkflowResult:
        started = time.monotonic()
        if self.config.wall_clock_limit is not None:
            self._deadline = started + self.config.wall_clock_limit
        root = self._new_node(header.goal_statement, depth=0, parent=None)
        state = self._process_subtree(root, is_root=True)
        solved = state == NODE_DECOMPOSED
        document = None
        if solved:
            document = self.assemble_proof(root, header)
        self._persist_snapshot()
        return WorkflowResult(
            solved=solved,
            final_document=document,
            tree=self._snapshot(),
            timings={n.id: n.elapsed_s for n in self.nodes.values()},
            wall_clock_exceeded=self._check_clock(),
            trajectories_used=self.trajectories_used,
        )


def restart_with_pool(
    header: StatementHeader,
    pool: ProvenLemmaPool,
    roles: AgentRoles,
    config: WorkflowConfig,
    env: VerifierEnv | None = None,
    hub: ToolHub | None = None,
    backend_kind: str = "toy",
) -> WorkflowResult:
    """Fresh search whose root context carries every previously proved lemma."""
    runner = WorkflowRunner(roles, config, env=env, hub=hub, backend_kind=backend_kind)
    runner.pool = pool
    result = runner.run_workflow(header)
    result.restarts_used = 1
    return result


def solve(
    header: StatementHeader,
    roles: AgentRoles,
    config: WorkflowConfig,
    env: VerifierEnv | None = None,
    hub: ToolHub | None = None,
    backend_kind: str = "toy",
) -> WorkflowResult:
    """One full pass plus at most one restart with the proven-lemma pool."""
    runner = WorkflowRunner(roles, config, env=env, hub=hub, backend_kind=backend_kind)
    result = runner.run_workflow(header)
    result.trajectories_used = runner.trajectories_used
    if result.solved or not config.restart_enabled or result.wall_clock_exceeded:
        return result
    retry = restart_with_pool(
        header, runner.pool, roles, config, env=env, hub=hub, backend_kind=backend_kind
    )
    retry.trajectories_used += result.trajectories_used
    return retry
