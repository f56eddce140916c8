"""Deterministic desk-scale agent roles over the toy language.

These stand in for remote models in tests and demos: a prover that derives
toy proof scripts mechanically, a sketcher that splits one conjunction level
per sketch, a one-line natural-language prover, and a judge that grades toy
lemma statements by direct evaluation.
"""

from __future__ import annotations

import json
import re

from . import toy
from .tools import serialize_tool_call, ToolCall

_GOAL_RE = re.compile(r"Target declaration:\n(.+?)(?:\n\n|$)", re.DOTALL)
_CONTEXT_RE = re.compile(r"^-- have ([A-Za-z_][A-Za-z0-9_']*) : (.+)$", re.MULTILINE)


def _extract_goal(prompt: str) -> toy.Declaration | None:
    m = _GOAL_RE.search(prompt)
    if m is None:
        return None
    try:
        return toy.parse_declaration(m.group(1).strip())
    except toy.ToyParseError:
        return None


def _extract_context(prompt: str) -> dict[str, toy.Formula]:
    context = {}
    for name, statement in _CONTEXT_RE.findall(prompt):
        try:
            context[name] = toy.parse_formula(statement)
        except toy.ToyParseError:
            continue
    return context


class ToyProverBackend:
    """Derives a toy proof script for the goal in the prompt and submits it.

    Capability is bounded by `max_eval_atoms`: at most that many conjuncts
    may be discharged by direct evaluation (citations are free), which lets
    tests force decomposition and pool reuse.
    """

    name = "toy-prover"

    def __init__(self, max_eval_atoms: int | None = None):
        self.max_eval_atoms = max_eval_atoms

    def generate(self, messages: list[dict]) -> str:
        prompt = messages[0]["text"]
        goal = _extract_goal(prompt)
        if goal is None:
            return "No toy goal found in the prompt."
        try:
            formula = toy.parse_formula(goal.statement_text)
        except toy.ToyParseError:
            return "Goal statement is outside the toy grammar."
        context = _extract_context(prompt)
        steps = self._derive(formula, context, budget=[self.max_eval_atoms])
        if steps is None:
            return "No proof found within my capability."
        signature = goal.kind + " " + goal.name + " : " + goal.statement_text
        source = signature + " := by\n  " + "\n  ".join(steps)
        call = ToolCall(id="final", tool="verify_final", args={"source": source})
        return "Submitting the derived proof.\n" + serialize_tool_call(call)

    def _derive(self, formula, context, budget) -> list[str] | None:
        for name, known in context.items():
            if known == formula:
                return [f"cite {name}"]
        if isinstance(formula, toy.Conj):
            left = self._derive(formula.left, context, budget)
            if left is None:
                return None
            right = self._derive(formula.right, context, budget)
            if right is None:
                return None
            return ["split"] + left + right
        if budget[0] is not None:
            if budget[0] <= 0:
                return None
            budget[0] -= 1
        return ["eval"] if toy.eval_formula(formula) else None


class ToySketcher:
    """Splits the top-level conjunction of the goal into admitted lemmas."""

    name = "toy-sketcher"

    def generate(self, messages: list[dict]) -> str:
        goal = _extract_goal(messages[0]["text"])
        if goal is None:
            return "-- no goal found"
        try:
            formula = toy.parse_formula(goal.statement_text)
        except toy.ToyParseError:
            return "-- unparseable goal"
        conjuncts = [formula.left, formula.right] if isinstance(formula, toy.Conj) else [formula]
        lines = []
        for i, part in enumerate(conjuncts, start=1):
            lines.append(
                f"lemma {goal.name}_l{i} : {toy.format_formula(part)} := by sorry"
            )
        lines.append(f"theorem {goal.name} : {goal.statement_text} := by")
        if len(conjuncts) == 2:
            lines.append("  split")
        for i in range(1, len(conjuncts) + 1):
            lines.append(f"  cite {goal.name}_l{i}")
        return "\n".join(lines)


class ToyNlProver:
    name = "toy-nl-prover"

    def generate(self, messages: list[dict]) -> str:
        return (
            "Split the statement along its top-level conjunction and discharge "
            "each conjunct by direct evaluation or by citing an already proved lemma."
        )


class ToyJudge:
    """Grades a toy lemma declaration by brute-force evaluation."""

    name = "toy-judge"

    def generate(self, messages: list[dict]) -> str:
        prompt = messages[0]["text"]
        m = re.search(
            r"formal statement to evaluate-+\n(.+?)\n\n", prompt, re.DOTALL
        )
        source = m.group(1).strip() if m else ""
        try:
            decl = toy.parse_declaration(source)
            note = toy.disprove(decl.statement_text)
        except toy.ToyParseError:
            return json.dumps(
                {"correctness": "Incorrect", "reason": "statement outside the toy grammar"}
            )
        if note is None:
            return json.dumps(
                {"correctness": "Correct", "reason": "holds by direct computation",
                 "proof_sketch": "evaluate both sides"}
            )
        return json.dumps({"correctness": "Incorrect", "reason": note})
