"""Deterministic toy proof language used as the test-scale verifier backend.

The language covers ground linear integer arithmetic (equalities and
inequalities), propositional connectives, and named citations of previously
proved lemmas. Every claim is decidable by direct evaluation, which makes the
checker a complete oracle at this scale.

Declaration syntax (Lean-flavoured)::

    lemma L1 : 2 + 3 = 5 := by eval
    theorem main : 1 + 1 = 2 /\\ 2 + 3 = 5 := by
      split
      eval
      cite L1

Proof steps are one of ``eval`` (evaluate the ground goal), ``cite NAME``
(discharge a goal identical to a context lemma), ``split`` (conjunction
introduction), ``mp NAME`` (use a cited implication), and ``sorry`` (admit;
only honoured in structural mode). Atoms may carry a trailing ``over
naturals`` marker, under which subtraction truncates at zero.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ToyParseError

# ---------------------------------------------------------------------------
# Formula AST
# ---------------------------------------------------------------------------

_REL_OPS = {"=", "!=", "≠", "<=", "≤", "<", ">=", "≥", ">"}


@dataclass(frozen=True)
class Atom:
    lhs: tuple  # expression AST
    op: str
    rhs: tuple
    naturals: bool = False


@dataclass(frozen=True)
class Conj:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Impl:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Neg:
    inner: "Formula"


Formula = Atom | Conj | Impl | Neg

_TOKEN_RE = re.compile(
    r"\s*(\d+|[A-Za-z_][A-Za-z0-9_']*|/\\|∧|->|→|¬|!=|≠|<=|≤|>=|≥|[()=<>+\-*])"
)


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ToyParseError(f"unrecognized input at {text[pos:pos + 20]!r}")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens


class _Parser:
    """Recursive-descent parser over the toy token stream."""

    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        tok = self.peek()
        if tok is None:
            raise ToyParseError("unexpected end of input")
        self.pos += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.take()
        if got != tok:
            raise ToyParseError(f"expected {tok!r}, got {got!r}")

    # formula := conj ( '->' formula )?          (implication, right-assoc)
    def formula(self) -> Formula:
        left = self.conj()
        if self.peek() in ("->", "→"):
            self.take()
            return Impl(left, self.formula())
        return left

    def conj(self) -> Formula:
        left = self.unary()
        while self.peek() in ("∧", "/\\", "and"):
            self.take()
            left = Conj(left, self.unary())
        return left

    def unary(self) -> Formula:
        if self.peek() in ("¬", "not"):
            self.take()
            return Neg(self.unary())
        return self.atom_or_group()

    def atom_or_group(self) -> Formula:
        # Parenthesis is ambiguous between grouping and arithmetic; try a
        # formula group first and fall back to an arithmetic atom.
        if self.peek() == "(":
            save = self.pos
            try:
                self.take()
                inner = self.formula()
                self.expect(")")
                return inner
            except ToyParseError:
                self.pos = save
        return self.atom()

    def atom(self) -> Atom:
        lhs = self.expr()
        op = self.take()
        if op not in _REL_OPS:
            raise ToyParseError(f"expected relation, got {op!r}")
        rhs = self.expr()
        naturals = False
        if self.peek() == "over":
            self.take()
            self.expect("naturals")
            naturals = True
        op = {"≠": "!=", "≤": "<=", "≥": ">="}.get(op, op)
        return Atom(lhs, op, rhs, naturals)

    # Arithmetic: add/sub over mul over primary.
    def expr(self) -> tuple:
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.take()
            node = (op, node, self.term())
        return node

    def term(self) -> tuple:
        node = self.primary()
        while self.peek() == "*":
            self.take()
            node = ("*", node, self.primary())
        return node

    def primary(self) -> tuple:
        tok = self.take()
        if tok == "(":
            node = self.expr()
            self.expect(")")
            return node
        if tok.isdigit():
            return ("int", int(tok))
        if tok == "-":
            nxt = self.take()
            if nxt is None or not nxt.isdigit():
                raise ToyParseError(f"expected integer after '-', got {nxt!r}")
            return ("int", -int(nxt))
        raise ToyParseError(f"expected integer or '(', got {tok!r}")


def parse_formula(text: str) -> Formula:
    tokens = _tokenize(text)
    if not tokens:
        raise ToyParseError("empty statement")
    parser = _Parser(tokens)
    formula = parser.formula()
    if parser.peek() is not None:
        raise ToyParseError(f"trailing input {parser.peek()!r}")
    return formula


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _eval_expr(node: tuple, naturals: bool) -> int:
    op = node[0]
    if op == "int":
        return node[1]
    lhs = _eval_expr(node[1], naturals)
    rhs = _eval_expr(node[2], naturals)
    if op == "+":
        return lhs + rhs
    if op == "*":
        return lhs * rhs
    if op == "-":
        value = lhs - rhs
        return max(value, 0) if naturals else value
    raise ToyParseError(f"unknown operator {op!r}")


def eval_formula(formula: Formula) -> bool:
    """Ground truth of a toy formula by direct computation."""
    if isinstance(formula, Atom):
        lhs = _eval_expr(formula.lhs, formula.naturals)
        rhs = _eval_expr(formula.rhs, formula.naturals)
        return {
            "=": lhs == rhs,
            "!=": lhs != rhs,
            "<=": lhs <= rhs,
            "<": lhs < rhs,
            ">=": lhs >= rhs,
            ">": lhs > rhs,
        }[formula.op]
    if isinstance(formula, Conj):
        return eval_formula(formula.left) and eval_formula(formula.right)
    if isinstance(formula, Impl):
        return (not eval_formula(formula.left)) or eval_formula(formula.right)
    if isinstance(formula, Neg):
        return not eval_formula(formula.inner)
    raise ToyParseError(f"unknown formula node {formula!r}")


# ---------------------------------------------------------------------------
# Declarations and proof checking
# ---------------------------------------------------------------------------

_DECL_RE = re.compile(
    r"^\s*(lemma|theorem)\s+([A-Za-z_][A-Za-z0-9_']*)\s*:\s*(.*?)\s*:=\s*(.*)$",
    re.DOTALL,
)


@dataclass
class Declaration:
    kind: str  # "lemma" | "theorem"
    name: str
    statement_text: str
    proof_text: str

    @property
    def signature_tokens(self) -> tuple[str, ...]:
        return tuple([self.kind, self.name, ":"] + _tokenize(self.statement_text))


def parse_declaration(source: str) -> Declaration:
    m = _DECL_RE.match(source.strip())
    if m is None:
        raise ToyParseError("not a toy declaration")
    kind, name, statement, proof = m.groups()
    proof = proof.strip()
    if proof.startswith("by"):
        proof = proof[2:].strip()
    return Declaration(kind, name, statement, proof)


@dataclass
class CheckOutcome:
    ok: bool
    errors: list[str] = field(default_factory=list)
    used_sorry: bool = False


def _parse_steps(proof_text: str) -> list[tuple[str, str | None]]:
    steps: list[tuple[str, str | None]] = []
    for raw in re.split(r"[;\n]", proof_text):
        line = raw.strip()
        if not line or line.startswith("--"):
            continue
        parts = line.split()
        head = parts[0]
        if head in ("eval", "split", "sorry") and len(parts) == 1:
            steps.append((head, None))
        elif head in ("cite", "mp") and len(parts) == 2:
            steps.append((head, parts[1]))
        else:
            raise ToyParseError(f"unknown proof step {line!r}")
    return steps


def check_proof(
    statement: Formula,
    proof_text: str,
    context: dict[str, Formula],
    allow_sorry: bool = False,
) -> CheckOutcome:
    """Check a toy proof script against a goal stack seeded with `statement`.

    A proof is accepted iff every step applies and the stack is empty at the
    end; citations resolve only against `context` (header plus cached lemmas).
    """
    try:
        steps = _parse_steps(proof_text)
    except ToyParseError as exc:
        return CheckOutcome(False, [str(exc)])

    stack: list[Formula] = [statement]
    used_sorry = False
    for head, arg in steps:
        if not stack:
            return CheckOutcome(False, [f"step {head!r} with no open goal"])
        goal = stack.pop()
        if head == "eval":
            if not eval_formula(goal):
                return CheckOutcome(False, ["goal evaluates to false"])
        elif head == "sorry":
            if not allow_sorry:
                return CheckOutcome(False, ["placeholder proof not accepted here"])
            used_sorry = True
        elif head == "split":
            if not isinstance(goal, Conj):
                return CheckOutcome(False, ["split on a non-conjunction goal"])
            stack.append(goal.right)
            stack.append(goal.left)
        elif head == "cite":
            cited = context.get(arg)
            if cited is None:
                return CheckOutcome(False, [f"unknown lemma {arg!r}"])
            if cited != goal:
                return CheckOutcome(False, [f"cited lemma {arg!r} does not match the goal"])
        elif head == "mp":
            cited = context.get(arg)
            if cited is None:
                return CheckOutcome(False, [f"unknown lemma {arg!r}"])
            if not isinstance(cited, Impl) or cited.right != goal:
                return CheckOutcome(False, [f"lemma {arg!r} is not an implication onto the goal"])
            stack.append(cited.left)
        else:  # pragma: no cover - _parse_steps already rejects
            return CheckOutcome(False, [f"unknown step {head!r}"])
    if stack:
        return CheckOutcome(False, [f"{len(stack)} goal(s) left open"])
    return CheckOutcome(True, [], used_sorry)


def check_declaration(
    source: str,
    context: dict[str, Formula],
    allow_sorry: bool = False,
) -> tuple[Declaration, CheckOutcome]:
    """Parse and check one declaration against a citation context."""
    decl = parse_declaration(source)
    statement = parse_formula(decl.statement_text)
    outcome = check_proof(statement, decl.proof_text, context, allow_sorry=allow_sorry)
    return decl, outcome


def format_expr(node: tuple) -> str:
    op = node[0]
    if op == "int":
        return str(node[1])
    lhs, rhs = format_expr(node[1]), format_expr(node[2])
    if op == "*":
        if node[1][0] != "int":
            lhs = f"({lhs})"
        if node[2][0] != "int":
            rhs = f"({rhs})"
    return f"{lhs} {op} {rhs}"


def format_formula(formula: Formula) -> str:
    """Render a formula back to parseable toy syntax."""
    if isinstance(formula, Atom):
        text = f"{format_expr(formula.lhs)} {formula.op} {format_expr(formula.rhs)}"
        return text + (" over naturals" if formula.naturals else "")
    if isinstance(formula, Conj):
        return f"({format_formula(formula.left)}) ∧ ({format_formula(formula.right)})"
    if isinstance(formula, Impl):
        return f"({format_formula(formula.left)}) → ({format_formula(formula.right)})"
    if isinstance(formula, Neg):
        return f"¬({format_formula(formula.inner)})"
    raise ToyParseError(f"unknown formula node {formula!r}")


def disprove(statement_text: str) -> str | None:
    """Return a counterexample note when the ground claim is false, else None.

    Unparseable input yields no verdict: silence must never be mistaken for truth.
    """
    try:
        formula = parse_formula(statement_text)
    except ToyParseError:
        return None
    if eval_formula(formula):
        return None
    return f"claim {statement_text.strip()!r} evaluates to false by direct computation"
