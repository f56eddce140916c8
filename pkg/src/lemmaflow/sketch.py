"""Lemma-style sketch parsing, diagnostics, judging, and reward fusion.

A sketch decomposes a target theorem into auxiliary lemmas (admitted via a
placeholder marker) plus a main body assembling them. This module extracts
that structure, runs structural validation through the verifier, detects the
proof-by-delegation anti-pattern, orchestrates LLM-judge verdicts, and fuses
everything into the binary training reward.
"""

from __future__ import annotations

import importlib.resources
import json
import re
from dataclasses import dataclass, field

from . import toy
from .agent import _generate_with_retries
from .errors import BackendError, ToyParseError
from .verifier import StatementHeader, ToyBackend, VerifierSession

PLACEHOLDER = "sorry"
REWARD_MIN_LEMMAS = 3
REWARD_NL_THRESHOLD = 0.7
NL_SCALE = 10.0

VETO_FATAL_MISALIGNMENT = "fatal_misalignment"
VETO_PROOF_BY_DELEGATION = "proof_by_delegation"
VETO_INVALID_LEMMA = "invalid_lemma"
_VETO_TYPES = {
    "FATAL_MISALIGNMENT": VETO_FATAL_MISALIGNMENT,
    "PROOF_BY_DELEGATION": VETO_PROOF_BY_DELEGATION,
    "INVALID_LEMMA": VETO_INVALID_LEMMA,
}


@dataclass
class SketchLemma:
    name: str
    statement_text: str
    admitted: bool
    source: str
    proof_text: str


@dataclass
class Sketch:
    header: StatementHeader | None
    lemmas: list[SketchLemma]
    main_body: str | None  # full declaration source of the main theorem
    raw_source: str
    diagnostics: list[str] = field(default_factory=list)

    @property
    def main_proof_text(self) -> str:
        if self.main_body is None:
            return ""
        return _split_decl(self.main_body)[3]

    def used_lemma_names(self) -> set[str]:
        proof = self.main_proof_text
        tokens = set(re.findall(r"[A-Za-z_][A-Za-z0-9_']*", proof))
        return {lemma.name for lemma in self.lemmas if lemma.name in tokens}


@dataclass
class StructuralReport:
    s_fl: int  # 0 structurally sound, -1 broken
    n_lemmas: int
    used_lemma_names: set[str]
    utilization: float
    delegation_detected: bool


@dataclass
class LemmaVerdict:
    correctness: str  # "Correct" | "Incorrect"
    reason: str
    proof_sketch: str = ""


@dataclass
class RubricVerdict:
    status: str  # "vetoed" | "passed"
    alignment: float = 0.0
    value: float = 0.0
    utilization_factor: float = 0.0
    final_score: float = -10.0
    veto_type: str | None = None
    reason: str = ""


@dataclass
class RewardInputs:
    n_lemmas: int
    s_fl: int
    s_nl: float


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_DECL_START = re.compile(r"(?m)^\s*(lemma|theorem)\s")


def _split_decl(source: str) -> tuple[str, str, str, str]:
    """(kind, name, conclusion_text, proof_text) of one declaration.

    Binder groups between the name and the final top-level colon are skipped,
    so the conclusion is the goal proposition itself.
    """
    m = re.match(r"\s*(lemma|theorem)\s+([A-Za-z_][A-Za-z0-9_']*)", source)
    if m is None:
        raise ValueError("not a declaration")
    kind, name = m.groups()
    rest = source[m.end():]
    depth = 0
    colon_at = None
    pairs = {"(": ")", "{": "}", "[": "]", "⦃": "⦄", "⟨": "⟩"}
    closers = set(pairs.values())
    for i, ch in enumerate(rest):
        if ch in pairs:
            depth += 1
        elif ch in closers:
            depth -= 1
        elif ch == ":" and depth == 0 and not rest.startswith(":=", i):
            colon_at = i
            break
    if colon_at is None:
        raise ValueError(f"declaration {name!r} has no goal")
    tail = rest[colon_at + 1:]
    idx = tail.find(":=")
    if idx < 0:
        conclusion, proof = tail, ""
    else:
        conclusion, proof = tail[:idx], tail[idx + 2:]
    proof = proof.strip()
    if proof.startswith("by"):
        proof = proof[2:].strip()
    return kind, name, conclusion.strip(), proof


def _tokens(text: str) -> tuple[str, ...]:
    return tuple(re.findall(r"[A-Za-z0-9_']+|[^\sA-Za-z0-9_']", text))


def parse_sketch(source: str, header: StatementHeader | None = None) -> Sketch:
    """Total parse: unparseable source yields zero lemmas plus a diagnostic."""
    sketch = Sketch(header=header, lemmas=[], main_body=None, raw_source=source)
    starts = [m.start() for m in _DECL_START.finditer(source)]
    if not starts:
        sketch.diagnostics.append("no declarations found")
        return sketch
    chunks = [source[a:b].strip() for a, b in zip(starts, starts[1:] + [len(source)])]
    seen: set[str] = set()
    for chunk in chunks:
        try:
            kind, name, conclusion, proof = _split_decl(chunk)
        except ValueError as exc:
            sketch.diagnostics.append(str(exc))
            continue
        if kind == "theorem":
            sketch.main_body = chunk
            continue
        if name in seen:
            sketch.diagnostics.append(f"duplicate lemma name {name!r}")
            continue
        seen.add(name)
        marker_count = len(re.findall(rf"\b{PLACEHOLDER}\b", proof))
        if marker_count > 1:
            sketch.diagnostics.append(f"lemma {name!r} has {marker_count} placeholder markers")
        sketch.lemmas.append(
            SketchLemma(name, conclusion, admitted=marker_count == 1, source=chunk, proof_text=proof)
        )
    if sketch.main_body is None:
        sketch.diagnostics.append("no main theorem body found")
    return sketch


# ---------------------------------------------------------------------------
# Structural validation
# ---------------------------------------------------------------------------


def structural_check(sketch: Sketch, session: VerifierSession) -> int:
    """0 when the placeholder-admitted sketch verifies structurally, else -1."""
    if sketch.main_body is None or not sketch.lemmas:
        return -1
    if isinstance(session.backend, ToyBackend):
        return _toy_structural_check(sketch)
    result = session.backend.verify(sketch.raw_source, session.cache, allow_sorry=True)
    return 0 if result.ok else -1


def _toy_structural_check(sketch: Sketch) -> int:
    context: dict[str, toy.Formula] = {}
    try:
        for lemma in sketch.lemmas:
            statement = toy.parse_formula(lemma.statement_text)
            outcome = toy.check_proof(statement, lemma.proof_text, context, allow_sorry=True)
            if not outcome.ok:
                return -1
            context[lemma.name] = statement
        _, _, conclusion, proof = _split_decl(sketch.main_body)
        goal = toy.parse_formula(conclusion)
        outcome = toy.check_proof(goal, proof, context, allow_sorry=True)
    except (ToyParseError, ValueError):
        return -1
    return 0 if outcome.ok else -1


def build_structural_report(sketch: Sketch, session: VerifierSession) -> StructuralReport:
    used = sketch.used_lemma_names()
    n = len(sketch.lemmas)
    return StructuralReport(
        s_fl=structural_check(sketch, session),
        n_lemmas=n,
        used_lemma_names=used,
        utilization=(len(used) / n) if n else 0.0,
        delegation_detected=detect_delegation(sketch),
    )


# ---------------------------------------------------------------------------
# Delegation detection
# ---------------------------------------------------------------------------

_HAVE_RE = re.compile(
    r"have\s+([A-Za-z_][A-Za-z0-9_']*)\s*(?::[^:=]*)?:=\s*([^\n;]+)"
)
_EXACT_RE = re.compile(r"exact\s+(.+)")


def _head_token(expr: str) -> str | None:
    expr = expr.strip()
    while expr and expr[0] == "(":
        expr = expr[1:].lstrip()
    m = re.match(r"([A-Za-z_][A-Za-z0-9_']*)", expr)
    return m.group(1) if m else None


def detect_delegation(sketch: Sketch) -> bool:
    """Structural heuristic for the hollow-wrapper anti-pattern.

    True iff some lemma shares the main theorem's goal at the token level and
    the main body's goal-discharging step resolves (directly or through
    `have` bindings, or a toy `cite`) to that wrapper lemma.
    """
    if sketch.main_body is None or not sketch.lemmas:
        return False
    try:
        _, _, goal, proof = _split_decl(sketch.main_body)
    except ValueError:
        return False
    goal_tokens = _tokens(goal)
    wrappers = {l.name for l in sketch.lemmas if _tokens(l.statement_text) == goal_tokens}
    if not wrappers:
        return False
    lemma_names = {l.name for l in sketch.lemmas}
    if not (set(re.findall(r"[A-Za-z_][A-Za-z0-9_']*", proof)) & lemma_names):
        return False

    # Toy-language bodies: a direct `cite WRAPPER` step discharges the goal.
    for line in re.split(r"[;\n]", proof):
        parts = line.strip().split()
        if len(parts) == 2 and parts[0] == "cite" and parts[1] in wrappers:
            return True

    aliases: dict[str, str | None] = {}
    for name, expr in _HAVE_RE.findall(proof):
        aliases[name] = _head_token(expr)
    exacts = _EXACT_RE.findall(proof)
    final = exacts[-1] if exacts else proof
    head = _head_token(final)
    seen = set()
    while head in aliases and head not in seen:
        seen.add(head)
        head = aliases[head]
    return head in wrappers


# ---------------------------------------------------------------------------
# LLM judging
# ---------------------------------------------------------------------------


def _render(template_name: str, **placeholders: str) -> str:
    text = importlib.resources.files("lemmaflow.assets").joinpath(template_name).read_text("utf-8")
    for key, value in placeholders.items():
        text = text.replace("{" + key + "}", value)
    return text


def extract_json_object(text: str) -> dict | None:
    """First balanced JSON object in free-form text, or None."""
    for start in range(len(text)):
        if text[start] != "{":
            continue
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    try:
                        obj = json.loads(text[start:i + 1])
                    except json.JSONDecodeError:
                        break
                    return obj if isinstance(obj, dict) else None
        # fall through: unbalanced from this start; try the next brace
    return None


def judge_lemma(
    lemma: SketchLemma,
    sketch_context: str,
    backend,
    doc_string: str = "",
    retry_backoff: float = 1.0,
) -> LemmaVerdict:
    """One judge call per lemma; schema violations retried once, then Incorrect."""
    prompt = _render(
        "judge_lemma.txt",
        sketch=sketch_context,
        formal_statement=lemma.source,
        doc_string=doc_string,
    )
    for _ in range(2):
        text = _generate_with_retries(backend, [{"role": "system", "text": prompt}],
                                      backoff=retry_backoff)
        obj = extract_json_object(text)
        if obj and obj.get("correctness") in ("Correct", "Incorrect"):
            return LemmaVerdict(
                correctness=obj["correctness"],
                reason=str(obj.get("reason", "")),
                proof_sketch=str(obj.get("proof_sketch", "")),
            )
    return LemmaVerdict("Incorrect", "unparseable verdict")


def compute_final_score(alignment: float, value: float, utilization: float) -> float:
    return round((alignment * 0.4 + value * 0.6) * utilization, 1)


def judge_sketch(
    statement: str,
    nl_proof: str,
    sketch: Sketch,
    backend,
    lemma_verdicts: list[LemmaVerdict],
    doc_string: str = "",
    retry_backoff: float = 1.0,
) -> RubricVerdict:
    """Rubric verdict for a sketch whose lemma verdicts are already in.

    Any Incorrect lemma vetoes before the judge is called; the judge's own
    score arithmetic is never trusted and is recomputed locally.
    """
    bad = [v for v in lemma_verdicts if v.correctness != "Correct"]
    if bad:
        return RubricVerdict(
            status="vetoed", veto_type=VETO_INVALID_LEMMA,
            reason=bad[0].reason or "invalid lemma",
        )
    prompt = _render(
        "judge_sketch.txt",
        formal_statement=statement,
        nl_proof=nl_proof,
        sketch=sketch.raw_source,
        doc_string=doc_string,
    )
    try:
        for _ in range(2):
            text = _generate_with_retries(backend, [{"role": "system", "text": prompt}],
                                          backoff=retry_backoff)
            obj = extract_json_object(text)
            verdict = _parse_rubric(obj)
            if verdict is not None:
                return verdict
    except BackendError as exc:
        return RubricVerdict(status="vetoed", reason=f"judge backend failed: {exc}")
    return RubricVerdict(status="vetoed", reason="unparseable rubric verdict")


def _parse_rubric(obj: dict | None) -> RubricVerdict | None:
    if not obj:
        return None
    status = str(obj.get("evaluation_status", "")).upper()
    if status == "VETOED":
        veto = obj.get("veto_reason") or {}
        return RubricVerdict(
            status="vetoed",
            veto_type=_VETO_TYPES.get(str(veto.get("type", "")).upper()),
            reason=str(veto.get("analysis", "")),
        )
    if status != "PASSED":
        return None
    scores = (obj.get("rubric_and_scoring") or {}).get("scores") or {}
    try:
        alignment = float(scores["alignment"])
        value = float(scores["value"])
        utilization = float(scores["utilization_factor"])
    except (KeyError, TypeError, ValueError):
        return None
    if not (0 <= alignment <= 10 and 0 <= value <= 10 and 0 <= utilization <= 1):
        return None
    return RubricVerdict(
        status="passed",
        alignment=alignment,
        value=value,
        utilization_factor=utilization,
        final_score=compute_final_score(alignment, value, utilization),
    )


# ---------------------------------------------------------------------------
# Reward fusion
# ---------------------------------------------------------------------------


def normalize_nl_score(verdict: RubricVerdict) -> float:
    """Map the rubric's -10..10 final score onto the -1..1 reward scale."""
    return verdict.final_score / NL_SCALE


def fuse_reward(inputs: RewardInputs) -> int:
    if (
        inputs.n_lemmas >= REWARD_MIN_LEMMAS
        and inputs.s_fl >= 0
        and inputs.s_nl >= REWARD_NL_THRESHOLD
    ):
        return 1
    return -1
