"""Session, cache, banned-tactic screening and REPL-adapter tests."""

import sys
import textwrap

import pytest
from hypothesis import given, strategies as st

from lemmaflow import toy
from lemmaflow.errors import (
    BackendUnavailable,
    DuplicateName,
    GoalMismatch,
    InvalidHeader,
    SessionClosed,
    UnknownSession,
)
from lemmaflow.verifier import (
    LeanReplBackend,
    LemmaStatus,
    Severity,
    StatementHeader,
    VerifierEnv,
    scan_banned_tactics,
    toy_verify,
)

GOAL = "theorem main : 1 + 1 = 2 ∧ 2 * 3 = 6 := by sorry"


@pytest.fixture
def env():
    return VerifierEnv()


@pytest.fixture
def session(env):
    s = env.open_session(StatementHeader(goal_statement=GOAL))
    yield s
    s.close()


# ---------------------------------------------------------------------------
# banned-tactic screening


@pytest.mark.parametrize(
    "source,hit",
    [
        ("theorem t : p := by native_decide", True),
        ("theorem t : p := by decide", False),
        # word-boundary: embedded occurrences are not the tactic
        ("theorem my_native_decide_wrap : p := by decide", False),
        ("-- native_decide in a comment\ntheorem t : p := by decide", False),
        ("/- native_decide -/ theorem t : p := by decide", False),
        ("/- outer /- native_decide -/ still comment -/ theorem t : p := by rfl", False),
        ('theorem t : p := by exact "native_decide"', False),
        ("/- a -/ theorem t : p := by native_decide", True),
    ],
)
def test_banned_token_scan(source, hit):
    assert scan_banned_tactics(source) is hit


def test_banned_screen_short_circuits_session(session):
    result = session.submit_lemma("lemma l : 1 = 1 := by native_decide")
    assert not result.ok
    assert result.uses_banned_tactic
    # nothing cached, nothing reached the backend
    _, cache = session.context()
    assert cache == []


def test_custom_banned_tokens():
    env = VerifierEnv(banned_tokens=("native_decide", "simp"))
    s = env.open_session(StatementHeader(goal_statement=GOAL))
    assert s.submit_lemma("lemma l : 1 = 1 := by simp").uses_banned_tactic


# ---------------------------------------------------------------------------
# toy_verify oracle


def test_toy_verify_with_and_without_cited_context():
    ctx = {"helper": toy.parse_formula("2 * 3 = 6")}
    src = "lemma l : 2 * 3 = 6 := by cite helper"
    assert toy_verify(src, ctx).ok
    # same source, empty context: the citation now dangles
    assert not toy_verify(src, {}).ok


def test_toy_verify_sorry_warning():
    result = toy_verify("lemma l : 1 = 2 := by sorry", {}, allow_sorry=True)
    assert result.ok
    assert any(m.severity is Severity.WARNING for m in result.messages)


# ---------------------------------------------------------------------------
# sessions


def test_header_must_parse_for_toy_backend(env):
    with pytest.raises(InvalidHeader):
        env.open_session(StatementHeader(goal_statement="not a declaration"))
    with pytest.raises(InvalidHeader):
        env.open_session(StatementHeader(goal_statement="   "))


def test_cache_grows_only_on_success(session):
    bad = session.submit_lemma("lemma nope : 1 = 2 := by eval")
    assert not bad.ok
    good = session.submit_lemma("lemma step1 : 1 + 1 = 2 := by eval")
    assert good.ok
    _, cache = session.context()
    assert [r.name for r in cache] == ["step1"]
    assert cache[0].status is LemmaStatus.PROVED


def test_later_lemmas_see_earlier_ones(session):
    assert session.submit_lemma("lemma a : 2 * 3 = 6 := by eval").ok
    assert session.submit_lemma("lemma b : 2 * 3 = 6 := by cite a").ok


def test_duplicate_name_rejected(session):
    session.submit_lemma("lemma a : 1 = 1 := by eval")
    with pytest.raises(DuplicateName):
        session.submit_lemma("lemma a : 2 = 2 := by eval")


def test_sorry_admitted_not_cached(session):
    result = session.submit_lemma("lemma hole : 1 = 2 := by sorry", allow_sorry=True)
    assert result.ok
    _, cache = session.context()
    assert cache == []  # admitted lemmas never enter the citation context


def test_final_must_match_header_goal(session):
    with pytest.raises(GoalMismatch):
        session.submit_final("theorem other : 1 = 1 := by eval")


def test_goal_match_is_whitespace_insensitive(session):
    session.submit_lemma("lemma a : 1 + 1 = 2 := by eval")
    session.submit_lemma("lemma b : 2 * 3 = 6 := by eval")
    final = "theorem  main :  1 + 1 = 2 ∧ 2 * 3 = 6 := by\n  split\n  cite a\n  cite b"
    result = session.submit_final(final)
    assert result.ok
    assert session.complete


def test_assembled_document_reverifies_from_scratch(env, session):
    session.submit_lemma("lemma a : 1 + 1 = 2 := by eval")
    session.submit_lemma("lemma b : 2 * 3 = 6 := by eval")
    session.submit_final("theorem main : 1 + 1 = 2 ∧ 2 * 3 = 6 := by\n  split\n  cite a\n  cite b")
    doc = session.assembled_document()

    fresh = env.open_session(StatementHeader(goal_statement=GOAL))
    decls = [d for d in doc.split("\n\n") if d.strip()]
    for decl in decls[:-1]:
        assert fresh.submit_lemma(decl).ok
    assert fresh.submit_final(decls[-1]).ok


def test_assembled_document_requires_completion(session):
    with pytest.raises(SessionClosed):
        session.assembled_document()


def test_closed_session_rejects_submissions(env):
    s = env.open_session(StatementHeader(goal_statement=GOAL))
    s.close()
    with pytest.raises(SessionClosed):
        s.submit_lemma("lemma a : 1 = 1 := by eval")


def test_env_registry(env):
    s = env.open_session(StatementHeader(goal_statement=GOAL))
    assert env.get(s.id) is s
    with pytest.raises(UnknownSession):
        env.get("no-such-id")


@given(st.integers(min_value=1, max_value=8))
def test_context_order_matches_submission_order(n):
    env = VerifierEnv()
    s = env.open_session(StatementHeader(goal_statement="theorem main : 0 = 0 := by eval"))
    for i in range(n):
        assert s.submit_lemma(f"lemma step{i} : {i} + 0 = {i} := by eval").ok
    _, cache = s.context()
    assert [r.name for r in cache] == [f"step{i}" for i in range(n)]
    assert [r.sequence_index for r in cache] == list(range(n))


# ---------------------------------------------------------------------------
# REPL adapter against a scripted subprocess

FAKE_REPL = textwrap.dedent(
    """
    import json, sys
    env = 0
    for line in sys.stdin:
        req = json.loads(line)
        cmd = req.get("cmd", "")
        msgs = []
        if "BAD" in cmd:
            msgs.append({"severity": "error",
                         "pos": {"line": 1, "column": 3},
                         "data": "unknown identifier BAD"})
        else:
            env += 1
        if "sorry" in cmd:
            msgs.append({"severity": "warning", "pos": {"line": 1, "column": 0},
                         "data": "declaration uses sorry"})
        print(json.dumps({"env": env, "messages": msgs}), flush=True)
    """
)


@pytest.fixture
def repl_env(tmp_path):
    script = tmp_path / "fake_repl.py"
    script.write_text(FAKE_REPL)
    return VerifierEnv(repl_command=[sys.executable, str(script)])


def test_repl_round_trip_and_env_pinning(repl_env):
    s = repl_env.open_session(
        StatementHeader(goal_statement="theorem main : T := by ok", imports="import Std"),
        backend_kind="lean_repl",
    )
    assert s.submit_lemma("lemma a : T := by ok").ok
    bad = s.submit_lemma("lemma b : T := by BAD")
    assert not bad.ok
    assert bad.messages[0].position == (1, 3)
    assert "unknown identifier" in bad.error_text
    # the failed submission must not advance the pinned environment:
    # handshake = env 1, lemma a = env 2, so the next success lands on 3
    assert s.backend._env_id == 2
    assert s.submit_lemma("lemma c : T := by ok").ok
    assert s.backend._env_id == 3
    s.close()


def test_repl_sorry_is_warning_not_error(repl_env):
    s = repl_env.open_session(
        StatementHeader(goal_statement="theorem main : T := by ok"),
        backend_kind="lean_repl",
    )
    result = s.submit_lemma("lemma h : T := by sorry", allow_sorry=True)
    assert result.ok
    assert any(m.severity is Severity.WARNING for m in result.messages)
    s.close()


def test_repl_unconfigured_command_raises():
    env = VerifierEnv()
    with pytest.raises(BackendUnavailable):
        env.open_session(
            StatementHeader(goal_statement="theorem main : T := by ok"),
            backend_kind="lean_repl",
        )


def test_repl_field_adapter(tmp_path):
    # same protocol, renamed wire fields
    script = tmp_path / "alt_repl.py"
    script.write_text(
        FAKE_REPL.replace('"env"', '"environment"')
        .replace('"cmd"', '"command"')
        .replace('"messages"', '"diagnostics"')
    )
    env = VerifierEnv(
        repl_command=[sys.executable, str(script)],
        repl_fields={
            "cmd": "command",
            "env_in": "environment",
            "env_out": "environment",
            "messages": "diagnostics",
        },
    )
    s = env.open_session(
        StatementHeader(goal_statement="theorem main : T := by ok"),
        backend_kind="lean_repl",
    )
    assert s.submit_lemma("lemma a : T := by ok").ok
    assert not s.submit_lemma("lemma b : T := by BAD").ok
    s.close()
