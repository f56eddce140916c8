import pytest

from indexbuilder import PinMismatch, extract_declarations
from indexbuilder.extract import STATEMENT_CHAR_CAP

from conftest import FIXTURE_PIN


def test_fixture_tree_yields_three_declarations(fixture_tree):
    decls = extract_declarations(str(fixture_tree), FIXTURE_PIN)
    assert [(d.name, d.kind) for d in decls] == [
        ("add_comm'", "theorem"),
        ("double", "def"),
        ("le_refl'", "theorem"),
    ]


def test_statement_text_is_captured_and_collapsed(fixture_tree):
    decls = {d.name: d for d in extract_declarations(str(fixture_tree), FIXTURE_PIN)}
    assert decls["add_comm'"].statement_text == "(a b : Nat) : a + b = b + a"
    # multi-line statement joined with single spaces
    assert decls["le_refl'"].statement_text == "(a : Nat) : a <= a"
    assert decls["double"].statement_text == "(n : Nat) : Nat"


def test_source_file_is_relative_and_pin_recorded(fixture_tree):
    decls = extract_declarations(str(fixture_tree), FIXTURE_PIN)
    assert decls[0].source_file == "Algebra/Basic.lean"
    assert all(d.commit_pin == FIXTURE_PIN for d in decls)


def test_empty_tree_returns_empty_list_with_warning(tmp_path, caplog):
    tree = tmp_path / "empty"
    tree.mkdir()
    (tree / "commit-pin").write_text("pin-x")
    with caplog.at_level("WARNING"):
        assert extract_declarations(str(tree), "pin-x") == []
    assert "no declarations" in caplog.text


def test_wrong_pin_is_rejected(fixture_tree):
    with pytest.raises(PinMismatch):
        extract_declarations(str(fixture_tree), "some-other-pin")


def test_missing_pin_record_is_rejected(tmp_path):
    tree = tmp_path / "nopin"
    tree.mkdir()
    with pytest.raises(PinMismatch):
        extract_declarations(str(tree), "pin-x")


def test_lemma_keyword_and_indented_declarations(tmp_path):
    tree = tmp_path / "lib"
    tree.mkdir()
    (tree / "commit-pin").write_text("p")
    (tree / "A.lean").write_text(
        "namespace Foo\n"
        "  lemma inner (x : Nat) : x = x := rfl\n"
        "end Foo\n"
        "-- definitely not a declaration line\n"
        "theorem_misnamed := 3\n"
    )
    decls = extract_declarations(str(tree), "p")
    assert [(d.name, d.kind) for d in decls] == [("inner", "lemma")]


def test_statement_truncated_at_cap(tmp_path):
    tree = tmp_path / "lib"
    tree.mkdir()
    (tree / "commit-pin").write_text("p")
    long_hyp = "h : " + " /\\ ".join(f"a{i} = a{i}" for i in range(600))
    (tree / "A.lean").write_text(f"theorem big ({long_hyp}) : True := trivial\n")
    (decl,) = extract_declarations(str(tree), "p")
    assert len(decl.statement_text) == STATEMENT_CHAR_CAP


def test_back_to_back_declarations_without_delimiter_on_first_line(tmp_path):
    tree = tmp_path / "lib"
    tree.mkdir()
    (tree / "commit-pin").write_text("p")
    (tree / "A.lean").write_text(
        "theorem one : 1 = 1\n"
        "theorem two : 2 = 2 := rfl\n"
    )
    decls = extract_declarations(str(tree), "p")
    assert [d.name for d in decls] == ["one", "two"]
    assert decls[0].statement_text == "1 = 1"
