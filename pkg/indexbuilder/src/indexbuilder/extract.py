"""Syntactic declaration extraction from a library source tree.

The scan is line-oriented, not compiler-integrated: a declaration starts at a
line whose first keyword is `theorem`, `lemma`, or `def`, and its statement
runs up to the proof delimiter `:=`. Good enough for index building, and
fully testable on small fixture trees.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import PinMismatch

log = logging.getLogger(__name__)

PIN_FILENAME = "commit-pin"
SOURCE_SUFFIX = ".lean"
STATEMENT_CHAR_CAP = 2048  # endpoint request limits

_DECL_RE = re.compile(r"^\s*(theorem|lemma|def)\s+([A-Za-z_][A-Za-z0-9_.']*)")


@dataclass(frozen=True)
class RawDeclaration:
    name: str
    kind: str  # theorem | lemma | def
    statement_text: str
    source_file: str
    commit_pin: str


def _read_recorded_pin(tree: Path) -> str:
    pin_file = tree / PIN_FILENAME
    if not pin_file.is_file():
        raise PinMismatch(f"{tree} has no {PIN_FILENAME} record")
    return pin_file.read_text(encoding="utf-8").strip()


def _collapse(text: str) -> str:
    return " ".join(text.split())


def extract_declarations(source_tree_path: str, commit_pin: str) -> list[RawDeclaration]:
    """Scan every source file under the tree; the tree's pin must match."""
    tree = Path(source_tree_path)
    recorded = _read_recorded_pin(tree)
    if recorded != commit_pin:
        raise PinMismatch(f"tree is at {recorded!r}, requested {commit_pin!r}")

    declarations: list[RawDeclaration] = []
    per_kind = {"theorem": 0, "lemma": 0, "def": 0}
    for path in sorted(tree.rglob(f"*{SOURCE_SUFFIX}")):
        lines = path.read_text(encoding="utf-8").splitlines()
        i = 0
        while i < len(lines):
            m = _DECL_RE.match(lines[i])
            if m is None:
                i += 1
                continue
            kind, name = m.groups()
            # statement runs to the proof delimiter, possibly across lines
            chunk = lines[i]
            j = i
            while ":=" not in chunk and j + 1 < len(lines) and not _DECL_RE.match(lines[j + 1]):
                j += 1
                chunk += "\n" + lines[j]
            statement = _collapse(chunk.split(":=", 1)[0][m.end():])
            statement = statement.removeprefix(":").lstrip()
            declarations.append(RawDeclaration(
                name=name,
                kind=kind,
                statement_text=statement[:STATEMENT_CHAR_CAP],
                source_file=str(path.relative_to(tree)),
                commit_pin=commit_pin,
            ))
            per_kind[kind] += 1
            i = j + 1
    if not declarations:
        log.warning("no declarations found under %s", tree)
    log.info("extracted %d declarations (%s)", len(declarations),
             ", ".join(f"{k}={v}" for k, v in per_kind.items()))
    return declarations
