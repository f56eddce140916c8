"""LFIDX1 index file writer.

The format is line-oriented: a header ``LFIDX1 <dimension> <commit_pin>``
followed by one record per declaration,
``name<TAB>kind<TAB>statement-base64<TAB>vector-base64`` where the vector is
little-endian float32. The file is written atomically (temp file + rename)
so a crashed build never leaves a truncated index behind.
"""

from __future__ import annotations

import base64
import os
from pathlib import Path

import numpy as np

from .errors import LengthMismatch
from .extract import RawDeclaration

MAGIC = "LFIDX1"


def write_index(
    declarations: list[RawDeclaration],
    vectors: list[np.ndarray],
    path: str,
    *,
    commit_pin: str | None = None,
    dimension: int | None = None,
) -> None:
    """Write the index file; pin and dimension are inferred when entries exist."""
    if len(declarations) != len(vectors):
        raise LengthMismatch(
            f"{len(declarations)} declarations but {len(vectors)} vectors"
        )
    if declarations:
        pins = {d.commit_pin for d in declarations}
        if len(pins) > 1:
            raise LengthMismatch(f"declarations span multiple pins: {sorted(pins)}")
        commit_pin = pins.pop()
        dimension = int(vectors[0].shape[0])
    if commit_pin is None:
        raise ValueError("commit_pin required for an empty index")
    if dimension is None:
        dimension = 0

    lines = [f"{MAGIC} {dimension} {commit_pin}\n"]
    for decl, vec in zip(declarations, vectors):
        if vec.shape[0] != dimension:
            raise LengthMismatch(
                f"{decl.name}: vector dimension {vec.shape[0]} != {dimension}"
            )
        stmt = base64.b64encode(decl.statement_text.encode("utf-8")).decode("ascii")
        blob = base64.b64encode(np.asarray(vec, dtype="<f4").tobytes()).decode("ascii")
        lines.append(f"{decl.name}\t{decl.kind}\t{stmt}\t{blob}\n")

    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_text("".join(lines), encoding="utf-8")
    os.replace(tmp, target)
