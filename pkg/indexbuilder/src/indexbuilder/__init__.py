"""Offline pipeline: extract library declarations, embed them, write an index."""

from .embed import embed_batch
from .errors import EmbedderUnavailable, IndexBuilderError, LengthMismatch, PinMismatch
from .extract import RawDeclaration, extract_declarations
from .writer import write_index

__all__ = [
    "EmbedderUnavailable",
    "IndexBuilderError",
    "LengthMismatch",
    "PinMismatch",
    "RawDeclaration",
    "embed_batch",
    "extract_declarations",
    "write_index",
]
