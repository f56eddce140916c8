"""Batched embedding over HTTP with retry, checkpointing, and resume.

The endpoint speaks the usual JSON protocol: request
``{"input": [text, ...], "model": name}``, response
``{"data": [{"embedding": [float, ...]}, ...]}``.

A checkpoint file (JSON-lines, one record per completed batch) stores the
normalized vectors alongside the batch id so a resumed run reproduces the
exact same output without re-contacting the endpoint for finished batches.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import requests

from .errors import EmbedderUnavailable
from .extract import RawDeclaration

log = logging.getLogger(__name__)


def _normalize(values: list[float]) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float32)
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        vec = vec / norm
    return vec.astype(np.float32)


def _load_checkpoint(path: Path) -> dict[int, list[np.ndarray]]:
    done: dict[int, list[np.ndarray]] = {}
    if not path.is_file():
        return done
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        done[int(record["batch"])] = [
            np.asarray(v, dtype=np.float32) for v in record["vectors"]
        ]
    return done


def _post_batch(
    texts: list[str],
    endpoint: str,
    model: str,
    max_retries: int,
    backoff: float,
    timeout: float,
) -> list[np.ndarray]:
    last_error: Exception | None = None
    for attempt in range(max_retries):
        try:
            response = requests.post(
                endpoint,
                json={"input": texts, "model": model},
                timeout=timeout,
            )
            response.raise_for_status()
            payload = response.json()
            return [_normalize(item["embedding"]) for item in payload["data"]]
        except Exception as exc:  # transport or protocol failure, retry both
            last_error = exc
            if attempt + 1 < max_retries:
                time.sleep(backoff * (2**attempt))
    raise EmbedderUnavailable(
        f"endpoint failed after {max_retries} attempts: {last_error}"
    ) from last_error


def embed_batch(
    declarations: list[RawDeclaration],
    endpoint: str,
    batch_size: int = 16,
    *,
    model: str = "",
    max_retries: int = 3,
    backoff: float = 0.5,
    timeout: float = 30.0,
    checkpoint_path: str | None = None,
    workers: int = 1,
) -> list[np.ndarray]:
    """One unit-norm vector per declaration, in declaration order.

    On failure a partially written checkpoint survives; rerunning with the
    same arguments skips finished batches and yields identical vectors.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not declarations:
        return []

    texts = [d.statement_text for d in declarations]
    batches = [texts[i : i + batch_size] for i in range(0, len(texts), batch_size)]

    done: dict[int, list[np.ndarray]] = {}
    checkpoint = Path(checkpoint_path) if checkpoint_path else None
    if checkpoint is not None:
        done = _load_checkpoint(checkpoint)
        if done:
            log.info("resuming: %d of %d batches already embedded", len(done), len(batches))

    write_lock = threading.Lock()

    def run_batch(batch_id: int) -> None:
        vectors = _post_batch(
            batches[batch_id], endpoint, model, max_retries, backoff, timeout
        )
        with write_lock:
            done[batch_id] = vectors
            if checkpoint is not None:
                with open(checkpoint, "a", encoding="utf-8") as fh:
                    fh.write(
                        json.dumps(
                            {
                                "batch": batch_id,
                                "vectors": [[float(x) for x in v] for v in vectors],
                            }
                        )
                        + "\n"
                    )
                    fh.flush()

    pending = [i for i in range(len(batches)) if i not in done]
    if workers <= 1 or len(pending) <= 1:
        for batch_id in pending:
            run_batch(batch_id)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_batch, i) for i in pending]
            for future in futures:
                future.result()

    # deterministic single-threaded assembly in batch order
    out: list[np.ndarray] = []
    for batch_id in range(len(batches)):
        out.extend(done[batch_id])
    if len(out) != len(declarations):
        raise EmbedderUnavailable(
            f"endpoint returned {len(out)} vectors for {len(declarations)} inputs"
        )
    dimension = out[0].shape[0]
    for vec in out:
        if vec.shape[0] != dimension:
            raise EmbedderUnavailable("endpoint returned vectors of mixed dimension")
    return out
