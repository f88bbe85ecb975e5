"""Cross-batch memory bank of positive document embeddings and hard-negative selection."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_BANK_FACTOR = 8


class BankExhausted(LookupError):
    def __init__(self) -> None:
        super().__init__("bank exhausted")


@dataclass(frozen=True, eq=False)
class BankEntry:
    doc_id: str
    embedding: np.ndarray
    query_id: str
    index: int  # insertion counter value


class MemoryBank:
    """FIFO buffer holding the most recent positives, evicting oldest-first."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1 or dim < 1:
            raise ValueError("capacity and dim must be >= 1")
        self.capacity = capacity
        self.dim = dim
        self.entries: list[BankEntry] = []
        self.inserted = 0
        self.fallbacks = 0

    @classmethod
    def for_batch(cls, batch_size: int, dim: int, factor: int = DEFAULT_BANK_FACTOR) -> "MemoryBank":
        return cls(factor * batch_size, dim)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.capacity

    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    def push_batch(self, positives: Iterable[tuple[str, Sequence[float], str]]) -> None:
        for doc_id, emb, query_id in positives:
            arr = np.asarray(emb, dtype=np.float64).reshape(-1)
            if arr.shape[0] != self.dim:
                raise ValueError(f"embedding dim {arr.shape[0]} != bank dim {self.dim}")
            self.entries.append(BankEntry(doc_id, arr, query_id, self.inserted))
            self.inserted += 1
        overflow = len(self.entries) - self.capacity
        if overflow > 0:
            del self.entries[:overflow]

    def ranked(self, query_emb: Sequence[float], exclude_docs: Collection[str] = (),
               exclude_queries: Collection[str] = ()) -> list[tuple[float, BankEntry]]:
        """Candidates by descending cosine; ties go to the older entry."""
        cands = [e for e in self.entries if e.doc_id not in exclude_docs and e.query_id not in exclude_queries]
        if not cands:
            return []
        q = np.asarray(query_emb, dtype=np.float64).reshape(-1)
        mat = np.stack([e.embedding for e in cands])
        denom = np.linalg.norm(mat, axis=1) * np.linalg.norm(q)
        sims = (mat @ q) / np.where(denom == 0, 1.0, denom)
        order = np.lexsort((np.array([e.index for e in cands]), -sims))
        return [(float(sims[i]), cands[i]) for i in order]

    def select_topk_hard(self, query_emb: Sequence[float], k: int, exclude_docs: Collection[str] = (),
                         exclude_queries: Collection[str] = ()) -> BankEntry:
        """Remove and return the rank-``k`` candidate (1-based)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        ranked = self.ranked(query_emb, exclude_docs, exclude_queries)
        if not ranked:
            raise BankExhausted()
        if len(ranked) < k:
            self.fallbacks += 1
            logger.debug("bank holds %d candidates < k=%d; taking the lowest rank", len(ranked), k)
            chosen = ranked[-1][1]
        else:
            chosen = ranked[k - 1][1]
        self.entries.remove(chosen)
        return chosen

    def dump(self, path: str | Path, query_emb: Sequence[float]) -> None:
        """Diagnostic: one JSON line per entry with its similarity to ``query_emb``."""
        with open(path, "w", encoding="utf-8") as fh:
            for sim, e in self.ranked(query_emb):
                fh.write(json.dumps({"doc_id": e.doc_id, "similarity": sim}) + "\n")


def random_negative(corpus: Sequence[str], rng: np.random.Generator, exclude: Collection[str] = ()) -> str:
    """Uniform draw over ``corpus`` minus ``exclude``."""
    if not corpus:
        raise ValueError("nothing to sample")
    # rejection keeps the draw uniform over the allowed docs
    for _ in range(32):
        doc = corpus[int(rng.integers(len(corpus)))]
        if doc not in exclude:
            return doc
    allowed = [d for d in corpus if d not in exclude]
    if not allowed:
        raise ValueError("nothing to sample")
    return allowed[int(rng.integers(len(allowed)))]
