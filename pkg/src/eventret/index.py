"""Exact cosine search over document embeddings."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .jsonio import read_jsonl, write_jsonl


@dataclass
class DocIndex:
    doc_ids: list[str]
    embeddings: np.ndarray  # (N, D) float32
    meta: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.embeddings = np.asarray(self.embeddings, dtype=np.float32)
        if self.embeddings.size == 0 and not self.doc_ids:
            self.embeddings = self.embeddings.reshape(0, self.embeddings.shape[-1] if self.embeddings.ndim == 2 else 0)
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] != len(self.doc_ids):
            raise ValueError("embeddings must be (num_docs, dim)")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValueError("duplicate doc id")
        if not self.meta:
            self.meta = [{} for _ in self.doc_ids]
        mat = self.embeddings.astype(np.float64)
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ValueError("zero-norm embedding")
        self._unit = mat / norms
        self._ids = np.array(self.doc_ids)

    def __len__(self) -> int:
        return len(self.doc_ids)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def search_many(self, queries: np.ndarray, k: int) -> list[list[tuple[str, float]]]:
        """Top-``k`` (doc id, cosine) per query; equal scores break by doc id ascending."""
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        if len(self) == 0:
            return [[] for _ in range(q.shape[0])]
        if k < 1:
            raise ValueError("k must be >= 1")
        if q.shape[1] != self.dim:
            raise ValueError("dimension mismatch")
        norms = np.linalg.norm(q, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ValueError("zero-norm embedding")
        sims = (q / norms) @ self._unit.T
        out = []
        for row in sims:
            order = np.lexsort((self._ids, -row))[:k]
            out.append([(self.doc_ids[i], float(row[i])) for i in order])
        return out

    def search(self, query: Sequence[float], k: int) -> list[tuple[str, float]]:
        return self.search_many(np.asarray(query)[None, :], k)[0]

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        write_jsonl(d / "docs.jsonl", [{"doc_id": i, **m} for i, m in zip(self.doc_ids, self.meta)])
        save_checkpoint(d / "doc_embeddings.bin", {"embeddings": self.embeddings}, config={}, seed=0,
                        meta={"kind": "doc_index", "count": len(self)})

    @classmethod
    def load(cls, directory: str | Path) -> "DocIndex":
        d = Path(directory)
        rows = read_jsonl(d / "docs.jsonl", {"doc_id": str})
        emb = load_checkpoint(d / "doc_embeddings.bin").tensors["embeddings"]
        return cls([r.pop("doc_id") for r in rows], emb, rows)


def build_index(model, docs: Sequence[dict], batch_size: int = 256) -> DocIndex:
    """Embed ``docs`` (each with ``doc_id`` and ``text``) with the document tower."""
    if len({d["doc_id"] for d in docs}) != len(docs):
        raise ValueError("duplicate doc id")
    emb = model.embed_documents_eval([d["text"] for d in docs], batch_size).numpy()
    meta = [{k: v for k, v in d.items() if k in ("title", "timestamp")} for d in docs]
    return DocIndex([d["doc_id"] for d in docs], emb, meta)
