"""Relevance scorers for the coarse-annotation zoo.

Each scorer maps ``(left_text, doc_text)`` to a real score. The lexical
ones need corpus statistics and are built once per annotation run.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Callable, Iterable, Sequence

from ..vocab import split_words

Scorer = Callable[[str, str], float]


class BM25Scorer:
    def __init__(self, corpus: Iterable[str], k1: float = 1.5, b: float = 0.75):
        self.k1 = k1
        self.b = b
        df: Counter[str] = Counter()
        lengths = []
        for doc in corpus:
            toks = split_words(doc)
            lengths.append(len(toks))
            df.update(set(toks))
        self.n_docs = len(lengths)
        self.avgdl = sum(lengths) / len(lengths) if lengths else 1.0
        self.df = df

    def idf(self, term: str) -> float:
        freq = self.df.get(term, 0)
        return math.log(1 + (self.n_docs - freq + 0.5) / (freq + 0.5))

    def __call__(self, left: str, doc: str) -> float:
        toks = split_words(doc)
        tf = Counter(toks)
        norm = self.k1 * (1 - self.b + self.b * len(toks) / (self.avgdl or 1.0))
        score = 0.0
        for term in split_words(left):
            f = tf.get(term, 0)
            if f:
                score += self.idf(term) * f * (self.k1 + 1) / (f + norm)
        return score


def _cosine(a: Counter, b: Counter) -> float:
    dot = sum(v * b.get(k, 0) for k, v in a.items())
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    return dot / (na * nb) if na and nb else 0.0


def bow_cosine(left: str, doc: str) -> float:
    return _cosine(Counter(split_words(left)), Counter(split_words(doc)))


def coverage(left: str, doc: str) -> float:
    """Share of distinct left-side terms present in the document."""
    terms = set(split_words(left))
    if not terms:
        return 0.0
    return len(terms & set(split_words(doc))) / len(terms)


def _trigrams(text: str) -> Counter:
    s = " " + " ".join(split_words(text)) + " "
    return Counter(s[i:i + 3] for i in range(len(s) - 2))


def trigram_cosine(left: str, doc: str) -> float:
    return _cosine(_trigrams(left), _trigrams(doc))


class IdfCoverageScorer:
    """Idf-weighted share of left-side terms present in the document."""

    def __init__(self, corpus: Iterable[str]):
        self.bm25 = BM25Scorer(corpus)

    def __call__(self, left: str, doc: str) -> float:
        terms = set(split_words(left))
        if not terms:
            return 0.0
        present = set(split_words(doc))
        total = sum(self.bm25.idf(t) for t in terms)
        return sum(self.bm25.idf(t) for t in terms if t in present) / total if total else 0.0


class EmbeddingCosineScorer:
    """Cosine between a trained model's query-side and document embeddings."""

    def __init__(self, model):
        self.model = model

    def __call__(self, left: str, doc: str) -> float:
        from ..fusion import score

        q = self.model.embed_queries_eval([left])
        d = self.model.embed_documents_eval([doc])
        return float(score(q.vector[0], d[0]))


SCORER_KINDS = ("bm25", "bow_cosine", "coverage", "trigram_cosine", "idf_coverage", "embedding_cosine")

DEFAULT_ZOO = (
    {"name": "bm25", "kind": "bm25", "threshold": 4.3},
    {"name": "bow_cosine", "kind": "bow_cosine", "threshold": 0.8},
    {"name": "coverage", "kind": "coverage", "threshold": 0.75},
    {"name": "trigram_cosine", "kind": "trigram_cosine", "threshold": 0.82},
    {"name": "idf_coverage", "kind": "idf_coverage", "threshold": 0.9},
)


def make_scorer(kind: str, corpus: Sequence[str], model=None) -> Scorer:
    if kind == "bm25":
        return BM25Scorer(corpus)
    if kind == "bow_cosine":
        return bow_cosine
    if kind == "coverage":
        return coverage
    if kind == "trigram_cosine":
        return trigram_cosine
    if kind == "idf_coverage":
        return IdfCoverageScorer(corpus)
    if kind == "embedding_cosine":
        if model is None:
            raise ValueError("embedding_cosine scorer needs a model checkpoint")
        return EmbeddingCosineScorer(model)
    raise ValueError(f"unknown scorer kind {kind!r}")
