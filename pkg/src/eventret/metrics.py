"""Graded-relevance retrieval metrics.

A run maps query id -> ranked list of doc ids (best first); judgments map
query id -> {doc id: grade}. Unjudged documents count as non-relevant.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

Run = Mapping[str, Sequence[str]]
Judgments = Mapping[str, Mapping[str, int]]

RELEVANT_MIN_GRADE = 2
EVENT_RELEVANT_GRADE = 4


def _relevant(min_grade: int) -> Callable[[int], bool]:
    return lambda g: g >= min_grade


def _per_query(run: Run, judged: Judgments, k: int, rel: Callable[[int], bool], fn) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    vals = []
    for qid, ranking in run.items():
        grades = judged.get(qid, {})
        relevant = {d for d, g in grades.items() if rel(g)}
        if not relevant:
            continue
        vals.append(fn(list(ranking)[:k], relevant))
    if not vals:
        raise ValueError("no judged relevant docs")
    return sum(vals) / len(vals)


def recall_at_k(run: Run, judged: Judgments, k: int, min_grade: int = RELEVANT_MIN_GRADE) -> float:
    """Mean over queries with at least one relevant doc of |relevant in top k| / |relevant|."""
    return _per_query(run, judged, k, _relevant(min_grade),
                      lambda top, rel: len(rel.intersection(top)) / len(rel))


def _average_precision(top: list[str], rel: set[str], k: int) -> float:
    hits = 0
    total = 0.0
    for i, d in enumerate(top, 1):
        if d in rel:
            hits += 1
            total += hits / i
    return total / min(len(rel), k)


def map_at_k(run: Run, judged: Judgments, k: int, min_grade: int = RELEVANT_MIN_GRADE) -> float:
    """Mean average precision over the top k, normalised by min(|relevant|, k)."""
    return _per_query(run, judged, k, _relevant(min_grade), lambda top, rel: _average_precision(top, rel, k))


def mrr(run: Run, judged: Judgments, grade: int = EVENT_RELEVANT_GRADE) -> float:
    """Mean over all run queries of 1/rank of the first doc judged exactly ``grade`` (0 if none retrieved)."""
    if not run:
        return 0.0
    total = 0.0
    for qid, ranking in run.items():
        grades = judged.get(qid, {})
        for i, d in enumerate(ranking, 1):
            if grades.get(d) == grade:
                total += 1.0 / i
                break
    return total / len(run)


def evaluate(run: Run, judged: Judgments, ks: Sequence[int] = (10, 50), min_grade: int = RELEVANT_MIN_GRADE,
             event_grade: int = EVENT_RELEVANT_GRADE) -> dict[str, float]:
    report: dict[str, float] = {}
    for k in ks:
        report[f"recall@{k}"] = recall_at_k(run, judged, k, min_grade)
        report[f"map@{k}"] = map_at_k(run, judged, k, min_grade)
    report[f"mrr_grade{event_grade}"] = mrr(run, judged, event_grade)
    report["num_queries"] = float(len(run))
    return report


def judgments_from_rows(rows: Sequence[Sequence[str]]) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = {}
    for qid, did, g in rows:
        grade = int(g)
        if not 0 <= grade <= 4:
            raise ValueError(f"grade out of range for ({qid}, {did}): {grade}")
        out.setdefault(qid, {})[did] = grade
    return out


def run_from_rows(rows: Sequence[Sequence[str]]) -> dict[str, list[str]]:
    """Rows of (query id, doc id, rank, score), sorted by rank within each query."""
    by_q: dict[str, list[tuple[int, str]]] = {}
    for qid, did, rank, _score in rows:
        by_q.setdefault(qid, []).append((int(rank), did))
    return {q: [d for _, d in sorted(v)] for q, v in by_q.items()}
