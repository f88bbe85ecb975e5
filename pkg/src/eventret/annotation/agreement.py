"""Pairwise normalisation of instruction outputs and Cohen's kappa."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Hashable, Iterable, Mapping, Sequence

from .prompts import InstructionKind


@dataclass(frozen=True)
class PairwiseOrder:
    doc_a: str
    doc_b: str
    relation: int  # 1: a better, 0: same, -1: a worse

    def __post_init__(self) -> None:
        if self.relation not in (-1, 0, 1):
            raise ValueError("relation must be -1, 0 or 1")

    def swapped(self) -> "PairwiseOrder":
        return PairwiseOrder(self.doc_b, self.doc_a, -self.relation)


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


_COMPARE = {"A": 1, "B": -1, "same": 0, 1: 1, -1: -1, 0: 0}


def normalize_pairwise(annotations, kind: InstructionKind | str) -> list[PairwiseOrder]:
    """Turn one query's annotations into document-pair comparisons.

    Expected ``annotations`` per kind:
      grade kinds       mapping doc id -> grade
      select_best       (candidate doc ids, winning doc id)
      permutation       doc ids, most relevant first
      pairwise_compare  iterable of (doc a, doc b, "A" | "B" | "same")
    """
    kind = InstructionKind(kind)
    if kind.grades:
        grades: Mapping[str, int] = annotations
        return [PairwiseOrder(a, b, _sign(grades[a] - grades[b])) for a, b in combinations(list(grades), 2)]
    if kind is InstructionKind.SELECT_BEST:
        candidates, winner = annotations
        if winner not in candidates:
            raise ValueError("winner is not among the candidates")
        return [PairwiseOrder(winner, d, 1) for d in candidates if d != winner]
    if kind is InstructionKind.PERMUTATION:
        return [PairwiseOrder(a, b, 1) for a, b in combinations(list(annotations), 2)]
    return [PairwiseOrder(a, b, _COMPARE[outcome]) for a, b, outcome in annotations]


def relation_map(orders: Iterable[PairwiseOrder]) -> dict[tuple[str, str], int]:
    """Both orientations of every comparison."""
    out: dict[tuple[str, str], int] = {}
    for o in orders:
        out[(o.doc_a, o.doc_b)] = o.relation
        out[(o.doc_b, o.doc_a)] = -o.relation
    return out


def cohen_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    """Chance-corrected agreement; defined as 1 when observed agreement is perfect."""
    if len(a) != len(b):
        raise ValueError("rater sequences differ in length")
    n = len(a)
    if n == 0:
        raise ValueError("empty input")
    p_o = sum(x == y for x, y in zip(a, b)) / n
    if p_o == 1.0:
        return 1.0
    ca, cb = Counter(a), Counter(b)
    p_e = sum(ca[c] * cb.get(c, 0) for c in ca) / (n * n)
    return (p_o - p_e) / (1.0 - p_e)


def pairwise_kappa(reference: Iterable[PairwiseOrder], candidate: Iterable[PairwiseOrder]) -> float:
    """Kappa over the document pairs both raters compared (oriented as in ``reference``)."""
    cand = relation_map(candidate)
    xs, ys = [], []
    for o in reference:
        key = (o.doc_a, o.doc_b)
        if key in cand:
            xs.append(o.relation)
            ys.append(cand[key])
    return cohen_kappa(xs, ys)
