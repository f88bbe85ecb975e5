"""Triplet splitting, recovery dictionaries and quadruplet restoration."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

QD = "QD"
ED = "ED"
R_QD = "r_qd"
R_ED = "r_ed"
PROVENANCES = ("voting", "llm", "human")


@dataclass(frozen=True)
class RawTriplet:
    query_id: str
    query: str
    event_id: str
    event: str
    doc_id: str
    doc: str

    def __post_init__(self) -> None:
        if not (self.query.strip() and self.event.strip() and self.doc.strip()):
            raise ValueError("triplet texts must be non-empty")


@dataclass(frozen=True)
class PairRecord:
    kind: str  # QD or ED
    left_id: str
    left: str
    doc_id: str
    doc: str

    def __post_init__(self) -> None:
        if self.kind not in (QD, ED):
            raise ValueError(f"unknown pair kind {self.kind!r}")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.kind, self.left_id, self.doc_id)


@dataclass
class RecoveryDicts:
    query_to_events: dict[str, list[str]] = field(default_factory=dict)
    event_to_queries: dict[str, list[str]] = field(default_factory=dict)
    query_text: dict[str, str] = field(default_factory=dict)
    event_text: dict[str, str] = field(default_factory=dict)

    def add(self, t: RawTriplet) -> None:
        events = self.query_to_events.setdefault(t.query_id, [])
        if t.event_id not in events:
            events.append(t.event_id)
        queries = self.event_to_queries.setdefault(t.event_id, [])
        if t.query_id not in queries:
            queries.append(t.query_id)
        self.query_text[t.query_id] = t.query
        self.event_text[t.event_id] = t.event

    def consistent(self) -> bool:
        fwd = {(q, e) for q, es in self.query_to_events.items() for e in es}
        bwd = {(q, e) for e, qs in self.event_to_queries.items() for q in qs}
        return fwd == bwd


@dataclass(frozen=True)
class LabeledPair:
    pair: PairRecord
    label: int  # binary vote (0/1) or grade 0..4
    provenance: str
    graded: bool = False


@dataclass(frozen=True)
class LabeledQuadruplet:
    query_id: str
    query: str
    event_id: str
    event: str
    doc_id: str
    doc: str
    label: int
    label_kind: str  # r_qd or r_ed
    provenance: str
    graded: bool = False

    def __post_init__(self) -> None:
        if self.label_kind not in (R_QD, R_ED):
            raise ValueError(f"unknown label kind {self.label_kind!r}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.graded and not 0 <= self.label <= 4:
            raise ValueError("grade must lie in 0..4")
        if not self.graded and self.label not in (0, 1):
            raise ValueError("binary label must be 0 or 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LabeledQuadruplet":
        return cls(**d)


def split_and_cache(triplets: Iterable[RawTriplet]) -> tuple[list[PairRecord], RecoveryDicts]:
    """One QD and one ED pair per triplet, deduplicated, plus the recovery dictionaries."""
    dicts = RecoveryDicts()
    pairs: list[PairRecord] = []
    seen: set[tuple[str, str, str]] = set()
    for t in triplets:
        dicts.add(t)
        for pair in (PairRecord(QD, t.query_id, t.query, t.doc_id, t.doc),
                     PairRecord(ED, t.event_id, t.event, t.doc_id, t.doc)):
            if pair.key not in seen:
                seen.add(pair.key)
                pairs.append(pair)
    return pairs, dicts


def restore_quadruplets(labeled: Sequence[LabeledPair], dicts: RecoveryDicts
                        ) -> tuple[list[LabeledQuadruplet], list[LabeledQuadruplet]]:
    """Expand labeled pairs back to (q, e, d, r) through the dictionaries.

    QD pairs go to the query-centric set once per event cached for the
    query; ED pairs go to the event-centric set once per cached query.
    Pairs whose left id is missing from the dictionaries are dropped.
    """
    query_centric: list[LabeledQuadruplet] = []
    event_centric: list[LabeledQuadruplet] = []
    dropped = 0
    for lp in labeled:
        p = lp.pair
        if p.kind == QD:
            events = dicts.query_to_events.get(p.left_id)
            if not events:
                dropped += 1
                continue
            for e in events:
                query_centric.append(LabeledQuadruplet(
                    p.left_id, p.left, e, dicts.event_text[e], p.doc_id, p.doc,
                    lp.label, R_QD, lp.provenance, lp.graded))
        else:
            queries = dicts.event_to_queries.get(p.left_id)
            if not queries:
                dropped += 1
                continue
            for q in queries:
                event_centric.append(LabeledQuadruplet(
                    q, dicts.query_text[q], p.left_id, p.left, p.doc_id, p.doc,
                    lp.label, R_ED, lp.provenance, lp.graded))
    if dropped:
        logger.warning("dropped %d labeled pairs without a recovery entry", dropped)
    return query_centric, event_centric


def group_by_query_event(quads: Iterable[LabeledQuadruplet]) -> dict[tuple[str, str], list[LabeledQuadruplet]]:
    groups: dict[tuple[str, str], list[LabeledQuadruplet]] = defaultdict(list)
    for q in quads:
        groups[(q.query_id, q.event_id)].append(q)
    return dict(groups)
