"""Split -> coarse vote -> LLM grading of hard pairs -> restore."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .llm import LLMClient, fine_annotate
from .prompts import InstructionKind
from .records import LabeledPair, LabeledQuadruplet, PairRecord, RawTriplet, RecoveryDicts, restore_quadruplets, \
    split_and_cache
from .voting import DEFAULT_QUORUM, ScorerSpec, VoteOutcome, VoteResult, coarse_vote

STAGES = ("coarse", "fine", "all")


@dataclass
class AnnotationResult:
    pairs: list[PairRecord]
    dicts: RecoveryDicts
    votes: list[VoteResult]
    labeled: list[LabeledPair] = field(default_factory=list)
    unlabeled: list[PairRecord] = field(default_factory=list)
    query_centric: list[LabeledQuadruplet] = field(default_factory=list)
    event_centric: list[LabeledQuadruplet] = field(default_factory=list)
    audit: list[dict] = field(default_factory=list)

    def counts(self) -> dict[str, int]:
        out = {o.value: 0 for o in VoteOutcome}
        for v in self.votes:
            out[v.outcome.value] += 1
        return out


def annotate(triplets: Sequence[RawTriplet], scorers: Sequence[ScorerSpec], stage: str = "all",
             client: LLMClient | None = None, quorum: int = DEFAULT_QUORUM,
             kind: InstructionKind | str = InstructionKind.COT_GRADE, concurrency: int = 4,
             retries: int = 2, backoff: float = 0.5) -> AnnotationResult:
    """Only pairs voted hard are sent to the LLM; easy pairs keep their vote as a binary label."""
    if stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}")
    if stage != "coarse" and client is None:
        raise ValueError("fine annotation needs an LLM client")
    pairs, dicts = split_and_cache(triplets)
    votes = [coarse_vote(p, scorers, quorum) for p in pairs]
    result = AnnotationResult(pairs, dicts, votes)
    if stage in ("coarse", "all"):
        for p, v in zip(pairs, votes):
            if v.outcome.easy:
                result.labeled.append(LabeledPair(p, int(v.outcome is VoteOutcome.EASY_POSITIVE), "voting"))
    if stage in ("fine", "all"):
        hard = [p for p, v in zip(pairs, votes) if v.outcome is VoteOutcome.HARD]
        fine = fine_annotate(hard, client, kind, concurrency, retries, backoff)
        result.labeled.extend(fine.labeled)
        result.unlabeled = fine.unlabeled
        result.audit = fine.audit
    result.query_centric, result.event_centric = restore_quadruplets(result.labeled, dicts)
    return result
