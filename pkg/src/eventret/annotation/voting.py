"""Threshold voting over a zoo of scorers (coarse annotation)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .records import PairRecord

logger = logging.getLogger(__name__)

DEFAULT_QUORUM = 4


class VoteOutcome(str, Enum):
    EASY_POSITIVE = "easy_positive"
    EASY_NEGATIVE = "easy_negative"
    HARD = "hard"

    @property
    def easy(self) -> bool:
        return self is not VoteOutcome.HARD


@dataclass(frozen=True)
class ScorerSpec:
    name: str
    threshold: float
    scorer: Callable[[str, str], float] = field(compare=False)

    def __post_init__(self) -> None:
        if not math.isfinite(self.threshold):
            raise ValueError(f"threshold for {self.name} must be finite")


@dataclass(frozen=True)
class VoteResult:
    outcome: VoteOutcome
    votes: tuple[bool | None, ...]  # None: scorer abstained
    scores: tuple[float | None, ...]

    @property
    def positives(self) -> int:
        return sum(v is True for v in self.votes)

    @property
    def negatives(self) -> int:
        return sum(v is False for v in self.votes)


def tally(votes: Sequence[bool | None], quorum: int) -> VoteOutcome:
    pos = sum(v is True for v in votes)
    neg = sum(v is False for v in votes)
    if pos >= quorum:
        return VoteOutcome.EASY_POSITIVE
    if neg >= quorum:
        return VoteOutcome.EASY_NEGATIVE
    return VoteOutcome.HARD


def coarse_vote(pair: PairRecord | tuple[str, str], scorers: Sequence[ScorerSpec],
                quorum: int = DEFAULT_QUORUM) -> VoteResult:
    """Binary vote per scorer (score >= threshold); a quorum either way makes the pair easy."""
    if quorum < 1:
        raise ValueError("quorum must be >= 1")
    if len(scorers) < quorum:
        raise ValueError(f"need at least {quorum} scorers, got {len(scorers)}")
    left, doc = (pair.left, pair.doc) if isinstance(pair, PairRecord) else pair
    votes: list[bool | None] = []
    scores: list[float | None] = []
    for spec in scorers:
        try:
            s = float(spec.scorer(left, doc))
            if not math.isfinite(s):
                raise ValueError(f"non-finite score {s}")
        except Exception as exc:  # a failing scorer abstains
            logger.warning("scorer %s abstained: %s", spec.name, exc)
            votes.append(None)
            scores.append(None)
            continue
        scores.append(s)
        votes.append(s >= spec.threshold)
    outcome = tally(votes, quorum)
    abstained = sum(v is None for v in votes)
    if outcome is VoteOutcome.HARD and abstained and len(scorers) - abstained < quorum:
        logger.warning("quorum unreachable after %d abstentions; pair marked hard", abstained)
    return VoteResult(outcome, tuple(votes), tuple(scores))
