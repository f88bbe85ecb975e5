from .agreement import PairwiseOrder, cohen_kappa, normalize_pairwise, pairwise_kappa
from .llm import HTTPChatClient, StubLLMClient, TransportError, fine_annotate, prompt_hash
from .pipeline import AnnotationResult, annotate
from .prompts import InstructionKind, ParseFailure, parse_response, render_prompt
from .records import (ED, QD, LabeledPair, LabeledQuadruplet, PairRecord, RawTriplet, RecoveryDicts,
                      restore_quadruplets, split_and_cache)
from .voting import ScorerSpec, VoteOutcome, VoteResult, coarse_vote

__all__ = [
    "ED", "QD", "AnnotationResult", "HTTPChatClient", "InstructionKind", "LabeledPair", "LabeledQuadruplet",
    "PairRecord", "PairwiseOrder", "ParseFailure", "RawTriplet", "RecoveryDicts", "ScorerSpec",
    "StubLLMClient", "TransportError", "VoteOutcome", "VoteResult", "annotate", "coarse_vote", "cohen_kappa",
    "fine_annotate", "normalize_pairwise", "pairwise_kappa", "parse_response", "prompt_hash",
    "render_prompt", "restore_quadruplets", "split_and_cache",
]
