"""Instruction templates for LLM relevance annotation and response parsing."""

from __future__ import annotations

import re
from enum import Enum
from importlib import resources
from typing import Sequence


class InstructionKind(str, Enum):
    SELECT_BEST = "select_best"
    PAIRWISE_COMPARE = "pairwise_compare"
    PERMUTATION = "permutation"
    MULTI_CLASS5 = "multi_class5"
    COT_GRADE = "cot_grade"

    @property
    def grades(self) -> bool:
        return self in (InstructionKind.MULTI_CLASS5, InstructionKind.COT_GRADE)


class ParseFailure(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


_PLACEHOLDER = re.compile(r"\{([QD])\}")
_ANSWER = re.compile(r"^\s*\**\s*answer\s*\**\s*[:：]\s*(.+?)\s*$", re.IGNORECASE)
_templates: dict[InstructionKind, str] = {}


def template(kind: InstructionKind) -> str:
    if kind not in _templates:
        path = resources.files("eventret.annotation") / "templates" / f"{kind.value}.txt"
        _templates[kind] = path.read_text(encoding="utf-8")
    return _templates[kind]


def _check_arity(kind: InstructionKind, n: int) -> None:
    if kind in (InstructionKind.SELECT_BEST, InstructionKind.PERMUTATION) and n < 2:
        raise ValueError(f"{kind.value} needs at least 2 documents, got {n}")
    if kind is InstructionKind.PAIRWISE_COMPARE and n != 2:
        raise ValueError(f"{kind.value} needs exactly 2 documents, got {n}")
    if kind.grades and n != 1:
        raise ValueError(f"{kind.value} needs exactly 1 document, got {n}")


def _doc_block(kind: InstructionKind, docs: Sequence[str]) -> str:
    clean = [" ".join(d.split()) for d in docs]
    if kind.grades:
        return clean[0]
    if kind is InstructionKind.PAIRWISE_COMPARE:
        return f"Document A: {clean[0]}\nDocument B: {clean[1]}"
    return "\n".join(f"[{i}] {d}" for i, d in enumerate(clean, 1))


def render_prompt(kind: InstructionKind | str, query: str, docs: Sequence[str]) -> str:
    kind = InstructionKind(kind)
    _check_arity(kind, len(docs))
    values = {"Q": " ".join(query.split()), "D": _doc_block(kind, docs)}
    # one pass, so placeholder-like text inside a query or document is left alone
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template(kind))


def _answer_line(raw: str) -> str:
    for line in reversed(raw.strip().splitlines()):
        m = _ANSWER.match(line)
        if m:
            return m.group(1)
    raise ParseFailure("no answer line", raw)


def _ints(text: str) -> list[int]:
    return [int(x) for x in re.findall(r"\d+", text)]


def parse_response(kind: InstructionKind | str, raw: str, n_docs: int | None = None):
    """Structured label from a model reply.

    select_best -> 0-based document index; pairwise_compare -> "A", "B" or
    "same"; permutation -> 0-based indices, best first; grade kinds -> 0..4.
    """
    kind = InstructionKind(kind)
    answer = _answer_line(raw)
    if kind.grades:
        nums = _ints(answer)
        if len(nums) != 1 or not 0 <= nums[0] <= 4:
            raise ParseFailure(f"expected one grade in 0..4, got {answer!r}", raw)
        return nums[0]
    if kind is InstructionKind.PAIRWISE_COMPARE:
        token = answer.strip().strip(".\"'[]").lower()
        for label in ("same", "a", "b"):
            if token in (label, f"document {label}"):
                return label.upper() if label != "same" else "same"
        raise ParseFailure(f"expected A, B or same, got {answer!r}", raw)
    nums = _ints(answer)
    if kind is InstructionKind.SELECT_BEST:
        if len(nums) != 1 or (n_docs is not None and not 1 <= nums[0] <= n_docs) or nums[0] < 1:
            raise ParseFailure(f"invalid document choice {answer!r}", raw)
        return nums[0] - 1
    # permutation
    n = n_docs if n_docs is not None else len(nums)
    if sorted(nums) != list(range(1, n + 1)):
        raise ParseFailure(f"not a permutation of 1..{n}: {answer!r}", raw)
    return [x - 1 for x in nums]
