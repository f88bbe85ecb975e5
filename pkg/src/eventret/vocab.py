"""Vocabulary, tokenizer and padded token batches."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import torch

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIALS = (PAD, UNK, CLS, SEP)

FIELD_MAX_LEN = {"query": 24, "event": 36, "document": 128}

_TOKEN_RE = re.compile(r"\w+")


def split_words(text: str) -> list[str]:
    """Lowercase and split on whitespace and punctuation."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[: len(SPECIALS)]) != SPECIALS:
            raise ValueError("vocabulary must start with the special tokens")
        self.itos = list(tokens)
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate token in vocabulary")

    pad_id = 0
    unk_id = 1
    cls_id = 2
    sep_id = 3

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, self.unk_id)

    def save(self, path: str | Path) -> None:
        lines = [f"{tok}\t{i}\n" for i, tok in enumerate(self.itos)]
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        pairs = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            tok, idx = line.rsplit("\t", 1)
            pairs.append((int(idx), tok))
        pairs.sort()
        if [i for i, _ in pairs] != list(range(len(pairs))):
            raise ValueError("vocabulary ids are not dense")
        return cls([tok for _, tok in pairs])


def build_vocab(corpus: Iterable[str], max_size: int) -> Vocabulary:
    """Keep the most frequent tokens; ties go to the lexicographically smaller token."""
    if max_size < len(SPECIALS) + 1:
        raise ValueError(f"max_size must be at least {len(SPECIALS) + 1}")
    counts: Counter[str] = Counter()
    seen_text = False
    for text in corpus:
        seen_text = True
        counts.update(split_words(text))
    if not seen_text or not counts:
        raise ValueError("empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, _ in ranked if tok not in SPECIALS][: max_size - len(SPECIALS)]
    return Vocabulary(list(SPECIALS) + kept)


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    attention_mask: tuple[int, ...]
    original_length: int

    def __len__(self) -> int:
        return len(self.ids)

    def padded(self, length: int) -> "TokenSequence":
        extra = length - len(self.ids)
        if extra < 0:
            raise ValueError("cannot pad to a shorter length")
        return TokenSequence(
            self.ids + (Vocabulary.pad_id,) * extra,
            self.attention_mask + (0,) * extra,
            self.original_length,
        )


def tokenize(
    text: str,
    field: str,
    vocab: Vocabulary,
    max_lens: dict[str, int] | None = None,
) -> TokenSequence:
    max_len = (max_lens or FIELD_MAX_LEN)[field]
    words = split_words(text)
    body = [vocab.id(w) for w in words[: max(max_len - 2, 0)]]
    ids = (vocab.cls_id, *body, vocab.sep_id)
    return TokenSequence(ids, (1,) * len(ids), len(words) + 2)


@dataclass
class TokenBatch:
    ids: torch.Tensor  # (B, L) int64
    mask: torch.Tensor  # (B, L) bool

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.ids.shape)  # type: ignore[return-value]

    def __len__(self) -> int:
        return self.ids.shape[0]


def collate(seqs: Sequence[TokenSequence], length: int | None = None) -> TokenBatch:
    if not seqs:
        raise ValueError("cannot collate an empty batch")
    width = max(len(s) for s in seqs) if length is None else length
    padded = [s.padded(width) for s in seqs]
    ids = torch.tensor([s.ids for s in padded], dtype=torch.long)
    mask = torch.tensor([s.attention_mask for s in padded], dtype=torch.bool)
    return TokenBatch(ids, mask)


@dataclass
class Tokenizer:
    """Caches tokenized texts per field; the training loop re-reads the same texts often."""

    vocab: Vocabulary
    max_lens: dict[str, int] = field(default_factory=lambda: dict(FIELD_MAX_LEN))
    _cache: dict[tuple[str, str], TokenSequence] = field(default_factory=dict, repr=False)

    def __call__(self, text: str, field: str) -> TokenSequence:
        key = (field, text)
        seq = self._cache.get(key)
        if seq is None:
            seq = tokenize(text, field, self.vocab, self.max_lens)
            self._cache[key] = seq
        return seq

    def batch(self, texts: Sequence[str], field: str) -> TokenBatch:
        return collate([self(t, field) for t in texts])
