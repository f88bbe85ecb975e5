"""Event expansion: title filtering, clustering, reformulation, association and ranking."""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .jsonio import read_jsonl, write_jsonl
from .vocab import FIELD_MAX_LEN, split_words

Embedder = Callable[[Sequence[str]], np.ndarray]


@dataclass(frozen=True)
class EventTitle:
    title: str
    source: str
    found_time: float  # unix seconds

    def __post_init__(self) -> None:
        if not self.title.strip():
            raise ValueError("event title must be non-empty")
        if not isinstance(self.found_time, (int, float)) or not math.isfinite(self.found_time):
            raise ValueError("found_time must be a finite timestamp")


@dataclass
class EventRecord:
    event_id: str
    text: str
    found_time: float
    popularity: int
    embedding: np.ndarray
    members: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.popularity < 1:
            raise ValueError("popularity must be >= 1")


@dataclass
class FilterRules:
    min_len: int = 4
    max_len: int = 200
    blocklist: list[str] = field(default_factory=list)  # regular expressions, case-insensitive
    dedup: bool = True


def coarse_filter(titles: Iterable[EventTitle], rules: FilterRules) -> list[EventTitle]:
    """Order-preserving length, blocklist and exact-duplicate filter."""
    blocked = [re.compile(p, re.IGNORECASE) for p in rules.blocklist]
    seen: set[str] = set()
    out = []
    for t in titles:
        text = t.title.strip()
        if not rules.min_len <= len(text) <= rules.max_len:
            continue
        if any(p.search(text) for p in blocked):
            continue
        if rules.dedup:
            if text in seen:
                continue
            seen.add(text)
        out.append(t)
    return out


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def cluster_titles(titles: Sequence[EventTitle], sim_threshold: float, embed: Embedder) -> list[list[int]]:
    """Greedy single pass in found-time order: join the first cluster whose centroid is close enough."""
    if not titles:
        return []
    order = sorted(range(len(titles)), key=lambda i: (titles[i].found_time, i))
    vecs = np.asarray(embed([titles[i].title for i in order]), dtype=np.float64)
    clusters: list[list[int]] = []
    sums: list[np.ndarray] = []
    for pos, i in enumerate(order):
        v = _unit(vecs[pos])
        for c, s in enumerate(sums):
            centroid = _unit(s / len(clusters[c]))
            if float(v @ centroid) >= sim_threshold:
                clusters[c].append(i)
                sums[c] = s + v
                break
        else:
            clusters.append([i])
            sums.append(v.copy())
    return clusters


_LEAD_TAG = re.compile(r"^\s*[\[(【][^\])】]{0,30}[\])】]\s*")
_LEAD_LABEL = re.compile(
    r"^\s*(breaking(\s+news)?|update[d]?|live|exclusive|just\s+in|developing|watch|video)\s*[:：|\-–—]\s*",
    re.IGNORECASE)
_TRAIL_SOURCE = re.compile(r"\s+[|\-–—]\s+([^|\-–—]{1,40})$")


def _strip_once(text: str, max_tokens: int) -> str:
    text = _LEAD_TAG.sub("", text)
    text = _LEAD_LABEL.sub("", text)
    m = _TRAIL_SOURCE.search(text)
    if m and len(m.group(1).split()) <= 3:
        text = text[: m.start()]
    words = text.split()
    return " ".join(words[:max_tokens])


def reformulate(title: str, max_tokens: int = FIELD_MAX_LEN["event"] - 2) -> str:
    """Rule-based cleanup: drop source tags/labels/suffixes, collapse whitespace, cap length.

    Applied to a fixed point, so the result is idempotent; an empty result
    keeps the original title.
    """
    text = title
    while True:
        nxt = _strip_once(text, max_tokens)
        if nxt == text:
            break
        text = nxt
    return text if text.strip() else title


@dataclass
class EventIndex:
    records: list[EventRecord]
    embedder: str = "hashed"  # which embedder produced the vectors: hashed | model

    def __post_init__(self) -> None:
        self._by_id = {r.event_id: r for r in self.records}
        if len(self._by_id) != len(self.records):
            raise ValueError("duplicate event id")
        self.matrix = (np.stack([r.embedding for r in self.records]).astype(np.float64)
                       if self.records else np.zeros((0, 0)))

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, event_id: str) -> EventRecord:
        return self._by_id[event_id]

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_jsonl(d / "events.jsonl", [
            {"event_id": r.event_id, "text": r.text, "found_time": r.found_time,
             "popularity": r.popularity, "members": r.members} for r in self.records])
        save_checkpoint(d / "event_embeddings.bin", {"embeddings": self.matrix.astype(np.float32)},
                        config={}, seed=0,
                        meta={"kind": "event_index", "count": len(self.records), "embedder": self.embedder})

    @classmethod
    def load(cls, directory: str | Path) -> "EventIndex":
        d = Path(directory)
        rows = read_jsonl(d / "events.jsonl")
        ckpt = load_checkpoint(d / "event_embeddings.bin")
        emb = ckpt.tensors["embeddings"]
        return cls([EventRecord(r["event_id"], r["text"], float(r["found_time"]), int(r["popularity"]),
                                emb[i].copy(), list(r.get("members", []))) for i, r in enumerate(rows)],
                   ckpt.meta.get("embedder", "hashed"))


def build_event_index(titles: Iterable[EventTitle], rules: FilterRules, sim_threshold: float, embed: Embedder,
                      reformulator: Callable[[str], str] = reformulate, embedder: str = "hashed") -> EventIndex:
    kept = coarse_filter(titles, rules)
    clusters = cluster_titles(kept, sim_threshold, embed)
    texts = [reformulator(kept[c[0]].title) for c in clusters]
    vecs = np.asarray(embed(texts), dtype=np.float32) if texts else np.zeros((0, 0), np.float32)
    records = []
    for n, (members, text) in enumerate(zip(clusters, texts)):
        records.append(EventRecord(f"ev{n:05d}", text, kept[members[0]].found_time, len(members), vecs[n],
                                   [kept[i].title for i in members]))
    return EventIndex(records, embedder)


def fine_filter_and_cluster(titles: Sequence[EventTitle], sim_threshold: float, embed: Embedder) -> list[EventRecord]:
    """Clusters as event records: earliest member represents, popularity is cluster size."""
    clusters = cluster_titles(titles, sim_threshold, embed)
    reps = [titles[c[0]].title for c in clusters]
    vecs = np.asarray(embed(reps), dtype=np.float32) if reps else []
    return [EventRecord(f"ev{n:05d}", reps[n], titles[c[0]].found_time, len(c), vecs[n],
                        [titles[i].title for i in c]) for n, c in enumerate(clusters)]


def associate(query_emb: Sequence[float], index: EventIndex, n: int) -> list[tuple[EventRecord, float]]:
    """Exact top-``n`` events by cosine; ties broken by event id."""
    if len(index) == 0 or n < 1:
        return []
    q = np.asarray(query_emb, dtype=np.float64)
    norms = np.linalg.norm(index.matrix, axis=1) * np.linalg.norm(q)
    sims = (index.matrix @ q) / np.where(norms == 0, 1.0, norms)
    ids = np.array([r.event_id for r in index.records])
    order = np.lexsort((ids, -sims))[:n]
    return [(index.records[i], float(sims[i])) for i in order]


@dataclass(frozen=True)
class RankFeatures:
    relevance: float
    recency: float
    popularity_norm: float


class Ranker(Protocol):
    def score(self, f: RankFeatures) -> float: ...


@dataclass(frozen=True)
class LinearRanker:
    w_rel: float = 1.0
    w_rec: float = 0.3
    w_pop: float = 0.2

    def score(self, f: RankFeatures) -> float:
        return self.w_rel * f.relevance + self.w_rec * f.recency + self.w_pop * f.popularity_norm


def recency(found_time: float, now: float, half_life_hours: float) -> float:
    age_hours = max(0.0, now - found_time) / 3600.0
    return math.exp(-age_hours / half_life_hours * math.log(2))


def rank_features(candidates: Sequence[tuple[EventRecord, float]], now: float,
                  half_life_hours: float = 24.0) -> list[RankFeatures]:
    top_pop = max((r.popularity for r, _ in candidates), default=1)
    return [RankFeatures(rel, recency(r.found_time, now, half_life_hours), r.popularity / top_pop)
            for r, rel in candidates]


def rank_and_select(candidates: Sequence[tuple[EventRecord, float]], now: float, ranker: Ranker | None = None,
                    half_life_hours: float = 24.0, floor: float = 0.3) -> EventRecord | None:
    """Highest-scoring candidate, or ``None`` when even the best falls below ``floor``."""
    if not candidates:
        return None
    ranker = ranker or LinearRanker()
    feats = rank_features(candidates, now, half_life_hours)
    scored = sorted(((ranker.score(f), r) for f, (r, _) in zip(feats, candidates)),
                    key=lambda sr: (-sr[0], sr[1].event_id))
    best_score, best = scored[0]
    return best if best_score >= floor else None


class HashedBowEmbedder:
    """Signed feature hashing of lowercased words; a model-free fallback embedder."""

    def __init__(self, dim: int = 256):
        self.dim = dim

    def _bucket(self, word: str) -> tuple[int, float]:
        h = int.from_bytes(hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest(), "little")
        return h % self.dim, 1.0 if (h >> 40) & 1 else -1.0

    def __call__(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, t in enumerate(texts):
            for w in split_words(t):
                b, s = self._bucket(w)
                out[i, b] += s
        return out


def read_titles(path: str | Path) -> list[EventTitle]:
    """Parse a JSONL title stream, naming the first malformed line."""
    titles = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                titles.append(EventTitle(str(rec["title"]), str(rec.get("source", "")), float(rec["found_time"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed event title record ({exc})") from exc
    return titles
