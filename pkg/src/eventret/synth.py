"""Seeded synthetic news corpus with graded judgments, event titles and LLM stub fixtures.

Events combine a few entity words with three topic words from a small shared
pool, so every topic word recurs across events and later (test) events are
new combinations of words seen in training. A
query names one entity of an event; only the event text tells the model
which of the entity's stories is current.

Grades for (query record, doc): 4 if the doc is about the record's event,
2 if it mentions the queried entity but covers another story, 0 otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotation.llm import prompt_hash
from .annotation.prompts import InstructionKind, render_prompt
from .annotation.records import R_ED, R_QD, LabeledQuadruplet, RawTriplet
from .jsonio import write_json, write_jsonl, write_tsv

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "gr", "kr", "st", "tr"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
_MODIFIERS = ["news", "latest", "today", "update", "now", "report"]
_SOURCES = ["Daily", "Courier", "Herald", "Wire", "Gazette", "Post"]
_BASE_TIME = 1_700_000_000.0
HOUR = 3600.0


def _pseudo_words(rng: np.random.Generator, n: int, syllables: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


@dataclass
class SynthCorpus:
    queries: list[dict]
    events: list[dict]
    docs: list[dict]
    judgments: list[tuple[str, str, int]]
    titles: list[dict]
    event_docs: dict[str, list[str]] = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def doc_text(self) -> dict[str, str]:
        return {d["doc_id"]: d["text"] for d in self.docs}

    def split(self, name: str) -> list[dict]:
        return [q for q in self.queries if q["split"] == name]

    def judged(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for q, d, g in self.judgments:
            out.setdefault(q, {})[d] = g
        return out

    def grade(self, query: dict, doc: dict) -> int:
        if doc["event_id"] == query["event_id"]:
            return 4
        if query["entity"] in doc["entities"]:
            return 2
        return 0

    def event_grade(self, event_id: str, doc: dict) -> int:
        return 4 if doc["event_id"] == event_id else 0

    def raw_triplets(self, split: str = "train") -> list[RawTriplet]:
        ev = {e["event_id"]: e for e in self.events}
        by_query: dict[str, list[dict]] = {}
        for d in self.docs:
            by_query.setdefault(d["query_id"], []).append(d)
        out = []
        for q in self.split(split):
            for d in by_query.get(q["query_id"], []):
                out.append(RawTriplet(q["query_id"], q["text"], q["event_id"], ev[q["event_id"]]["text"],
                                      d["doc_id"], d["text"]))
        return out

    def stub_responses(self, triplets: list[RawTriplet] | None = None,
                       kind: InstructionKind = InstructionKind.COT_GRADE) -> dict[str, str]:
        """Canned grading replies for every QD and ED pair of ``triplets``, keyed by prompt hash."""
        triplets = self.raw_triplets() if triplets is None else triplets
        qmap = {q["query_id"]: q for q in self.queries}
        dmap = {d["doc_id"]: d for d in self.docs}
        out = {}
        for t in triplets:
            doc = dmap[t.doc_id]
            for left, grade in ((t.query, self.grade(qmap[t.query_id], doc)),
                                (t.event, self.event_grade(t.event_id, doc))):
                if kind is InstructionKind.COT_GRADE:
                    reply = f"The document was checked against the request.\nAnswer: {grade}"
                else:
                    reply = f"Answer: {grade}"
                out[prompt_hash(render_prompt(kind, left, [t.doc]))] = reply
        return out

    def labeled_quadruplets(self, split: str = "train") -> tuple[list[LabeledQuadruplet], list[LabeledQuadruplet]]:
        """Ground-truth graded quadruplets over each record's judged docs (query- and event-centric)."""
        ev = {e["event_id"]: e for e in self.events}
        dmap = {d["doc_id"]: d for d in self.docs}
        judged = self.judged()
        qc, ec = [], []
        for q in self.split(split):
            e = ev[q["event_id"]]
            for did, grade in sorted(judged.get(q["query_id"], {}).items()):
                doc = dmap[did]
                qc.append(LabeledQuadruplet(q["query_id"], q["text"], e["event_id"], e["text"], did, doc["text"],
                                            grade, R_QD, "human", graded=True))
                ec.append(LabeledQuadruplet(q["query_id"], q["text"], e["event_id"], e["text"], did, doc["text"],
                                            self.event_grade(e["event_id"], doc), R_ED, "human", graded=True))
        return qc, ec

    def write(self, directory: str | Path) -> None:
        d = Path(directory)
        write_jsonl(d / "queries.jsonl", self.queries)
        write_jsonl(d / "events.jsonl", self.events)
        write_jsonl(d / "docs.jsonl", [{k: v for k, v in doc.items()} for doc in self.docs])
        write_jsonl(d / "titles.jsonl", self.titles)
        write_tsv(d / "judgments.tsv", self.judgments)
        write_jsonl(d / "triplets.jsonl", [t.__dict__ for t in self.raw_triplets()])
        write_json(d / "llm_stub.json", self.stub_responses())
        write_json(d / "stats.json", self.stats)


SPLITS = ("record", "time")


def synth_corpus(seed: int = 0, n_queries: int = 200, n_events: int = 20, n_docs: int = 5000,
                 test_fraction: float = 0.25, split_by: str = "record") -> SynthCorpus:
    """Build a corpus; ``split_by`` holds out random query records or the latest events."""
    if n_events < 1 or n_queries < 1:
        raise ValueError("need at least one event and one query")
    if n_docs < 2 * n_queries:
        raise ValueError("n_docs must be at least 2 * n_queries")
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must lie in [0, 1)")
    if split_by not in SPLITS:
        raise ValueError(f"split_by must be one of {SPLITS}")
    rng = np.random.default_rng(seed)
    split_rng = np.random.default_rng([seed, 1])
    taken: set[str] = set(_MODIFIERS)
    n_entities = max(2, n_events)
    entities = _pseudo_words(rng, n_entities, 2, taken)
    topic_pool = _pseudo_words(rng, max(6, n_events // 2 + 2), 3, taken)
    fillers = _pseudo_words(rng, 150, 2, taken)

    # events: 2-3 entities each (round-robin so every entity is used) and a unique topic triple
    combos: set[tuple[str, ...]] = set()
    events = []
    for i in range(n_events):
        k = 2 if rng.random() < 0.5 else 3
        ents = [entities[(i * 2 + j) % n_entities] for j in range(k)]
        ents = sorted(set(ents), key=ents.index)
        while True:
            topic = tuple(sorted(rng.choice(topic_pool, size=3, replace=False).tolist()))
            if topic not in combos:
                combos.add(topic)
                break
        found = _BASE_TIME + i * 12 * HOUR + float(rng.uniform(0, 2 * HOUR))
        text = " ".join(w.capitalize() for w in ents + list(topic))
        events.append({"event_id": f"e{i:04d}", "text": text, "found_time": found,
                       "entities": ents, "topic": list(topic)})
    n_test_events = int(math.floor(test_fraction * n_events))
    if n_events >= 2:
        n_test_events = max(1, n_test_events) if test_fraction > 0 else 0
        n_test_events = min(n_test_events, n_events - 1)
    test_events = {e["event_id"] for e in events[n_events - n_test_events:]} if n_test_events else set()
    if split_by == "record":
        test_events = set()

    # query records cycle over (event, entity) slots; repeats get a modifier word
    slots = [(e, x) for e in events for x in e["entities"]]
    queries = []
    for n in range(n_queries):
        ev, ent = slots[n % len(slots)]
        rnd = n // len(slots)
        text = ent if rnd == 0 else f"{ent} {_MODIFIERS[(rnd - 1) % len(_MODIFIERS)]}"
        queries.append({"query_id": f"q{n:05d}", "text": text, "entity": ent, "event_id": ev["event_id"],
                        "split": _split(ev["event_id"] in test_events, split_by, split_rng, test_fraction),
                        "time": ev["found_time"] + HOUR})

    events_by_entity: dict[str, list[dict]] = {}
    for e in events:
        for x in e["entities"]:
            events_by_entity.setdefault(x, []).append(e)

    def filler(lo: int, hi: int) -> list[str]:
        return rng.choice(fillers, size=int(rng.integers(lo, hi + 1))).tolist()

    def shuffled(words: list[str]) -> str:
        rng.shuffle(words)
        return " ".join(words)

    docs = []
    base, extra = divmod(n_docs, n_queries)
    for qi, q in enumerate(queries):
        m = base + (1 if qi < extra else 0)
        n1 = max(1, round(0.4 * m))
        n2 = max(1, round(0.3 * m))
        n3 = m - n1 - n2
        if n3 < 0:
            n2 += n3
            n3 = 0
        ev = events[int(q["event_id"][1:])]
        ent = q["entity"]
        for tier, count in ((1, n1), (2, n2), (3, n3)):
            for _ in range(count):
                if tier == 1:
                    words = [ent] + list(ev["topic"])
                    others = [x for x in ev["entities"] if x != ent]
                    if others and rng.random() < 0.5:
                        words.append(str(rng.choice(others)))
                    doc_event, ts = ev["event_id"], ev["found_time"] + float(rng.uniform(0, 6 * HOUR))
                else:
                    if tier == 2:
                        subject = ent
                        stale = [e for e in events_by_entity[ent] if e["event_id"] != ev["event_id"]]
                    else:
                        subject = str(rng.choice([x for x in entities if x != ent]))
                        stale = [e for e in events_by_entity.get(subject, []) if e["event_id"] != ev["event_id"]
                                 and ent not in e["entities"]]
                    if stale and rng.random() < 0.5:
                        other = stale[int(rng.integers(len(stale)))]
                        words = [subject] + list(other["topic"])
                        doc_event = other["event_id"]
                    else:
                        pool = [w for w in topic_pool if w not in ev["topic"]]
                        words = [subject] + rng.choice(pool, size=3, replace=False).tolist()
                        doc_event = None
                    ts = ev["found_time"] - float(rng.uniform(2 * 24 * HOUR, 30 * 24 * HOUR))
                mentioned = sorted({w for w in words if w in set(entities)})
                text = shuffled(words + filler(4, 10))
                docs.append({"doc_id": f"d{len(docs):06d}", "text": text, "title": " ".join(text.split()[:6]),
                             "timestamp": ts, "event_id": doc_event, "entities": mentioned,
                             "tier": tier, "query_id": q["query_id"]})

    corpus = SynthCorpus(queries, events, docs, [], [])
    by_event: dict[str, list[dict]] = {}
    by_entity: dict[str, list[dict]] = {}
    for d in docs:
        if d["event_id"]:
            by_event.setdefault(d["event_id"], []).append(d)
        for x in d["entities"]:
            by_entity.setdefault(x, []).append(d)
    corpus.event_docs = {e: [d["doc_id"] for d in ds] for e, ds in by_event.items()}
    judgments = []
    for q in queries:
        cands = {d["doc_id"]: d for d in by_event.get(q["event_id"], []) + by_entity.get(q["entity"], [])}
        for d in docs_of(q, docs, base, extra, queries):
            if d["tier"] == 3:
                cands.setdefault(d["doc_id"], d)
        for did in sorted(cands):
            judgments.append((q["query_id"], did, corpus.grade(q, cands[did])))
    corpus.judgments = judgments
    corpus.titles = _titles(rng, events)
    corpus.stats = {"seed": seed, "queries": n_queries, "events": n_events, "docs": len(docs),
                    "split_by": split_by, "test_events": sorted(test_events), "entities": len(entities)}
    return corpus


def _split(in_test_event: bool, split_by: str, rng: np.random.Generator, test_fraction: float) -> str:
    if split_by == "time":
        return "test" if in_test_event else "train"
    return "test" if rng.random() < test_fraction else "train"


def docs_of(q: dict, docs: list[dict], base: int, extra: int, queries: list[dict]) -> list[dict]:
    """Documents generated for query record ``q`` (they are laid out contiguously)."""
    qi = int(q["query_id"][1:])
    start = qi * base + min(qi, extra)
    return docs[start:start + base + (1 if qi < extra else 0)]


def _titles(rng: np.random.Generator, events: list[dict]) -> list[dict]:
    """Noisy title stream: several decorated variants per event plus junk and duplicates."""
    out = []
    for e in events:
        variants = [e["text"], f"[Breaking] {e['text']} — {rng.choice(_SOURCES)}",
                    f"Update: {e['text']}", f"{e['text']} - {rng.choice(_SOURCES)}"]
        for j, v in enumerate(variants[: 2 + int(rng.integers(0, 3))]):
            out.append({"title": v, "source": str(rng.choice(_SOURCES)),
                        "found_time": e["found_time"] + j * 600.0})
        if rng.random() < 0.3:
            out.append(dict(out[-1]))
    for i in range(max(1, len(events) // 4)):
        out.append({"title": "ok", "source": "spam", "found_time": _BASE_TIME + i * HOUR})
    out.sort(key=lambda r: (r["found_time"], r["title"]))
    return out

