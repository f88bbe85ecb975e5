"""Multi-task triplet training with document contrastive loss and two-stage schedule."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from enum import Enum
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np
import torch

from .annotation.records import R_ED, R_QD, LabeledQuadruplet, group_by_query_event
from .fusion import cosine
from .losses import contrastive_loss, total_loss, triplet_loss
from .mining import BankExhausted, MemoryBank, random_negative
from .model import RetrievalModel
from .params import backward

logger = logging.getLogger(__name__)

SEED_SPACE = 2**31 - 1


class TaskKind(str, Enum):
    QUERY_CENTRIC = "query_centric"
    EVENT_CENTRIC = "event_centric"


@dataclass(frozen=True)
class Quadruplet:
    query_id: str
    query: str
    event: str | None
    positive_id: str
    positive: str
    negative_id: str | None = None
    negative: str | None = None

    def __post_init__(self) -> None:
        if not self.query.strip() or not self.positive.strip():
            raise ValueError("query and positive document must be non-empty")
        if self.negative_id is not None and self.negative_id == self.positive_id:
            raise ValueError("positive and negative documents must differ")


@dataclass
class TrainConfig:
    margin: float = 0.2
    p_q: float = 0.7
    lam: float = 0.1
    tau: float = 0.05
    lr: float = 5e-5
    warmup_steps: int | None = None  # default: 10% of the stage's steps
    batch_size: int = 128
    epochs: int = 1
    max_steps: int | None = None
    seed: int = 0
    hard_k: int = 8
    stage2_max_pairs_per_group: int = 64

    def __post_init__(self) -> None:
        if self.margin <= 0:
            raise ValueError("train.margin must be > 0")
        if not 0.0 <= self.p_q <= 1.0:
            raise ValueError("train.p_q must lie in [0, 1]")
        if self.tau <= 0:
            raise ValueError("train.tau must be > 0")
        if self.lam < 0:
            raise ValueError("train.lam must be >= 0")
        if self.hard_k < 1:
            raise ValueError("train.hard_k must be >= 1")
        if self.lr <= 0:
            raise ValueError("train.lr must be > 0")
        for name in ("batch_size", "epochs", "stage2_max_pairs_per_group"):
            if getattr(self, name) < 1:
                raise ValueError(f"train.{name} must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("train.max_steps must be >= 1")
        if self.warmup_steps is not None and self.warmup_steps < 0:
            raise ValueError("train.warmup_steps must be >= 0")


@dataclass
class TrainingBatch:
    task: TaskKind
    quadruplets: list[Quadruplet]
    negatives: list[dict]  # per example: {"kind": static|random|mined, "doc_id": ...}
    seeds: dict[str, int]


@dataclass
class TrainingData:
    """Per-task quadruplets plus the document pool used for random negatives."""

    query_centric: list[Quadruplet]
    event_centric: list[Quadruplet]
    docs: dict[str, str]
    positives: dict[str, set[str]] = field(default_factory=dict)  # query id -> known positive doc ids

    def __post_init__(self) -> None:
        if not self.positives:
            pos: dict[str, set[str]] = defaultdict(set)
            for q in self.query_centric + self.event_centric:
                pos[q.query_id].add(q.positive_id)
            self.positives = dict(pos)
        self.doc_ids = sorted(self.docs)

    def __len__(self) -> int:
        return len(self.query_centric) + len(self.event_centric)

    def dataset(self, task: TaskKind) -> list[Quadruplet]:
        return self.query_centric if task is TaskKind.QUERY_CENTRIC else self.event_centric


@dataclass
class TrainResult:
    model: RetrievalModel
    log: list[dict]
    manifest: dict


def select_task(rng: np.random.Generator, p_q: float) -> TaskKind:
    """Query-centric with probability ``p_q``, event-centric otherwise."""
    if not 0.0 <= p_q <= 1.0:
        raise ValueError("p_q must lie in [0, 1]")
    return TaskKind.QUERY_CENTRIC if rng.random() < p_q else TaskKind.EVENT_CENTRIC


def grade_triplets(grades: Mapping[str, int]) -> list[tuple[str, str]]:
    """Every (higher, lower) doc pair with strictly different grades."""
    out = []
    for a, b in combinations(list(grades), 2):
        if grades[a] > grades[b]:
            out.append((a, b))
        elif grades[b] > grades[a]:
            out.append((b, a))
    return out


COARSE_POSITIVE_GRADE = 3


def is_coarse_positive(q: LabeledQuadruplet) -> bool:
    return q.label >= COARSE_POSITIVE_GRADE if q.graded else q.label == 1


def coarse_training_data(query_centric: Iterable[LabeledQuadruplet], event_centric: Iterable[LabeledQuadruplet],
                         docs: Mapping[str, str]) -> TrainingData:
    """Positive pairs to quadruplets whose negatives are mined during training.

    Voted pairs count when labeled 1; LLM-graded pairs are binarised at
    ``COARSE_POSITIVE_GRADE`` so hard pairs also feed the coarse stage.
    """
    def positives(quads, kind):
        return [Quadruplet(q.query_id, q.query, q.event or None, q.doc_id, q.doc)
                for q in quads if q.label_kind == kind and is_coarse_positive(q)]
    qc = positives(query_centric, R_QD)
    ec = positives(event_centric, R_ED)
    pool = dict(docs)
    for q in qc + ec:
        pool.setdefault(q.positive_id, q.positive)
    return TrainingData(qc, ec, pool)


def fine_training_data(query_centric: Iterable[LabeledQuadruplet], event_centric: Iterable[LabeledQuadruplet],
                       docs: Mapping[str, str], max_pairs_per_group: int, rng: np.random.Generator) -> TrainingData:
    """Graded groups to (higher, lower) quadruplets, capped per (query, event) group."""
    def build(quads):
        out = []
        groups = group_by_query_event(q for q in quads if q.graded)
        for key in sorted(groups):
            members = {q.doc_id: q for q in groups[key]}
            pairs = grade_triplets({d: q.label for d, q in members.items()})
            if len(pairs) > max_pairs_per_group:
                keep = sorted(rng.choice(len(pairs), size=max_pairs_per_group, replace=False))
                pairs = [pairs[i] for i in keep]
            for hi, lo in pairs:
                h, l_ = members[hi], members[lo]
                out.append(Quadruplet(h.query_id, h.query, h.event or None, h.doc_id, h.doc, l_.doc_id, l_.doc))
        return out
    qc = list(query_centric)
    ec = list(event_centric)
    pos: dict[str, set[str]] = defaultdict(set)
    for q in qc + ec:
        if q.graded and q.label >= 2:
            pos[q.query_id].add(q.doc_id)
    pool = dict(docs)
    for q in qc + ec:
        pool.setdefault(q.doc_id, q.doc)
    return TrainingData(build(qc), build(ec), pool, dict(pos))


def stage_steps(cfg: TrainConfig, n_examples: int) -> int:
    if cfg.max_steps is not None:
        return cfg.max_steps
    return max(1, cfg.epochs * math.ceil(n_examples / cfg.batch_size))


class Trainer:
    """Single-threaded optimisation loop; the memory bank is owned by this loop."""

    def __init__(self, model: RetrievalModel, cfg: TrainConfig, bank: MemoryBank | None = None,
                 bank_factor: int = 8):
        self.model = model
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.bank = bank if bank is not None else MemoryBank.for_batch(
            cfg.batch_size, model.cfg.fusion.tower_dim, bank_factor)
        self.params = [t for _, t in model.params.items()]
        self.optimizer = torch.optim.Adam(self.params, lr=cfg.lr)

    def _lr(self, step: int, warmup: int) -> float:
        if warmup <= 0:
            return self.cfg.lr
        return self.cfg.lr * min(1.0, (step + 1) / warmup)

    def sample_batch(self, data: TrainingData) -> TrainingBatch:
        task = select_task(self.rng, self.cfg.p_q)
        pool = data.dataset(task)
        if not pool:
            task = TaskKind.EVENT_CENTRIC if task is TaskKind.QUERY_CENTRIC else TaskKind.QUERY_CENTRIC
            pool = data.dataset(task)
        n = min(self.cfg.batch_size, len(pool))
        idx = self.rng.choice(len(pool), size=n, replace=False)
        seeds = {name: int(s) for name, s in zip(("query", "positive", "positive_twin", "negative"),
                                                   self.rng.integers(0, SEED_SPACE, size=4))}
        quads = [pool[int(i)] for i in idx]
        return TrainingBatch(task, quads, [], seeds)

    def resolve_negatives(self, batch: TrainingBatch, data: TrainingData, q_vecs: torch.Tensor) -> None:
        warm = self.bank.full
        for i, quad in enumerate(batch.quadruplets):
            if quad.negative_id is not None:
                batch.negatives.append({"kind": "static", "doc_id": quad.negative_id, "text": quad.negative})
                continue
            exclude = data.positives.get(quad.query_id, set()) | {quad.positive_id}
            if warm:
                try:
                    entry = self.bank.select_topk_hard(q_vecs[i].numpy(), self.cfg.hard_k,
                                                       exclude_docs=exclude, exclude_queries={quad.query_id})
                    batch.negatives.append({"kind": "mined", "doc_id": entry.doc_id, "embedding": entry.embedding})
                    continue
                except BankExhausted:
                    logger.debug("bank exhausted for %s; random negative", quad.query_id)
            doc_id = random_negative(data.doc_ids, self.rng, exclude)
            batch.negatives.append({"kind": "random", "doc_id": doc_id, "text": data.docs[doc_id]})

    def negative_embeddings(self, batch: TrainingBatch) -> torch.Tensor:
        fresh = [i for i, n in enumerate(batch.negatives) if n["kind"] != "mined"]
        rows: list[torch.Tensor | None] = [None] * len(batch.negatives)
        if fresh:
            emb = self.model.embed_documents([batch.negatives[i]["text"] for i in fresh], batch.seeds["negative"])
            for j, i in enumerate(fresh):
                rows[i] = emb[j]
        dtype = self.model.params.dtype
        for i, n in enumerate(batch.negatives):
            if n["kind"] == "mined":
                rows[i] = torch.as_tensor(n["embedding"], dtype=dtype)
        return torch.stack(rows)  # type: ignore[arg-type]

    def step(self, data: TrainingData, step: int, total: int, warmup: int, stage: int) -> dict:
        batch = self.sample_batch(data)
        quads = batch.quadruplets
        q = self.model.embed_queries([x.query for x in quads], [x.event for x in quads], batch.seeds["query"]).vector
        pos = self.model.embed_documents([x.positive for x in quads], batch.seeds["positive"])
        self.resolve_negatives(batch, data, q.detach())
        neg = self.negative_embeddings(batch)
        l_task = triplet_loss(cosine(q, pos), cosine(q, neg), self.cfg.margin)
        if self.cfg.lam > 0 and len(quads) >= 2:
            twin = self.model.embed_documents([x.positive for x in quads], batch.seeds["positive_twin"])
            l_cl = contrastive_loss(pos, twin, self.cfg.tau)
        else:
            l_cl = torch.zeros((), dtype=q.dtype)
        loss = total_loss(l_task, l_cl, self.cfg.lam)
        lr = self._lr(step, warmup)
        for g in self.optimizer.param_groups:
            g["lr"] = lr
        self.model.params.zero_grad()
        backward(loss, self.model.params)
        self.optimizer.step()
        self.bank.push_batch((x.positive_id, pos[i].detach().numpy(), x.query_id) for i, x in enumerate(quads))
        return {
            "stage": stage,
            "step": step,
            "task": batch.task.value,
            "loss": float(loss.detach()),
            "triplet": float(l_task.detach()),
            "contrastive": float(l_cl.detach()),
            "lr": lr,
            "seeds": batch.seeds,
            "queries": [x.query_id for x in quads],
            "positives": [x.positive_id for x in quads],
            "negatives": [{"kind": n["kind"], "doc_id": n["doc_id"]} for n in batch.negatives],
        }

    def run(self, data: TrainingData, stage: int) -> list[dict]:
        if len(data) == 0:
            raise ValueError("empty dataset")
        total = stage_steps(self.cfg, len(data))
        warmup = self.cfg.warmup_steps if self.cfg.warmup_steps is not None else max(1, total // 10)
        log = []
        for step in range(total):
            rec = self.step(data, step, total, warmup, stage)
            log.append(rec)
            if step % 50 == 0:
                logger.info("stage %d step %d/%d loss %.4f", stage, step, total, rec["loss"])
        return log


def _manifest(stage: int, cfg: TrainConfig, model: RetrievalModel, data: TrainingData, steps: int) -> dict:
    return {
        "stage": stage,
        "train": asdict(cfg),
        "variant": model.variant,
        "steps": steps,
        "query_centric": len(data.query_centric),
        "event_centric": len(data.event_centric),
        "num_params": model.params.numel(),
    }


def train_stage1(model: RetrievalModel, data: TrainingData, cfg: TrainConfig,
                 bank: MemoryBank | None = None, bank_factor: int = 8) -> TrainResult:
    """Coarse stage: binary positives with negatives mined from the memory bank."""
    trainer = Trainer(model, cfg, bank, bank_factor)
    log = trainer.run(data, stage=1)
    return TrainResult(model, log, _manifest(1, cfg, model, data, len(log)))


def train_stage2(model: RetrievalModel, data: TrainingData, cfg: TrainConfig,
                 bank: MemoryBank | None = None, bank_factor: int = 8) -> TrainResult:
    """Fine stage on graded pairs; continues from the stage-1 parameters in ``model``."""
    trainer = Trainer(model, cfg, bank, bank_factor)
    log = trainer.run(data, stage=2)
    return TrainResult(model, log, _manifest(2, cfg, model, data, len(log)))

