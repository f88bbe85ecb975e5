"""Desk-scale ablation: the fused query/event tower against a query-only tower on synthetic data."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .encoder import EncoderConfig
from .fusion import FusionConfig
from .index import build_index
from .metrics import evaluate
from .model import ModelConfig, RetrievalModel
from .synth import SynthCorpus, synth_corpus
from .training import TrainConfig, fine_training_data, train_stage2
from .vocab import build_vocab


@dataclass
class AblationConfig:
    n_queries: int = 200
    n_events: int = 20
    n_docs: int = 5000
    split_by: str = "record"
    steps: int = 1500
    batch_size: int = 32
    lr: float = 1e-3
    warmup_steps: int = 100
    max_pairs_per_group: int = 64
    search_k: int = 100
    ks: tuple[int, ...] = (10, 50)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)


def run_variant(corpus: SynthCorpus, variant: str, seed: int, cfg: AblationConfig) -> dict[str, float]:
    """Train one variant on the train split's graded pairs and evaluate on the test split."""
    docs = corpus.doc_text()
    qc, ec = corpus.labeled_quadruplets("train")
    data = fine_training_data(qc, ec, docs, cfg.max_pairs_per_group, np.random.default_rng(seed))
    texts = list(docs.values()) + [q["text"] for q in corpus.queries] + [e["text"] for e in corpus.events]
    vocab = build_vocab(texts, cfg.encoder.vocab_size)
    model = RetrievalModel.initialize(ModelConfig(cfg.encoder, cfg.fusion, variant), vocab, seed)
    tcfg = TrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, max_steps=cfg.steps, warmup_steps=cfg.warmup_steps,
                       seed=seed, stage2_max_pairs_per_group=cfg.max_pairs_per_group)
    start = time.perf_counter()
    train_stage2(model, data, tcfg)
    index = build_index(model, corpus.docs)
    events = {e["event_id"]: e["text"] for e in corpus.events}
    test = corpus.split("test")
    fused = model.embed_queries_eval([q["text"] for q in test], [events[q["event_id"]] for q in test])
    hits = index.search_many(fused.vector.numpy(), cfg.search_k)
    run = {q["query_id"]: [d for d, _ in h] for q, h in zip(test, hits)}
    report = evaluate(run, corpus.judged(), cfg.ks)
    report["seconds"] = time.perf_counter() - start
    return report


def ablation_seed(seed: int, cfg: AblationConfig | None = None) -> dict[str, dict[str, float]]:
    cfg = cfg or AblationConfig()
    corpus = synth_corpus(seed, cfg.n_queries, cfg.n_events, cfg.n_docs, split_by=cfg.split_by)
    return {variant: run_variant(corpus, variant, seed, cfg) for variant in ("err", "no_event")}
