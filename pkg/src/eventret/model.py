"""Two-tower retrieval model: fused query/event tower and a document tower."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import torch
import torch.nn.functional as F

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .encoder import EncoderConfig, HiddenStates, embed_document, encode, init_encoder, init_mlp, mlp
from .fusion import FALLBACK, FusedQueryEmbedding, FusionConfig, fuse, init_fusion
from .params import ParameterStore
from .vocab import Tokenizer, Vocabulary

VARIANTS = ("err", "no_event")


@dataclass
class ModelConfig:
    encoder: EncoderConfig
    fusion: FusionConfig
    variant: str = "err"

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.encoder.hidden_dim % self.fusion.num_heads:
            raise ValueError("encoder.hidden_dim must be divisible by fusion.num_heads")


def init_params(cfg: ModelConfig, seed: int) -> ParameterStore:
    gen = torch.Generator().manual_seed(int(seed))
    store = ParameterStore()
    C = cfg.encoder.hidden_dim
    init_encoder(store, "query_encoder", cfg.encoder, gen)
    init_encoder(store, "doc_encoder", cfg.encoder, gen)
    init_mlp(store, "doc_proj", [C, 2 * C, cfg.fusion.tower_dim], gen)
    if cfg.variant == "err":
        init_fusion(store, C, cfg.fusion, gen)
    else:
        init_mlp(store, "query_proj", [C, 2 * C, cfg.fusion.tower_dim], gen)
    return store


def _pad_states(hs: HiddenStates, length: int) -> HiddenStates:
    extra = length - hs.states.shape[1]
    if extra == 0:
        return hs
    return HiddenStates(F.pad(hs.states, (0, 0, 0, extra)), F.pad(hs.mask, (0, extra)))


def _derive_seed(seed: int | None, offset: int) -> int | None:
    return None if seed is None else (int(seed) * 1_000_003 + offset) % (2**63 - 1)


class RetrievalModel:
    def __init__(self, cfg: ModelConfig, params: ParameterStore, vocab: Vocabulary):
        if len(vocab) > cfg.encoder.vocab_size:
            raise ValueError("vocabulary larger than encoder.vocab_size")
        self.cfg = cfg
        self.params = params
        self.vocab = vocab
        self.tokenizer = Tokenizer(vocab, cfg.encoder.max_lens)

    @classmethod
    def initialize(cls, cfg: ModelConfig, vocab: Vocabulary, seed: int) -> "RetrievalModel":
        return cls(cfg, init_params(cfg, seed), vocab)

    @property
    def variant(self) -> str:
        return self.cfg.variant

    def encode_texts(self, texts: Sequence[str], field: str, dropout_seed: int | None = None) -> HiddenStates:
        return encode(self.tokenizer.batch(texts, field), self.params, self.cfg.encoder,
                      prefix="query_encoder", dropout_seed=dropout_seed)

    def embed_queries(self, queries: Sequence[str], events: Sequence[str | None] | None = None,
                      dropout_seed: int | None = None) -> FusedQueryEmbedding:
        """Query-side embeddings; a missing event falls back to the query itself."""
        if not queries:
            raise ValueError("empty query batch")
        events = list(events) if events is not None else [None] * len(queries)
        if len(events) != len(queries):
            raise ValueError("queries and events differ in length")
        q_states = self.encode_texts(queries, "query", dropout_seed)
        if self.variant == "no_event":
            return FusedQueryEmbedding(mlp(q_states.pooled, self.params, "query_proj"), [FALLBACK] * len(queries))
        heads = self.cfg.fusion.num_heads
        present = [e is not None and e.strip() != "" for e in events]
        if not any(present):
            return fuse(q_states, None, self.params, heads)
        e_texts = [e if ok else q for q, e, ok in zip(queries, events, present)]
        e_states = self.encode_texts(e_texts, "event", _derive_seed(dropout_seed, 1))
        if not all(present):
            L = max(q_states.states.shape[1], e_states.states.shape[1])
            q_pad, e_pad = _pad_states(q_states, L), _pad_states(e_states, L)
            use = torch.tensor(present)
            e_states = HiddenStates(
                torch.where(use[:, None, None], e_pad.states, q_pad.states),
                torch.where(use[:, None], e_pad.mask, q_pad.mask),
            )
        fused = fuse(q_states, e_states, self.params, heads)
        fused.provenance = ["with_event" if ok else FALLBACK for ok in present]
        return fused

    def embed_documents(self, docs: Sequence[str], dropout_seed: int | None = None) -> torch.Tensor:
        if not docs:
            raise ValueError("empty document batch")
        return embed_document(self.tokenizer.batch(docs, "document"), self.params, self.cfg.encoder, dropout_seed)

    @torch.no_grad()
    def embed_documents_eval(self, docs: Sequence[str], batch_size: int = 256) -> torch.Tensor:
        out = [self.embed_documents(docs[i:i + batch_size]) for i in range(0, len(docs), batch_size)]
        return torch.cat(out) if out else torch.zeros(0, self.cfg.fusion.tower_dim)

    @torch.no_grad()
    def embed_queries_eval(self, queries: Sequence[str], events: Sequence[str | None] | None = None,
                           batch_size: int = 256) -> FusedQueryEmbedding:
        events = list(events) if events is not None else [None] * len(queries)
        vecs, prov = [], []
        for i in range(0, len(queries), batch_size):
            f = self.embed_queries(queries[i:i + batch_size], events[i:i + batch_size])
            vecs.append(f.vector)
            prov.extend(f.provenance)
        return FusedQueryEmbedding(torch.cat(vecs), prov)


def model_config_to_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)


def model_config_from_dict(d: dict) -> ModelConfig:
    return ModelConfig(EncoderConfig(**d["encoder"]), FusionConfig(**d["fusion"]), d["variant"])


def save_model(path: str | Path, model: RetrievalModel, seed: int, meta: dict | None = None) -> None:
    """Checkpoint with parameters, model config, seed and the vocabulary tokens."""
    save_checkpoint(path, model.params.state(), model_config_to_dict(model.cfg), seed,
                    {**(meta or {}), "vocab": model.vocab.itos})


def load_model(path: str | Path) -> tuple[RetrievalModel, Checkpoint]:
    ckpt = load_checkpoint(path)
    cfg = model_config_from_dict(ckpt.config)
    params = ParameterStore.from_state(ckpt.tensors)
    expected = init_params(cfg, 0)
    if params.names() != expected.names():
        raise ValueError("checkpoint parameters do not match its model config")
    return RetrievalModel(cfg, params, Vocabulary(ckpt.meta["vocab"])), ckpt
