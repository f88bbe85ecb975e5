"""Small transformer text encoder operating on a :class:`ParameterStore`.

All functions are pure given the store; dropout is only active when a seed
is supplied, and the same seed always yields the same masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .params import ParameterStore
from .vocab import TokenBatch, TokenSequence, collate

INIT_STD = 0.02
LN_EPS = 1e-5


@dataclass
class EncoderConfig:
    num_layers: int = 2
    hidden_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 128
    dropout: float = 0.1
    vocab_size: int = 8192
    max_query_len: int = 24
    max_event_len: int = 36
    max_doc_len: int = 128

    def __post_init__(self) -> None:
        for name in ("num_layers", "hidden_dim", "num_heads", "ffn_dim", "vocab_size",
                     "max_query_len", "max_event_len", "max_doc_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"encoder.{name} must be >= 1")
        if self.hidden_dim % self.num_heads:
            raise ValueError("encoder.hidden_dim must be divisible by encoder.num_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("encoder.dropout must lie in [0, 1)")

    @property
    def max_positions(self) -> int:
        return max(self.max_query_len, self.max_event_len, self.max_doc_len)

    @property
    def max_lens(self) -> dict[str, int]:
        return {"query": self.max_query_len, "event": self.max_event_len, "document": self.max_doc_len}


@dataclass
class HiddenStates:
    states: torch.Tensor  # (B, L, C); padded rows are zero
    mask: torch.Tensor  # (B, L) bool

    @property
    def pooled(self) -> torch.Tensor:
        return self.states[:, 0]

    @property
    def width(self) -> int:
        return self.states.shape[-1]

    def __len__(self) -> int:
        return self.states.shape[0]


class Dropout:
    """Inverted dropout drawing masks from a private generator."""

    def __init__(self, rate: float, seed: int | None):
        self.rate = rate
        self.gen = None
        if seed is not None and rate > 0.0:
            self.gen = torch.Generator().manual_seed(int(seed))

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        if self.gen is None:
            return x
        # masks are drawn in float32 so float64 gradient checks see the same pattern
        keep = torch.rand(x.shape, generator=self.gen, dtype=torch.float32) >= self.rate
        return x * keep.to(x.dtype) / (1.0 - self.rate)


NO_DROPOUT = Dropout(0.0, None)


def _normal(shape: tuple[int, ...], gen: torch.Generator) -> torch.Tensor:
    return torch.randn(shape, generator=gen, dtype=torch.float32) * INIT_STD


def init_linear(store: ParameterStore, prefix: str, n_in: int, n_out: int, gen: torch.Generator,
                bias: bool = True) -> None:
    store.add(f"{prefix}.w", _normal((n_in, n_out), gen))
    if bias:
        store.add(f"{prefix}.b", torch.zeros(n_out))


def init_layer_norm(store: ParameterStore, prefix: str, dim: int) -> None:
    store.add(f"{prefix}.g", torch.ones(dim))
    store.add(f"{prefix}.b", torch.zeros(dim))


def init_mlp(store: ParameterStore, prefix: str, dims: list[int], gen: torch.Generator) -> None:
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        init_linear(store, f"{prefix}.{i}", a, b, gen)


def init_encoder_layer(store: ParameterStore, prefix: str, cfg: EncoderConfig, gen: torch.Generator) -> None:
    C = cfg.hidden_dim
    for name in ("q", "k", "v", "o"):
        init_linear(store, f"{prefix}.attn.{name}", C, C, gen)
    init_layer_norm(store, f"{prefix}.ln1", C)
    init_linear(store, f"{prefix}.ffn.0", C, cfg.ffn_dim, gen)
    init_linear(store, f"{prefix}.ffn.1", cfg.ffn_dim, C, gen)
    init_layer_norm(store, f"{prefix}.ln2", C)


def init_encoder(store: ParameterStore, prefix: str, cfg: EncoderConfig, gen: torch.Generator) -> None:
    store.add(f"{prefix}.tok_emb", _normal((cfg.vocab_size, cfg.hidden_dim), gen))
    store.add(f"{prefix}.pos_emb", _normal((cfg.max_positions, cfg.hidden_dim), gen))
    init_layer_norm(store, f"{prefix}.emb_ln", cfg.hidden_dim)
    for i in range(cfg.num_layers):
        init_encoder_layer(store, f"{prefix}.layers.{i}", cfg, gen)


def linear(x: torch.Tensor, p: ParameterStore, prefix: str) -> torch.Tensor:
    y = x @ p[f"{prefix}.w"]
    bias = f"{prefix}.b"
    return y + p[bias] if bias in p else y


def layer_norm(x: torch.Tensor, p: ParameterStore, prefix: str) -> torch.Tensor:
    return F.layer_norm(x, x.shape[-1:], p[f"{prefix}.g"], p[f"{prefix}.b"], LN_EPS)


def mlp(x: torch.Tensor, p: ParameterStore, prefix: str, n_layers: int = 2) -> torch.Tensor:
    """Linear layers with ReLU between them (none after the last)."""
    for i in range(n_layers):
        x = linear(x, p, f"{prefix}.{i}")
        if i < n_layers - 1:
            x = torch.relu(x)
    return x


def split_heads(x: torch.Tensor, heads: int) -> torch.Tensor:
    B, L, C = x.shape
    return x.view(B, L, heads, C // heads).transpose(1, 2)


def self_attention(x: torch.Tensor, mask: torch.Tensor, p: ParameterStore, prefix: str,
                   heads: int, drop: Dropout = NO_DROPOUT) -> torch.Tensor:
    B, L, C = x.shape
    q = split_heads(linear(x, p, f"{prefix}.q"), heads)
    k = split_heads(linear(x, p, f"{prefix}.k"), heads)
    v = split_heads(linear(x, p, f"{prefix}.v"), heads)
    scores = q @ k.transpose(-1, -2) / math.sqrt(C // heads)
    scores = scores.masked_fill(~mask[:, None, None, :], float("-inf"))
    attn = drop(torch.softmax(scores, dim=-1))
    out = (attn @ v).transpose(1, 2).reshape(B, L, C)
    return linear(out, p, f"{prefix}.o")


def encoder_layer(x: torch.Tensor, mask: torch.Tensor, p: ParameterStore, prefix: str,
                  heads: int, drop: Dropout = NO_DROPOUT) -> torch.Tensor:
    """Post-norm block: LN(x + attn(x)), then LN(h + FFN(h)) with GELU."""
    h = layer_norm(x + drop(self_attention(x, mask, p, f"{prefix}.attn", heads, drop)), p, f"{prefix}.ln1")
    f = linear(F.gelu(linear(h, p, f"{prefix}.ffn.0")), p, f"{prefix}.ffn.1")
    return layer_norm(h + drop(f), p, f"{prefix}.ln2")


def as_batch(tokens: TokenSequence | TokenBatch) -> TokenBatch:
    return collate([tokens]) if isinstance(tokens, TokenSequence) else tokens


def encode(tokens: TokenSequence | TokenBatch, params: ParameterStore, cfg: EncoderConfig,
           prefix: str = "query_encoder", dropout_seed: int | None = None) -> HiddenStates:
    batch = as_batch(tokens)
    ids, mask = batch.ids, batch.mask
    if ids.numel() and (int(ids.max()) >= cfg.vocab_size or int(ids.min()) < 0):
        raise ValueError("token id out of vocabulary")
    L = ids.shape[1]
    if L > cfg.max_positions:
        raise ValueError(f"sequence length {L} exceeds {cfg.max_positions} positions")
    drop = Dropout(cfg.dropout, dropout_seed)
    x = params[f"{prefix}.tok_emb"][ids] + params[f"{prefix}.pos_emb"][:L]
    x = drop(layer_norm(x, params, f"{prefix}.emb_ln"))
    for i in range(cfg.num_layers):
        x = encoder_layer(x, mask, params, f"{prefix}.layers.{i}", cfg.num_heads, drop)
    x = x * mask[..., None].to(x.dtype)
    return HiddenStates(x, mask)


def embed_document(doc: TokenSequence | TokenBatch, params: ParameterStore, cfg: EncoderConfig,
                   dropout_seed: int | None = None) -> torch.Tensor:
    """Pooled document-encoder state through the projection MLP: (B, tower_dim)."""
    hs = encode(doc, params, cfg, prefix="doc_encoder", dropout_seed=dropout_seed)
    return mlp(hs.pooled, params, "doc_proj")
