"""Query-side tower: query/event cross-attention, per-stream FFN block, fused MLP."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .encoder import HiddenStates, init_layer_norm, init_linear, init_mlp, layer_norm, linear, mlp
from .params import ParameterStore

WITH_EVENT = "with_event"
FALLBACK = "fallback"


@dataclass
class FusionConfig:
    num_heads: int = 4
    ffn_dim: int = 128
    mlp_hidden: int | None = None  # defaults to 2 * hidden_dim
    tower_dim: int = 256

    def __post_init__(self) -> None:
        if self.num_heads < 1 or self.ffn_dim < 1 or self.tower_dim < 1:
            raise ValueError("fusion sizes must be >= 1")
        if self.mlp_hidden is not None and self.mlp_hidden < 1:
            raise ValueError("fusion.mlp_hidden must be >= 1")

    def hidden(self, dim: int) -> int:
        return self.mlp_hidden or 2 * dim


@dataclass
class FusedQueryEmbedding:
    vector: torch.Tensor  # (B, tower_dim)
    provenance: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return self.vector.shape[0]


def init_cross_attention(store: ParameterStore, prefix: str, dim: int, gen: torch.Generator) -> None:
    for name in ("q", "k", "v", "o"):
        init_linear(store, f"{prefix}.{name}", dim, dim, gen, bias=False)


def init_ffn_block(store: ParameterStore, prefix: str, dim: int, ffn_dim: int, gen: torch.Generator) -> None:
    init_linear(store, f"{prefix}.ffn.0", dim, ffn_dim, gen)
    init_linear(store, f"{prefix}.ffn.1", ffn_dim, dim, gen)
    init_layer_norm(store, f"{prefix}.ln", dim)


def init_fusion(store: ParameterStore, dim: int, cfg: FusionConfig, gen: torch.Generator,
                prefix: str = "fusion") -> None:
    if dim % cfg.num_heads:
        raise ValueError("hidden_dim must be divisible by fusion.num_heads")
    for stream in ("query", "event"):
        init_cross_attention(store, f"{prefix}.ca_{stream}", dim, gen)
        init_ffn_block(store, f"{prefix}.trm_{stream}", dim, cfg.ffn_dim, gen)
    init_mlp(store, f"{prefix}.mlp", [2 * dim, cfg.hidden(dim), cfg.tower_dim], gen)


def cross_attention(target: HiddenStates, source: HiddenStates, params: ParameterStore, prefix: str,
                    heads: int, return_weights: bool = False):
    """The target's pooled token attends over every unmasked source token.

    Returns one ``(B, C)`` vector per example (and the ``(B, heads, L_src)``
    attention weights when requested).
    """
    C = target.width
    if source.width != C or params[f"{prefix}.q.w"].shape[0] != C:
        raise ValueError("dimension mismatch")
    if len(target) != len(source):
        raise ValueError("dimension mismatch")
    if C % heads:
        raise ValueError("hidden_dim must be divisible by heads")
    B, Ls, _ = source.states.shape
    dh = C // heads
    q = linear(target.pooled, params, f"{prefix}.q").view(B, heads, dh)
    k = linear(source.states, params, f"{prefix}.k").view(B, Ls, heads, dh)
    v = linear(source.states, params, f"{prefix}.v").view(B, Ls, heads, dh)
    scores = torch.einsum("bhd,blhd->bhl", q, k) / math.sqrt(dh)
    scores = scores.masked_fill(~source.mask[:, None, :], float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    out = torch.einsum("bhl,blhd->bhd", weights, v).reshape(B, C)
    out = linear(out, params, f"{prefix}.o")
    return (out, weights) if return_weights else out


def ffn_block(x: torch.Tensor, params: ParameterStore, prefix: str) -> torch.Tensor:
    """LayerNorm(x + max(0, x W1 + b1) W2 + b2)."""
    h = linear(torch.relu(linear(x, params, f"{prefix}.ffn.0")), params, f"{prefix}.ffn.1")
    return layer_norm(x + h, params, f"{prefix}.ln")


def fuse(query_states: HiddenStates, event_states: HiddenStates | None, params: ParameterStore,
         heads: int, prefix: str = "fusion") -> FusedQueryEmbedding:
    fallback = event_states is None
    if fallback:
        event_states = query_states
    if event_states.width != query_states.width:
        raise ValueError("dimension mismatch")
    q_side = ffn_block(cross_attention(query_states, event_states, params, f"{prefix}.ca_query", heads),
                       params, f"{prefix}.trm_query")
    e_side = ffn_block(cross_attention(event_states, query_states, params, f"{prefix}.ca_event", heads),
                       params, f"{prefix}.trm_event")
    vec = mlp(torch.cat([q_side, e_side], dim=-1), params, f"{prefix}.mlp")
    tag = FALLBACK if fallback else WITH_EVENT
    return FusedQueryEmbedding(vec, [tag] * vec.shape[0])


def cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Row-wise cosine similarity; raises on any zero-norm row."""
    na = a.norm(dim=-1)
    nb = b.norm(dim=-1)
    if bool((na == 0).any()) or bool((nb == 0).any()):
        raise ValueError("zero-norm embedding")
    return (a * b).sum(-1) / (na * nb)


def score(q: FusedQueryEmbedding | torch.Tensor, d: torch.Tensor) -> torch.Tensor | float:
    qv = q.vector if isinstance(q, FusedQueryEmbedding) else torch.as_tensor(q)
    dv = torch.as_tensor(d)
    if qv.shape[-1] != dv.shape[-1]:
        raise ValueError("dimension mismatch")
    s = cosine(qv, dv).clamp(-1.0, 1.0)  # rounding can push |cos| a hair past 1
    return float(s) if s.dim() == 0 else s
