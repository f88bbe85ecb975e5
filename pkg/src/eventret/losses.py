"""Triplet, unsupervised contrastive and combined objectives."""

from __future__ import annotations

import torch

from .fusion import cosine


def triplet_loss(pos_scores: torch.Tensor, neg_scores: torch.Tensor, margin: float) -> torch.Tensor:
    """Hinge ``max(0, margin - f(q,e,d+) + f(q,e,d-))`` summed, then divided by batch size.

    The same formula serves both the query-centric and the event-centric
    task; only the data feeding it differs.
    """
    if pos_scores.numel() == 0:
        raise ValueError("empty batch")
    if pos_scores.shape != neg_scores.shape:
        raise ValueError("positive and negative scores differ in shape")
    if margin <= 0:
        raise ValueError("margin must be > 0")
    return torch.clamp(margin - pos_scores + neg_scores, min=0.0).sum() / pos_scores.numel()


def contrastive_loss(h: torch.Tensor, h_pos: torch.Tensor, tau: float) -> torch.Tensor:
    """Batch mean of ``-log softmax_j(sim(h_i, h_j+) / tau)[i]`` with cosine ``sim``.

    ``h`` and ``h_pos`` are two dropout views of the same N documents.
    """
    n = h.shape[0]
    if n < 2:
        raise ValueError("contrastive batch too small")
    if h_pos.shape != h.shape:
        raise ValueError("views differ in shape")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    sims = cosine(h[:, None, :], h_pos[None, :, :]) / tau
    return (torch.logsumexp(sims, dim=1) - sims.diagonal()).mean()


def total_loss(task_loss: torch.Tensor | float, cl_loss: torch.Tensor | float, lam: float):
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return task_loss + lam * cl_loss
