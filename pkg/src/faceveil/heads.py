"""Margin-based classification heads and focal loss.

Both heads operate on cosine similarity between the embedding and per-class
weight directions. The angular head replaces the target-class logit with
cos(theta_t + m); the cosine head subtracts the margin, cos(theta_t) - m.
Either way every logit is scaled by ``scale`` before the loss.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DegenerateEmbedding

HEAD_KINDS = ("arcface", "cosface")
DEFAULT_MARGIN = {"arcface": 0.5, "cosface": 0.35}
DEFAULT_SCALE = {"arcface": 64.0, "cosface": 64.0}

_EPS = 1e-7


def margin_logits(embedding, class_weights: np.ndarray, target: int,
                  head: str, margin: float, scale: float) -> np.ndarray:
    """Margin-adjusted cosine logits for a single embedding (a plain array
    or anything with a ``.values`` array, such as a FeatureVector).

    ``class_weights`` is (C, d); the margin touches only the target class.
    """
    if head not in HEAD_KINDS:
        raise ValueError(f"head must be one of {HEAD_KINDS}, got {head!r}")
    e = np.asarray(getattr(embedding, "values", embedding), dtype=np.float64)
    w = np.asarray(class_weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != e.shape[0]:
        raise ValueError(f"class_weights shape {w.shape} incompatible with embedding {e.shape}")
    if not 0 <= target < w.shape[0]:
        raise ValueError(f"target {target} outside [0, {w.shape[0]})")
    en = np.linalg.norm(e)
    wn = np.linalg.norm(w, axis=1)
    if en < 1e-12:
        raise DegenerateEmbedding("zero-norm embedding")
    if (wn < 1e-12).any():
        raise DegenerateEmbedding("zero-norm class weight row")
    cos = np.clip((w @ e) / (wn * en), -1.0 + _EPS, 1.0 - _EPS)
    out = cos.copy()
    if head == "arcface":
        out[target] = math.cos(math.acos(cos[target]) + margin)
    else:
        out[target] = cos[target] - margin
    return scale * out


def focal_loss(logits: np.ndarray, target: int, gamma: float) -> float:
    """-(1 - p_t)^gamma * log(p_t) with p_t the softmax probability of the
    target class. gamma = 0 reduces to cross-entropy."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] < 2:
        raise ValueError("logits must be a vector over >= 2 classes")
    if not 0 <= target < z.shape[0]:
        raise ValueError(f"target {target} outside [0, {z.shape[0]})")
    z = z - z.max()
    log_p = z - np.log(np.exp(z).sum())
    p_t = np.exp(log_p[target])
    return float(-((1.0 - p_t) ** gamma) * log_p[target])


class MarginHead(nn.Module):
    """Batch margin head used during training."""

    def __init__(self, embed_dim: int, n_classes: int, kind: str,
                 margin: float | None = None, scale: float | None = None):
        super().__init__()
        if kind not in HEAD_KINDS:
            raise ValueError(f"head must be one of {HEAD_KINDS}, got {kind!r}")
        self.kind = kind
        self.margin = DEFAULT_MARGIN[kind] if margin is None else float(margin)
        self.scale = DEFAULT_SCALE[kind] if scale is None else float(scale)
        self.weight = nn.Parameter(torch.empty(n_classes, embed_dim))
        nn.init.xavier_uniform_(self.weight)

    def forward(self, embeddings: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        cos = F.linear(F.normalize(embeddings, dim=1), F.normalize(self.weight, dim=1))
        cos = cos.clamp(-1.0 + _EPS, 1.0 - _EPS)
        target_cos = cos.gather(1, labels.view(-1, 1)).squeeze(1)
        if self.kind == "arcface":
            adjusted = torch.cos(torch.acos(target_cos) + self.margin)
        else:
            adjusted = target_cos - self.margin
        out = cos.scatter(1, labels.view(-1, 1), adjusted.view(-1, 1))
        return self.scale * out


class FocalLoss(nn.Module):
    def __init__(self, gamma: float = 2.0):
        super().__init__()
        self.gamma = float(gamma)

    def forward(self, logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        log_p = F.log_softmax(logits, dim=1)
        log_pt = log_p.gather(1, labels.view(-1, 1)).squeeze(1)
        pt = log_pt.exp()
        return (-((1.0 - pt) ** self.gamma) * log_pt).mean()
