"""Perceptual distance: weighted squared differences between
channel-normalized deep features of a frozen convolutional stack.

The distortion penalty of the attack objective. Features come from a fixed
feature network whose weights are generated from a recorded seed, so the
metric is reproducible across runs and platforms; the per-layer linear
weights are nonnegative, making the distance nonnegative and exactly zero
on identical inputs. Evaluation is fully convolutional with spatial
averaging, so inputs of any size (min 16x16) are accepted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeMismatch
from .imaging import ImageTensor

_CHANNELS = (8, 16, 32, 48, 64)
_DEFAULT_SEED = 0
_MIN_SIDE = 16


@dataclass(frozen=True)
class PerceptualMetricSpec:
    """Identity of the frozen feature network plus per-layer tap weights."""

    feature_network_id: str = f"convfeat5-seed{_DEFAULT_SEED}"
    layer_set: tuple[int, ...] = (0, 1, 2, 3, 4)
    layer_weights: tuple = ()

    def __post_init__(self):
        if not self.layer_set:
            raise ValueError("layer_set must be nonempty")
        if any(i < 0 or i >= len(_CHANNELS) for i in self.layer_set):
            raise ValueError(f"layer indices must be within 0..{len(_CHANNELS) - 1}")
        weights = self.layer_weights
        if not weights:
            weights = tuple(_default_layer_weights(self.seed, i) for i in self.layer_set)
        weights = tuple(np.asarray(w, dtype=np.float64) for w in weights)
        if len(weights) != len(self.layer_set):
            raise ValueError("one weight array per tapped layer required")
        for i, w in zip(self.layer_set, weights):
            if w.shape != (_CHANNELS[i],):
                raise ValueError(f"layer {i} weights must have shape ({_CHANNELS[i]},)")
            if (w < 0).any():
                raise ValueError("layer weights must be nonnegative")
        for w in weights:
            w.setflags(write=False)
        object.__setattr__(self, "layer_weights", weights)

    @property
    def seed(self) -> int:
        return int(self.feature_network_id.rsplit("seed", 1)[-1])


def _default_layer_weights(seed: int, layer: int) -> np.ndarray:
    rs = np.random.RandomState(seed * 1000 + 77 + layer)
    w = np.abs(rs.standard_normal(_CHANNELS[layer]))
    return w / w.sum()


class _FeatureStack(nn.Module):
    """Five conv-relu blocks, stride 2 after the first; weights are drawn
    from a seeded generator and frozen."""

    def __init__(self, seed: int):
        super().__init__()
        rs = np.random.RandomState(seed * 1000 + 13)
        layers = []
        cin = 3
        for i, cout in enumerate(_CHANNELS):
            conv = nn.Conv2d(cin, cout, 3, stride=1 if i == 0 else 2, padding=1)
            fan_in = cin * 9
            w = rs.standard_normal((cout, cin, 3, 3)) * np.sqrt(2.0 / fan_in)
            b = rs.standard_normal(cout) * 0.05
            with torch.no_grad():
                conv.weight.copy_(torch.from_numpy(w))
                conv.bias.copy_(torch.from_numpy(b))
            layers.append(conv)
            cin = cout
        self.convs = nn.ModuleList(layers)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        taps = []
        out = x
        for conv in self.convs:
            out = F.relu(conv(out))
            taps.append(out)
        return taps


def _unit_normalize(feat: torch.Tensor, eps: float = 1e-10) -> torch.Tensor:
    norm = torch.sqrt((feat ** 2).sum(dim=0, keepdim=True))
    return feat / (norm + eps)


class PerceptualMetric:
    """Callable distance; differentiable through ``distance_chw``."""

    def __init__(self, spec: PerceptualMetricSpec | None = None,
                 dtype: torch.dtype = torch.float32):
        self.spec = spec or PerceptualMetricSpec()
        self.net = _FeatureStack(self.spec.seed).to(dtype).eval()
        self.dtype = dtype
        self._weights = [torch.from_numpy(np.array(w)).to(dtype)
                         for w in self.spec.layer_weights]

    def distance_chw(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        """Distance between two (3, H, W) tensors; keeps gradients to both."""
        if x.shape != y.shape:
            raise ShapeMismatch(f"shapes differ: {tuple(x.shape)} vs {tuple(y.shape)}")
        if x.shape[1] < _MIN_SIDE or x.shape[2] < _MIN_SIDE:
            raise ValueError(f"inputs must be at least {_MIN_SIDE}x{_MIN_SIDE}")
        fx = self.net((x.unsqueeze(0) - 0.5) / 0.5)
        fy = self.net((y.unsqueeze(0) - 0.5) / 0.5)
        total = None
        for tap, w in zip(self.spec.layer_set, self._weights):
            dx = _unit_normalize(fx[tap][0]) - _unit_normalize(fy[tap][0])
            layer = (w[:, None, None] * dx ** 2).sum(dim=0).mean()
            total = layer if total is None else total + layer
        return total

    def __call__(self, x: ImageTensor, y: ImageTensor) -> float:
        if x.shape != y.shape:
            raise ShapeMismatch(f"shapes differ: {x.shape} vs {y.shape}")
        with torch.no_grad():
            d = self.distance_chw(x.to_chw(self.dtype), y.to_chw(self.dtype))
        return float(d.item())


_default_metric: dict[torch.dtype, PerceptualMetric] = {}


def default_metric(dtype: torch.dtype = torch.float32) -> PerceptualMetric:
    """Shared frozen metric instance (read-only, safe to share)."""
    if dtype not in _default_metric:
        _default_metric[dtype] = PerceptualMetric(dtype=dtype)
    return _default_metric[dtype]


def lpips(x: ImageTensor, y: ImageTensor,
          spec: PerceptualMetricSpec | None = None,
          dtype: torch.dtype = torch.float32) -> float:
    """Perceptual distance between two same-shaped images."""
    if spec is None:
        return default_metric(dtype)(x, y)
    return PerceptualMetric(spec, dtype=dtype)(x, y)
