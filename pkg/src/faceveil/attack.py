"""Signed gradient ascent that pushes face embeddings away from their
originals while a perceptual penalty holds distortion down.

The objective, for original x and candidate x', averages over ensemble
members (and detected faces) the squared feature displacement of both the
raw and the smoothed candidate, each normalized by the clean feature norm,
minus a weighted perceptual distance:

    (1/2n) * sum_i [ ||f_i(A(x)) - f_i(A(x'))||^2
                   + ||f_i(A(x)) - f_i(A(G(x')))||^2 ] / ||f_i(A(x))||_2
    - alpha * perceptual(x, x')

Detection runs once on x; every A is the frozen bilinear warp from that
single detection pass. Ascent updates are x' <- clip(x' + step * sign(g)).
"""

from __future__ import annotations

import hashlib
import json
import platform
import statistics
import time
from dataclasses import dataclass, replace

import numpy as np
import torch

from .alignment import AlignmentTransform, WarpGrid, build_alignment
from .detection import BlobFaceDetector, FaceDetector, detect_faces
from .errors import (
    ConfigError,
    DegenerateFeatures,
    NoFaceFound,
    NumericalFailure,
    ShapeMismatch,
)
from .imaging import ImageTensor, SmoothingKernel, smooth_chw
from .perceptual import PerceptualMetric, default_metric
from .registry import FeatureExtractor

PRESET_NAMES = ("small", "standard", "large")
ATTACK_CONFIDENCE = 0.9  # faces below this are left alone


@dataclass(frozen=True)
class AttackConfig:
    """Attack hyperparameters; ``preset`` records where they came from."""

    alpha: float = 0.05
    steps: int = 50
    step_size: float = 0.0025
    smoothing_sigma: float = 3.0
    smoothing_window: int = 7
    init_noise: float = 1.0 / 255.0
    preset: str = "standard"

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.step_size <= 0:
            raise ConfigError("step_size must be > 0")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.init_noise < 0:
            raise ConfigError("init_noise must be >= 0")
        self.kernel  # validates smoothing parameters

    @property
    def kernel(self) -> SmoothingKernel:
        if self.smoothing_window == 1:
            return SmoothingKernel.identity()
        return SmoothingKernel.gaussian(self.smoothing_sigma, self.smoothing_window)

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "AttackConfig":
        if name == "standard":
            cfg = cls(preset="standard")
        elif name == "small":
            # gentler look: heavier perceptual penalty
            cfg = cls(alpha=0.08, preset="small")
        elif name == "large":
            # stronger magnitude, expressed through the step count
            cfg = cls(steps=100, preset="large")
        else:
            raise ConfigError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
        if overrides:
            cfg = replace(cfg, preset="custom", **overrides)
        return cfg

    def without_smoothing_term(self) -> "AttackConfig":
        """Identity kernel makes the smoothed branch coincide with the raw
        branch, which is exactly the no-smoothing ablation."""
        return replace(self, smoothing_window=1, preset="custom")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "steps": self.steps, "step_size": self.step_size,
                "smoothing_sigma": self.smoothing_sigma,
                "smoothing_window": self.smoothing_window,
                "init_noise": self.init_noise, "preset": self.preset}

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        return cls(**d)

    def save(self, path) -> None:
        from pathlib import Path
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "AttackConfig":
        from pathlib import Path
        return cls.from_dict(json.loads(Path(path).read_text()))

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class ProtectionResult:
    protected: ImageTensor
    per_model_displacement: dict[str, float]
    lpips_cost: float
    objective_trace: list[float]
    config: AttackConfig
    faces_attacked: int

    def __post_init__(self):
        if len(self.objective_trace) != self.config.steps + 1:
            raise ValueError("objective trace must have steps + 1 entries")


def signed_step(x_prime: np.ndarray | ImageTensor, grad: np.ndarray,
                step_size: float) -> ImageTensor:
    """x' <- clip(x' + step_size * sign(grad)); sign(0) contributes nothing."""
    arr = x_prime.pixels if isinstance(x_prime, ImageTensor) else np.asarray(x_prime)
    g = np.asarray(grad)
    if g.shape != arr.shape:
        raise ShapeMismatch(f"grad shape {g.shape} != image shape {arr.shape}")
    stepped = arr + step_size * np.sign(g)
    return ImageTensor(np.clip(stepped, 0.0, 1.0).astype(np.float32))


class ObjectiveGraph:
    """Precomputed state for one attack run: frozen warps, clean features
    and their norms, the smoothing kernel, and the perceptual metric."""

    def __init__(self, x: ImageTensor, models: list[FeatureExtractor],
                 transforms: list[AlignmentTransform], cfg: AttackConfig,
                 metric: PerceptualMetric | None = None,
                 dtype: torch.dtype = torch.float32):
        if not models:
            raise ValueError("ensemble must be nonempty")
        if not transforms:
            raise NoFaceFound("no face transforms supplied")
        self.cfg = cfg
        self.dtype = dtype
        self.models = [m if m.dtype == dtype else m.to_dtype(dtype) for m in models]
        self.metric = metric if metric is not None else default_metric(dtype)
        self.kernel = cfg.kernel
        self.x_t = x.to_chw(dtype)
        self.grids = [WarpGrid(t, (x.height, x.width)) for t in transforms]
        with torch.no_grad():
            self.clean = []
            self.norms = []
            for m in self.models:
                feats, norms = [], []
                for grid in self.grids:
                    f = m.features_chw(grid.apply(self.x_t))
                    n = torch.linalg.vector_norm(f)
                    if float(n) < 1e-9:
                        raise DegenerateFeatures(
                            f"{m.model_id} has zero-norm clean features")
                    feats.append(f)
                    norms.append(n)
                self.clean.append(feats)
                self.norms.append(norms)

    def feature_term(self, xp_t: torch.Tensor) -> torch.Tensor:
        n_models = len(self.models)
        n_faces = len(self.grids)
        smoothed = None if self.kernel.is_identity else smooth_chw(xp_t, self.kernel)
        total = None
        for j, grid in enumerate(self.grids):
            crop = grid.apply(xp_t)
            crop_s = grid.apply(smoothed) if smoothed is not None else None
            for i, m in enumerate(self.models):
                f = m.features_chw(crop)
                raw = ((self.clean[i][j] - f) ** 2).sum()
                if crop_s is None:
                    num = 2.0 * raw
                else:
                    fs = m.features_chw(crop_s)
                    num = raw + ((self.clean[i][j] - fs) ** 2).sum()
                term = num / self.norms[i][j]
                total = term if total is None else total + term
        return total / (2.0 * n_models * n_faces)

    def objective(self, xp_t: torch.Tensor) -> torch.Tensor:
        value = self.feature_term(xp_t)
        if self.cfg.alpha != 0.0:
            value = value - self.cfg.alpha * self.metric.distance_chw(self.x_t, xp_t)
        return value

    def displacements(self, xp_t: torch.Tensor) -> dict[str, float]:
        """Relative feature displacement per model, averaged over faces,
        measured on the raw (non-smoothed) candidate."""
        out = {}
        with torch.no_grad():
            for i, m in enumerate(self.models):
                vals = []
                for j, grid in enumerate(self.grids):
                    f = m.features_chw(grid.apply(xp_t))
                    d = torch.linalg.vector_norm(self.clean[i][j] - f)
                    vals.append(float(d / self.norms[i][j]))
                out[m.model_id] = float(np.mean(vals))
        return out


def protection_objective(x: ImageTensor, x_prime: ImageTensor,
                         ensemble: list[FeatureExtractor],
                         transforms: list[AlignmentTransform],
                         cfg: AttackConfig,
                         metric: PerceptualMetric | None = None,
                         dtype: torch.dtype = torch.float64) -> float:
    """Objective value for a candidate image (no gradient)."""
    if x.shape != x_prime.shape:
        raise ShapeMismatch(f"shapes differ: {x.shape} vs {x_prime.shape}")
    graph = ObjectiveGraph(x, ensemble, transforms, cfg, metric=metric, dtype=dtype)
    with torch.no_grad():
        return float(graph.objective(x_prime.to_chw(dtype)).item())


def frozen_transforms(image: ImageTensor, detector: FaceDetector,
                      min_confidence: float = ATTACK_CONFIDENCE,
                      ) -> list[AlignmentTransform]:
    """The detect-once step: transforms for every sufficiently confident
    face, frozen for the whole attack."""
    dets = [d for d in detect_faces(image, detector) if d.confidence >= min_confidence]
    if not dets:
        raise NoFaceFound(f"no face with confidence >= {min_confidence}")
    return [build_alignment(d) for d in dets]


def protect(image: ImageTensor, ensemble: list[FeatureExtractor],
            cfg: AttackConfig,
            detector: FaceDetector | None = None,
            seed: int = 0,
            metric: PerceptualMetric | None = None,
            dtype: torch.dtype = torch.float32,
            min_confidence: float = ATTACK_CONFIDENCE) -> ProtectionResult:
    """Run the full attack on one image and return the protected image
    plus diagnostics. Deterministic for a fixed seed."""
    detector = detector if detector is not None else BlobFaceDetector()
    transforms = frozen_transforms(image, detector, min_confidence)
    graph = ObjectiveGraph(image, ensemble, transforms, cfg, metric=metric, dtype=dtype)

    rng = np.random.default_rng(seed)
    start = image.pixels.astype(np.float64)
    if cfg.init_noise > 0:
        start = start + rng.uniform(-cfg.init_noise, cfg.init_noise, size=start.shape)
    start = np.clip(start, 0.0, 1.0)

    xp = torch.from_numpy(start.transpose(2, 0, 1)).to(dtype).requires_grad_(True)
    trace: list[float] = []
    for _ in range(cfg.steps):
        obj = graph.objective(xp)
        value = float(obj.item())
        if not np.isfinite(value):
            raise NumericalFailure("objective became non-finite", trace=trace)
        trace.append(value)
        obj.backward()
        with torch.no_grad():
            xp += cfg.step_size * torch.sign(xp.grad)
            xp.clamp_(0.0, 1.0)
        xp.grad.zero_()

    with torch.no_grad():
        final = float(graph.objective(xp).item())
    if not np.isfinite(final):
        raise NumericalFailure("objective became non-finite", trace=trace)
    trace.append(final)

    protected = ImageTensor.from_chw(xp.detach())
    displacement = graph.displacements(xp.detach())
    with torch.no_grad():
        cost = float(graph.metric.distance_chw(graph.x_t, xp.detach()).item())
    return ProtectionResult(protected=protected,
                            per_model_displacement=displacement,
                            lpips_cost=cost,
                            objective_trace=trace,
                            config=cfg,
                            faces_attacked=len(transforms))


@dataclass(frozen=True)
class RuntimeReport:
    seconds_per_image: list[float]
    mean_seconds: float
    median_seconds: float
    hardware: str
    steps: int
    n_images: int

    def to_dict(self) -> dict:
        return {"seconds_per_image": self.seconds_per_image,
                "mean_seconds": self.mean_seconds,
                "median_seconds": self.median_seconds,
                "hardware": self.hardware, "steps": self.steps,
                "n_images": self.n_images}


def hardware_descriptor() -> str:
    return (f"{platform.platform()} | {platform.processor() or platform.machine()}"
            f" | torch {torch.__version__} ({torch.get_num_threads()} threads)")


def benchmark_runtime(images: list[ImageTensor], ensemble: list[FeatureExtractor],
                      cfg: AttackConfig, **protect_kwargs) -> RuntimeReport:
    """Seconds-per-image statistics; images are processed one at a time,
    never batched."""
    if not images:
        raise ValueError("need at least one image")
    times = []
    for img in images:
        t0 = time.perf_counter()
        protect(img, ensemble, cfg, **protect_kwargs)
        times.append(time.perf_counter() - t0)
    return RuntimeReport(seconds_per_image=times,
                         mean_seconds=statistics.fmean(times),
                         median_seconds=statistics.median(times),
                         hardware=hardware_descriptor(),
                         steps=cfg.steps,
                         n_images=len(images))
