"""Extractor specs, loaded extractors, and ensembles.

A spec names a backbone/head combination and where its weights live; a
loaded extractor wraps the torch module in inference mode. Embeddings are
returned raw (not length-normalized): the attack objective divides by the
clean feature norm, which must carry information.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .alignment import AlignedFace
from .backbones import BACKBONES, build_backbone
from .errors import ModelContractViolation
from .heads import HEAD_KINDS

DEFAULT_EMBED_DIM = 512


@dataclass(frozen=True)
class FeatureVector:
    """Raw embedding from one extractor."""

    values: np.ndarray
    model_id: str

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.dtype != np.float64:
            v = v.astype(np.float32)
        if v.ndim != 1:
            raise ValueError(f"expected 1-D vector, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("feature vector has non-finite entries")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class ExtractorSpec:
    """Recipe for one feature extractor."""

    backbone: str
    head: str
    weights_uri: str = ""
    embed_dim: int = DEFAULT_EMBED_DIM

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if self.head not in HEAD_KINDS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")

    @property
    def model_id(self) -> str:
        if self.weights_uri:
            return Path(self.weights_uri).stem
        return f"{self.backbone}-{self.head}"

    def to_dict(self) -> dict:
        return {"backbone": self.backbone, "head": self.head,
                "weights_uri": self.weights_uri, "embed_dim": self.embed_dim}

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractorSpec":
        return cls(backbone=d["backbone"], head=d["head"],
                   weights_uri=d.get("weights_uri", ""),
                   embed_dim=int(d.get("embed_dim", DEFAULT_EMBED_DIM)))


@dataclass(frozen=True)
class Ensemble:
    """An ordered set of extractor specs with unique model ids."""

    members: tuple[ExtractorSpec, ...]

    def __post_init__(self):
        members = tuple(self.members)
        if len(members) < 1:
            raise ValueError("ensemble needs at least one member")
        ids = [m.model_id for m in members]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate model ids in ensemble: {ids}")
        object.__setattr__(self, "members", members)

    def __len__(self) -> int:
        return len(self.members)

    @classmethod
    def default(cls) -> "Ensemble":
        """The four-extractor attack ensemble: deep residual backbones of
        both families crossed with both margin heads."""
        return cls(members=(
            ExtractorSpec("ir152", "arcface"),
            ExtractorSpec("ir152", "cosface"),
            ExtractorSpec("rn152", "arcface"),
            ExtractorSpec("rn152", "cosface"),
        ))

    def to_json(self) -> str:
        return json.dumps([m.to_dict() for m in self.members], indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Ensemble":
        return cls(members=tuple(ExtractorSpec.from_dict(d) for d in json.loads(text)))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Ensemble":
        return cls.from_json(Path(path).read_text())


class FeatureExtractor:
    """A spec plus its loaded torch module, frozen for inference.

    ``features_chw`` keeps the autograd path to the input alive (parameters
    stay frozen), which is what the attack differentiates through.
    """

    def __init__(self, spec: ExtractorSpec, module: torch.nn.Module):
        self.spec = spec
        self.module = module.eval()
        for p in self.module.parameters():
            p.requires_grad_(False)
        self._dtype = next(module.parameters()).dtype

    @property
    def model_id(self) -> str:
        return self.spec.model_id

    @property
    def dtype(self) -> torch.dtype:
        return self._dtype

    def features_chw(self, crop: torch.Tensor) -> torch.Tensor:
        """Embed a (3, 112, 112) crop or an (N, 3, 112, 112) batch."""
        single = crop.dim() == 3
        if single:
            crop = crop.unsqueeze(0)
        out = self.module(crop)
        if out.shape[-1] != self.spec.embed_dim:
            raise ModelContractViolation(
                f"{self.model_id} produced dimension {out.shape[-1]}, "
                f"declared {self.spec.embed_dim}")
        return out.squeeze(0) if single else out

    def extract(self, face: AlignedFace) -> FeatureVector:
        with torch.no_grad():
            out = self.features_chw(face.crop.to_chw(self._dtype))
        values = out.detach().cpu().numpy()
        if not np.isfinite(values).all():
            raise ModelContractViolation(f"{self.model_id} produced non-finite features")
        return FeatureVector(values=values, model_id=self.model_id)

    def to_dtype(self, dtype: torch.dtype) -> "FeatureExtractor":
        """A converted copy; the original stays untouched."""
        return FeatureExtractor(self.spec, copy.deepcopy(self.module).to(dtype))


def new_extractor(spec: ExtractorSpec, seed: int | None = None) -> FeatureExtractor:
    """Freshly initialized (untrained) extractor."""
    if seed is not None:
        torch.manual_seed(seed)
    return FeatureExtractor(spec, build_backbone(spec.backbone, spec.embed_dim))


def save_extractor(extractor: FeatureExtractor, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save({"spec": extractor.spec.to_dict(),
                "state": extractor.module.state_dict()}, path)


def load_extractor(spec: ExtractorSpec) -> FeatureExtractor:
    """Build the backbone and load weights from ``spec.weights_uri``."""
    if not spec.weights_uri:
        raise ValueError(f"spec {spec.model_id} has no weights_uri")
    payload = torch.load(spec.weights_uri, map_location="cpu", weights_only=False)
    module = build_backbone(spec.backbone, spec.embed_dim)
    module.load_state_dict(payload["state"])
    return FeatureExtractor(spec, module)


def load_ensemble(ensemble: Ensemble) -> list[FeatureExtractor]:
    return [load_extractor(spec) for spec in ensemble.members]
