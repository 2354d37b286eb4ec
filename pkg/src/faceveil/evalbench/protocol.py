"""Evaluation protocol and the gallery/probe split."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import SplitError
from .dataset import DatasetImage, FaceDataset


@dataclass(frozen=True)
class EvalProtocol:
    probe_fraction: float = 0.1
    protected_identity_count: int = 100
    rank_ks: tuple[int, ...] = (1, 50)
    seed: int = 0
    max_gallery_per_protected: int | None = None  # gallery-size experiments
    probe_downscale: float | None = None  # low-resolution probe experiments

    def __post_init__(self):
        if not 0.0 < self.probe_fraction < 1.0:
            raise ValueError("probe_fraction must be in (0, 1)")
        if self.protected_identity_count < 0:
            raise ValueError("protected_identity_count must be >= 0")
        if not self.rank_ks or any(k < 1 for k in self.rank_ks):
            raise ValueError("rank_ks must be nonempty positive integers")
        if self.probe_downscale is not None and not 0.0 < self.probe_downscale <= 1.0:
            raise ValueError("probe_downscale must be in (0, 1]")

    def to_dict(self) -> dict:
        return {"probe_fraction": self.probe_fraction,
                "protected_identity_count": self.protected_identity_count,
                "rank_ks": list(self.rank_ks), "seed": self.seed,
                "max_gallery_per_protected": self.max_gallery_per_protected,
                "probe_downscale": self.probe_downscale}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalProtocol":
        d = dict(d)
        if "rank_ks" in d:
            d["rank_ks"] = tuple(d["rank_ks"])
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "EvalProtocol":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Split:
    gallery: tuple[DatasetImage, ...]
    probes: tuple[DatasetImage, ...]
    protected_identities: frozenset[str]


def split_gallery_probe(dataset: FaceDataset, protocol: EvalProtocol) -> Split:
    """Per identity, ceil(fraction * count) probe images; the rest go to the
    gallery. Distractors are all gallery. Protected identities are a seeded
    sample of the known identities. Deterministic given the seed."""
    rng = np.random.default_rng(protocol.seed)
    gallery: list[DatasetImage] = []
    probes: list[DatasetImage] = []
    for identity in dataset.identities():
        rows = sorted(dataset.by_identity(identity), key=lambda im: im.image_id)
        if len(rows) < 2:
            raise SplitError(f"identity {identity!r} has {len(rows)} image(s); need >= 2",
                             identity=identity)
        n_probe = math.ceil(protocol.probe_fraction * len(rows))
        if n_probe >= len(rows):
            raise SplitError(f"identity {identity!r} would have no gallery images",
                             identity=identity)
        picks = set(rng.choice(len(rows), size=n_probe, replace=False).tolist())
        for i, row in enumerate(rows):
            (probes if i in picks else gallery).append(row)
    gallery.extend(sorted(dataset.distractors(), key=lambda im: im.image_id))

    identities = dataset.identities()
    n_protect = min(protocol.protected_identity_count, len(identities))
    protected = frozenset(rng.choice(identities, size=n_protect, replace=False).tolist()) \
        if n_protect else frozenset()

    if protocol.max_gallery_per_protected is not None:
        cap = protocol.max_gallery_per_protected
        kept: list[DatasetImage] = []
        seen: dict[str, int] = {}
        for row in gallery:
            if row.identity in protected:
                seen[row.identity] = seen.get(row.identity, 0) + 1
                if seen[row.identity] > cap:
                    continue
            kept.append(row)
        gallery = kept

    return Split(gallery=tuple(gallery), probes=tuple(probes),
                 protected_identities=protected)
