"""Labeled face datasets: ingestion, near-duplicate filtering, descriptors.

A dataset is a list of (image id, identity, path) rows plus provenance
metadata. Distractor rows carry the reserved identity label, which can
never count as an identification success. Near-duplicates are filtered at
ingestion with a perceptual hash over a small DCT.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from ..imaging import ImageTensor, load_image, save_png

DISTRACTOR_LABEL = "unknown"
DEFAULT_PHASH_THRESHOLD = 4


def perceptual_hash(img: ImageTensor) -> int:
    """64-bit DCT hash: resize to 32x32 grayscale, keep the low 8x8
    spectrum minus DC, threshold at the median."""
    gray = img.pixels.mean(axis=2)
    h, w = gray.shape
    ys = (np.arange(32) * (h / 32)).astype(int)
    xs = (np.arange(32) * (w / 32)).astype(int)
    small = gray[np.ix_(ys, xs)]
    spectrum = sfft.dctn(small, norm="ortho")[:8, :8].flatten()[1:]
    bits = spectrum > np.median(spectrum)
    return int(np.packbits(bits.astype(np.uint8)).view(">u8")[0] >> 1)


def hash_distance(a: int, b: int) -> int:
    return bin(a ^ b).count("1")


@dataclass(frozen=True)
class DatasetImage:
    image_id: str
    identity: str
    path: str

    @property
    def is_distractor(self) -> bool:
        return self.identity == DISTRACTOR_LABEL


@dataclass
class FaceDataset:
    name: str
    images: list[DatasetImage]
    split_seed: int = 0
    duplicate_filter_threshold: int = DEFAULT_PHASH_THRESHOLD
    _cache: dict = field(default_factory=dict, repr=False)

    def identities(self) -> list[str]:
        """Known identities (distractors excluded), sorted."""
        return sorted({im.identity for im in self.images if not im.is_distractor})

    def by_identity(self, identity: str) -> list[DatasetImage]:
        return [im for im in self.images if im.identity == identity]

    def distractors(self) -> list[DatasetImage]:
        return [im for im in self.images if im.is_distractor]

    def load(self, image_id: str) -> ImageTensor:
        if image_id not in self._cache:
            row = next(im for im in self.images if im.image_id == image_id)
            self._cache[image_id] = load_image(row.path)
        return self._cache[image_id]

    def descriptor(self) -> dict:
        ids: dict[str, list[str]] = {}
        for im in self.images:
            ids.setdefault(im.identity, []).append(im.path)
        return {"name": self.name,
                "split_seed": self.split_seed,
                "duplicate_filter_threshold": self.duplicate_filter_threshold,
                "identities": ids}

    def save_descriptor(self, path) -> None:
        Path(path).write_text(json.dumps(self.descriptor(), indent=2, sort_keys=True))

    @classmethod
    def from_descriptor(cls, path) -> "FaceDataset":
        d = json.loads(Path(path).read_text())
        images = []
        for identity, paths in sorted(d["identities"].items()):
            for p in paths:
                images.append(DatasetImage(image_id=Path(p).stem, identity=identity, path=p))
        return cls(name=d["name"], images=images,
                   split_seed=int(d.get("split_seed", 0)),
                   duplicate_filter_threshold=int(d.get("duplicate_filter_threshold",
                                                        DEFAULT_PHASH_THRESHOLD)))


def ingest_directory(root, name: str | None = None,
                     duplicate_filter_threshold: int = DEFAULT_PHASH_THRESHOLD,
                     split_seed: int = 0) -> FaceDataset:
    """Build a dataset from ``root/<identity>/*.png|jpg``, dropping
    near-duplicate images within each identity."""
    root = Path(root)
    images: list[DatasetImage] = []
    for ident_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        kept_hashes: list[int] = []
        for img_path in sorted(ident_dir.glob("*")):
            if img_path.suffix.lower() not in (".png", ".jpg", ".jpeg"):
                continue
            h = perceptual_hash(load_image(img_path))
            if any(hash_distance(h, k) <= duplicate_filter_threshold for k in kept_hashes):
                continue
            kept_hashes.append(h)
            images.append(DatasetImage(image_id=img_path.stem,
                                       identity=ident_dir.name,
                                       path=str(img_path)))
    return FaceDataset(name=name or root.name, images=images,
                       split_seed=split_seed,
                       duplicate_filter_threshold=duplicate_filter_threshold)


def write_corpus(corpus, root, name: str = "synthetic") -> FaceDataset:
    """Save generated corpus images as PNGs in the directory layout
    ``ingest_directory`` expects, then build the dataset over them."""
    root = Path(root)
    for ci in corpus:
        d = root / ci.identity
        d.mkdir(parents=True, exist_ok=True)
        save_png(ci.image, d / f"{ci.image_id}.png")
    return ingest_directory(root, name=name)
