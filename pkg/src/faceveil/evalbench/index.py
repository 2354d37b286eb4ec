"""Gallery index and rank-k nearest-neighbor queries."""

from __future__ import annotations

from dataclasses import dataclass


import numpy as np

from ..detection import FaceDetector, align_top_face
from ..errors import EmptyGallery
from ..imaging import ImageTensor, SmoothingKernel, gaussian_smooth
from ..registry import FeatureExtractor, FeatureVector
from ..store import load_feature_store, save_feature_store
from .dataset import DISTRACTOR_LABEL

METRICS = ("l2", "cosine")


@dataclass(frozen=True)
class GalleryIndex:
    """Dense feature matrix plus labels; brute-force exact queries."""

    vectors: np.ndarray  # (n, d) float32
    labels: tuple[str, ...]
    image_ids: tuple[str, ...]
    model_id: str
    metric: str = "l2"

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError("vectors must be (n, d)")
        if not (len(self.labels) == len(self.image_ids) == v.shape[0]):
            raise ValueError("labels/image_ids/vectors lengths differ")
        if len(set(self.image_ids)) != len(self.image_ids):
            raise ValueError("image ids must be unique")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "image_ids", tuple(self.image_ids))

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def distances(self, probe: np.ndarray) -> np.ndarray:
        p = np.asarray(probe, dtype=np.float64)
        v = self.vectors.astype(np.float64)
        if self.metric == "l2":
            return np.linalg.norm(v - p[None, :], axis=1)
        a = v / np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-12)
        b = p / max(np.linalg.norm(p), 1e-12)
        return 1.0 - a @ b

    def save(self, path) -> None:
        save_feature_store(path, self.model_id, self.vectors,
                           list(zip(self.image_ids, self.labels)))

    @classmethod
    def load(cls, path, metric: str = "l2") -> "GalleryIndex":
        model_id, vectors, entries = load_feature_store(path)
        image_ids, labels = zip(*entries) if entries else ((), ())
        return cls(vectors=vectors, labels=tuple(labels), image_ids=tuple(image_ids),
                   model_id=model_id, metric=metric)


@dataclass(frozen=True)
class Match:
    image_id: str
    identity: str
    distance: float


@dataclass(frozen=True)
class QueryResult:
    matches: tuple[Match, ...]

    def success_for(self, identity: str) -> bool:
        """A known identity counts as found only under its own label; the
        distractor label never matches."""
        if identity == DISTRACTOR_LABEL:
            return False
        return any(m.identity == identity for m in self.matches)


def rank_k_query(index: GalleryIndex, probe: FeatureVector | np.ndarray,
                 k: int) -> QueryResult:
    """The k nearest gallery entries under the index metric, ties broken by
    ascending image id."""
    if len(index) == 0:
        raise EmptyGallery("gallery index is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    values = probe.values if isinstance(probe, FeatureVector) else np.asarray(probe)
    if values.shape[0] != index.vectors.shape[1]:
        raise ValueError(f"probe dimension {values.shape[0]} != index {index.vectors.shape[1]}")
    dists = index.distances(values)
    order = sorted(range(len(index)), key=lambda i: (dists[i], index.image_ids[i]))
    top = order[: min(k, len(index))]
    return QueryResult(matches=tuple(
        Match(index.image_ids[i], index.labels[i], float(dists[i])) for i in top))


def embed_image(extractor: FeatureExtractor, img: ImageTensor,
                detector: FaceDetector,
                blur: SmoothingKernel | None = None) -> FeatureVector:
    """The identification front half: (optionally blur), detect, align,
    extract. Falls back to a whole-image crop when detection fails, so
    indexing never aborts; garbage features simply will not match."""
    if blur is not None and not blur.is_identity:
        img = gaussian_smooth(img, blur)
    face = align_top_face(img, detector, fallback_whole_image=True)
    return extractor.extract(face)


def build_index(extractor: FeatureExtractor, rows, images: dict[str, ImageTensor],
                detector: FaceDetector, metric: str = "l2",
                blur: SmoothingKernel | None = None) -> GalleryIndex:
    """Index a set of dataset rows; ``images`` maps image_id to pixels."""
    vectors = []
    labels = []
    image_ids = []
    for row in rows:
        vec = embed_image(extractor, images[row.image_id], detector, blur=blur)
        vectors.append(vec.values.astype(np.float32))
        labels.append(row.identity)
        image_ids.append(row.image_id)
    return GalleryIndex(vectors=np.stack(vectors), labels=tuple(labels),
                        image_ids=tuple(image_ids), model_id=extractor.model_id,
                        metric=metric)
