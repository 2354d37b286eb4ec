"""Uniform identify() interface over recognition backends.

The local adapter wraps one of this package's victim models plus a gallery
index; the mock adapter returns a scripted ranking verbatim for service and
UI tests. Commercial black-box backends are an extension point: anything
with ``identify(image, k) -> list[str]`` fits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..detection import BlobFaceDetector, FaceDetector
from ..errors import ConfigError
from ..imaging import ImageTensor
from ..registry import FeatureExtractor
from .index import GalleryIndex, embed_image, rank_k_query


@dataclass
class LocalRecognizer:
    victim: FeatureExtractor
    index: GalleryIndex
    detector: FaceDetector = field(default_factory=BlobFaceDetector)

    def identify(self, probe: ImageTensor, k: int) -> list[str]:
        feats = embed_image(self.victim, probe, self.detector)
        result = rank_k_query(self.index, feats, k)
        return [m.identity for m in result.matches]


@dataclass
class MockRecognizer:
    script: list[str]
    calls: int = 0

    def identify(self, probe: ImageTensor, k: int) -> list[str]:
        self.calls += 1
        return list(self.script[:k])


def recognizer_adapter(kind: str, **kwargs):
    """Build an identify() backend. ``local`` needs victim= and index=
    (detector optional); ``mock`` needs script=."""
    if kind == "local":
        try:
            victim = kwargs.pop("victim")
            index = kwargs.pop("index")
        except KeyError as exc:
            raise ConfigError(f"local adapter requires {exc.args[0]}") from None
        return LocalRecognizer(victim=victim, index=index, **kwargs)
    if kind == "mock":
        if "script" not in kwargs:
            raise ConfigError("mock adapter requires script")
        return MockRecognizer(script=list(kwargs["script"]))
    raise ConfigError(f"unknown adapter kind {kind!r}")
