"""Exception types shared across the package."""

from __future__ import annotations


class FaceveilError(Exception):
    """Base class for all faceveil errors."""


class InvalidKernel(FaceveilError):
    """Smoothing kernel parameters are unusable (e.g. even window)."""


class InvalidQuality(FaceveilError):
    """JPEG quality outside [1, 100]."""


class DecodeError(FaceveilError):
    """Byte stream does not decode to an image."""


class DegenerateLandmarks(FaceveilError):
    """Landmark set is collinear or coincident; no similarity fit exists."""


class NoFaceFound(FaceveilError):
    """No face detection on an input that requires one."""


class ModelContractViolation(FaceveilError):
    """An extractor produced output violating its declared contract."""


class DegenerateEmbedding(FaceveilError):
    """Zero-norm embedding where a direction is required."""


class DegenerateFeatures(FaceveilError):
    """Clean feature norm is zero; the objective is undefined."""


class InsufficientClasses(FaceveilError):
    """Training dataset has fewer than two identities."""


class ShapeMismatch(FaceveilError):
    """Two arrays that must agree in shape do not."""


class NumericalFailure(FaceveilError):
    """Non-finite value encountered mid-optimization.

    Carries the objective trace accumulated up to the failure.
    """

    def __init__(self, message: str, trace: list[float] | None = None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class SplitError(FaceveilError):
    """Dataset cannot be split under the protocol (names the identity)."""

    def __init__(self, message: str, identity: str | None = None):
        super().__init__(message)
        self.identity = identity


class EmptyGallery(FaceveilError):
    """Query against an index with no entries."""


class ConfigError(FaceveilError):
    """Unknown preset, adapter kind, or malformed configuration."""
