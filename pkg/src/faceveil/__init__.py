"""faceveil: adversarial image protection against face recognition.

Perturbs face photos so that feature-space embeddings no longer match
other photos of the same person, under a perceptual distortion penalty,
and ships the identification benchmark that quantifies the protection.
"""

from .alignment import (
    CANONICAL_LANDMARKS,
    FACE_SIZE,
    AlignedFace,
    AlignmentTransform,
    FaceDetection,
    apply_alignment,
    build_alignment,
)
from .attack import (
    AttackConfig,
    ProtectionResult,
    RuntimeReport,
    benchmark_runtime,
    protect,
    protection_objective,
    signed_step,
)
from .detection import BlobFaceDetector, StubDetector, detect_faces
from .imaging import (
    ImageTensor,
    SmoothingKernel,
    clip_to_range,
    decode,
    encode_jpeg,
    encode_png,
    gaussian_smooth,
)
from .heads import focal_loss, margin_logits
from .perceptual import PerceptualMetric, PerceptualMetricSpec, lpips
from .registry import (
    Ensemble,
    ExtractorSpec,
    FeatureExtractor,
    FeatureVector,
    load_ensemble,
    load_extractor,
    new_extractor,
    save_extractor,
)
from .training import TrainConfig, TrainingLog, train_extractor

__version__ = "0.1.0"

__all__ = [
    "AlignedFace", "AlignmentTransform", "AttackConfig", "BlobFaceDetector",
    "CANONICAL_LANDMARKS", "Ensemble", "ExtractorSpec", "FACE_SIZE",
    "FaceDetection", "FeatureExtractor", "FeatureVector", "ImageTensor",
    "PerceptualMetric", "PerceptualMetricSpec", "ProtectionResult",
    "RuntimeReport", "SmoothingKernel", "StubDetector", "TrainConfig",
    "TrainingLog", "apply_alignment", "benchmark_runtime", "build_alignment",
    "clip_to_range", "decode", "detect_faces", "encode_jpeg", "encode_png",
    "focal_loss", "gaussian_smooth", "load_ensemble", "load_extractor",
    "lpips", "margin_logits", "new_extractor", "protect",
    "protection_objective", "save_extractor", "signed_step", "train_extractor",
]
