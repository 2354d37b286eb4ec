"""Gallery/probe identification benchmark and protection experiments."""

from .adapters import LocalRecognizer, MockRecognizer, recognizer_adapter
from .dataset import DISTRACTOR_LABEL, DatasetImage, FaceDataset, ingest_directory
from .index import GalleryIndex, QueryResult, embed_image, rank_k_query
from .protocol import EvalProtocol, Split, split_gallery_probe
from .report import EvalReport
from .experiments import (
    ProtectedStore,
    run_jpeg_robustness,
    run_protection_eval,
    run_smoothing_defense,
    run_transfer_matrix,
)

__all__ = [
    "DISTRACTOR_LABEL", "DatasetImage", "FaceDataset", "ingest_directory",
    "GalleryIndex", "QueryResult", "embed_image", "rank_k_query",
    "EvalProtocol", "Split", "split_gallery_probe", "EvalReport",
    "ProtectedStore", "run_protection_eval", "run_transfer_matrix",
    "run_smoothing_defense", "run_jpeg_robustness",
    "LocalRecognizer", "MockRecognizer", "recognizer_adapter",
]
