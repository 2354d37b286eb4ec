"""Shared fixtures: the desk-scale corpus, the trained model zoo, and the
protected-image store.

Training five micro extractors takes a minute or two and protecting the
desk gallery takes several more, so both cache under tests/.cache keyed by
a fixture version plus their parameters. Delete the directory to force a
full rebuild.
"""

import hashlib
import json
import os
from pathlib import Path

import numpy as np
import pytest
import torch

torch.set_num_threads(1)

from faceveil.attack import AttackConfig
from faceveil.detection import BlobFaceDetector, align_top_face
from faceveil.evalbench.dataset import FaceDataset, ingest_directory, write_corpus
from faceveil.evalbench.experiments import ProtectedStore
from faceveil.evalbench.protocol import EvalProtocol
from faceveil.registry import ExtractorSpec, load_extractor, save_extractor
from faceveil.synthdata import make_corpus
from faceveil.training import TrainConfig, train_extractor

FIXTURE_VERSION = "v1"
CACHE_ROOT = Path(os.environ.get("FACEVEIL_TEST_CACHE",
                                 Path(__file__).parent / ".cache")) / FIXTURE_VERSION

TRAIN_CORPUS = dict(n_identities=40, images_per_identity=10, seed=1000,
                    identity_prefix="trn")
EVAL_CORPUS = dict(n_identities=20, images_per_identity=10, seed=2000,
                   n_distractors=30)

# reduced-scale training recipe: the reference schedule shape (step drops by
# 10x, momentum 0.9, weight decay 5e-4, focal loss) at desk size
DESK_TRAIN = TrainConfig(batch_size=32, epochs=14, lr=0.1, lr_drop_epochs=(8, 12),
                         momentum=0.9, weight_decay=5e-4, focal_gamma=2.0,
                         head_margin=0.3, head_scale=24.0, seed=0)

ZOO_SPECS = {
    "ens_ir_arc": ExtractorSpec("ir-micro", "arcface", embed_dim=48),
    "ens_ir_cos": ExtractorSpec("ir-micro", "cosface", embed_dim=48),
    "ens_rn_arc": ExtractorSpec("rn-micro", "arcface", embed_dim=48),
    "ens_rn_cos": ExtractorSpec("rn-micro", "cosface", embed_dim=48),
    "victim_pcnn": ExtractorSpec("pcnn-micro", "arcface", embed_dim=48),
}

DESK_PROTOCOL = EvalProtocol(probe_fraction=0.1, protected_identity_count=5,
                             rank_ks=(1, 50), seed=42)
EVAL_SEED = 7  # per-image protection seeds derive from this


def _params_key(*parts) -> str:
    payload = json.dumps(parts, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@pytest.fixture(scope="session")
def detector():
    return BlobFaceDetector()


@pytest.fixture(scope="session")
def desk_dataset() -> FaceDataset:
    root = CACHE_ROOT / f"dataset-{_params_key(EVAL_CORPUS)}"
    if not (root / "done").exists():
        corpus = make_corpus(**EVAL_CORPUS)
        write_corpus(corpus, root, name="desk")
        (root / "done").write_text("ok")
    return ingest_directory(root, name="desk", split_seed=DESK_PROTOCOL.seed)


@pytest.fixture(scope="session")
def train_crops(detector):
    corpus = make_corpus(**TRAIN_CORPUS)
    return [(align_top_face(ci.image, detector).crop, ci.identity) for ci in corpus]


@pytest.fixture(scope="session")
def trained_zoo(train_crops):
    zoo = {}
    key = _params_key(TRAIN_CORPUS, DESK_TRAIN.to_dict(),
                      {n: s.to_dict() for n, s in ZOO_SPECS.items()})
    weights_dir = CACHE_ROOT / f"weights-{key}"
    weights_dir.mkdir(parents=True, exist_ok=True)
    for name, spec in ZOO_SPECS.items():
        uri = weights_dir / f"{name}.pt"
        stamped = ExtractorSpec(spec.backbone, spec.head, str(uri), spec.embed_dim)
        if not uri.exists():
            extractor, _ = train_extractor(spec, train_crops, DESK_TRAIN)
            save_extractor(extractor, uri)
        zoo[name] = load_extractor(stamped)
    return zoo


@pytest.fixture(scope="session")
def attack_ensemble(trained_zoo):
    return [trained_zoo[k] for k in ("ens_ir_arc", "ens_ir_cos",
                                     "ens_rn_arc", "ens_rn_cos")]


@pytest.fixture(scope="session")
def held_out_victim(trained_zoo):
    return trained_zoo["victim_pcnn"]


@pytest.fixture(scope="session")
def protected_store() -> ProtectedStore:
    return ProtectedStore(directory=CACHE_ROOT / "protected")


@pytest.fixture(scope="session")
def desk_protocol() -> EvalProtocol:
    return DESK_PROTOCOL


@pytest.fixture(scope="session")
def standard_attack() -> AttackConfig:
    return AttackConfig.from_preset("standard")
