"""Train the desk-scale model zoo: the four-member attack ensemble (both
residual families x both margin heads) plus a held-out plain-conv victim.

Writes weight files, per-model extractor specs, and ensemble.json."""

import argparse
import json
from pathlib import Path

import torch

from faceveil.detection import BlobFaceDetector, align_top_face
from faceveil.errors import FaceveilError
from faceveil.evalbench.dataset import FaceDataset
from faceveil.registry import Ensemble, ExtractorSpec, save_extractor
from faceveil.training import TrainConfig, train_extractor

torch.set_num_threads(1)

ZOO = {
    "ens_ir_arc": ("ir-micro", "arcface"),
    "ens_ir_cos": ("ir-micro", "cosface"),
    "ens_rn_arc": ("rn-micro", "arcface"),
    "ens_rn_cos": ("rn-micro", "cosface"),
    "victim_pcnn": ("pcnn-micro", "arcface"),
}

# reduced-scale recipe: the reference schedule shape at desk size
DESK_TRAIN = TrainConfig(batch_size=32, epochs=14, lr=0.1, lr_drop_epochs=(8, 12),
                         momentum=0.9, weight_decay=5e-4, focal_gamma=2.0,
                         head_margin=0.3, head_scale=24.0, seed=0)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dataset", default="data/train/descriptor.json")
    ap.add_argument("--out", default="models")
    ap.add_argument("--embed-dim", type=int, default=48)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = FaceDataset.from_descriptor(args.dataset)
    detector = BlobFaceDetector()
    crops = []
    for row in dataset.images:
        if row.is_distractor:
            continue
        try:
            crops.append((align_top_face(dataset.load(row.image_id), detector).crop,
                          row.identity))
        except FaceveilError:
            continue
    print(f"training on {len(crops)} aligned crops")

    members = []
    for name, (backbone, head) in ZOO.items():
        spec = ExtractorSpec(backbone, head, embed_dim=args.embed_dim)
        extractor, log = train_extractor(spec, crops, DESK_TRAIN)
        uri = out / f"{name}.pt"
        save_extractor(extractor, uri)
        stamped = ExtractorSpec(backbone, head, str(uri), args.embed_dim)
        (out / f"{name}.spec.json").write_text(json.dumps(stamped.to_dict(), indent=2))
        print(f"{name}: loss {log.initial_loss:.2f} -> {log.final_loss:.2f} ({uri})")
        if name.startswith("ens_"):
            members.append(stamped)

    Ensemble(members=tuple(members)).save(out / "ensemble.json")
    print(f"wrote {out / 'ensemble.json'}")


if __name__ == "__main__":
    main()
