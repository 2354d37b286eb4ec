"""Desk-scale protection experiments: held-out-victim evaluation, the
source x victim transfer grid, the blur defense, JPEG robustness, and the
gallery-size and magnitude sweeps. Reports land under --results."""

import argparse
from dataclasses import replace
from pathlib import Path

import torch

from faceveil.attack import AttackConfig
from faceveil.detection import BlobFaceDetector
from faceveil.evalbench.dataset import FaceDataset
from faceveil.evalbench.experiments import (
    ProtectedStore,
    run_jpeg_robustness,
    run_protection_eval,
    run_smoothing_defense,
    run_transfer_matrix,
)
from faceveil.evalbench.protocol import EvalProtocol
from faceveil.registry import Ensemble, load_ensemble, load_extractor, ExtractorSpec

torch.set_num_threads(1)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dataset", default="data/eval/descriptor.json")
    ap.add_argument("--models", default="models")
    ap.add_argument("--results", default="results")
    ap.add_argument("--protected", type=int, default=5)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--split-seed", type=int, default=42)
    ap.add_argument("--experiments", default="protect,transfer,defense,jpeg",
                    help="comma list from protect,transfer,defense,jpeg,gallery,magnitude")
    args = ap.parse_args()

    models = Path(args.models)
    results = Path(args.results)
    results.mkdir(parents=True, exist_ok=True)
    dataset = FaceDataset.from_descriptor(args.dataset)
    ensemble = load_ensemble(Ensemble.load(models / "ensemble.json"))
    import json
    victim = load_extractor(ExtractorSpec.from_dict(
        json.loads((models / "victim_pcnn.spec.json").read_text())))
    detector = BlobFaceDetector()
    store = ProtectedStore(directory=results / "protected")
    protocol = EvalProtocol(probe_fraction=0.1, protected_identity_count=args.protected,
                            rank_ks=(1, 50), seed=args.split_seed)
    cfg = AttackConfig.from_preset("standard")
    wanted = set(args.experiments.split(","))

    if "protect" in wanted:
        rep = run_protection_eval(dataset, ensemble, victim, protocol, cfg,
                                  detector=detector, store=store, seed=args.seed)
        rep.save(results / "protection_eval.txt")
        print(rep.to_text())

    if "transfer" in wanted:
        sources = [ensemble[0], ensemble[3]]
        grid = run_transfer_matrix(dataset, sources, sources, protocol, cfg,
                                   detector=detector, store=store,
                                   ensemble=ensemble, seed=args.seed)
        grid.save(results / "transfer_matrix.txt")
        print(grid.to_text())

    if "defense" in wanted:
        rep = run_smoothing_defense(dataset, ensemble, victim, protocol, cfg,
                                    detector=detector, store=store, seed=args.seed)
        rep.save(results / "smoothing_defense.txt")
        print(rep.to_text())

    if "jpeg" in wanted:
        png, jpeg = run_jpeg_robustness(dataset, ensemble, victim, protocol, cfg,
                                        quality=85, detector=detector, store=store,
                                        seed=args.seed)
        png.save(results / "jpeg_png_baseline.txt")
        jpeg.save(results / "jpeg_q85.txt")
        print(jpeg.to_text())

    if "gallery" in wanted:
        for cap in (3, None):
            proto = replace(protocol, max_gallery_per_protected=cap)
            rep = run_protection_eval(dataset, ensemble, victim, proto, cfg,
                                      detector=detector, store=store, seed=args.seed)
            name = f"gallery_cap_{cap or 'full'}.txt"
            rep.save(results / name)
            print(f"gallery cap {cap}: "
                  f"rank-50 attacked = {rep.accuracy('ensemble', victim.model_id, 50):.3f}")

    if "magnitude" in wanted:
        for preset in ("small", "standard", "large"):
            rep = run_protection_eval(dataset, ensemble, victim, protocol,
                                      AttackConfig.from_preset(preset),
                                      detector=detector, store=store, seed=args.seed)
            rep.save(results / f"magnitude_{preset}.txt")
            print(f"{preset}: rank-1 attacked = "
                  f"{rep.accuracy('ensemble', victim.model_id, 1):.3f}")


if __name__ == "__main__":
    main()
