"""Command-line interface: protection, benchmark experiments, training,
runtime measurement, the HTTP service, and synthetic dataset generation.

Errors exit with status 2 and one machine-parseable line on stderr:
``error: <ErrorClass>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .attack import AttackConfig, benchmark_runtime, protect
from .detection import BlobFaceDetector
from .errors import ConfigError, FaceveilError
from .imaging import load_image, save_png
from .registry import Ensemble, ExtractorSpec, load_ensemble, load_extractor, save_extractor
from .training import TrainConfig, train_extractor


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} not found: {path}")
    return p


def _load_ensemble(path: str):
    return load_ensemble(Ensemble.load(_require_file(path, "ensemble file")))


def _load_spec(path: str) -> ExtractorSpec:
    return ExtractorSpec.from_dict(json.loads(_require_file(path, "spec file").read_text()))


def _attack_config(args) -> AttackConfig:
    overrides = {}
    if getattr(args, "steps", None) is not None:
        overrides["steps"] = args.steps
    if getattr(args, "alpha", None) is not None:
        overrides["alpha"] = args.alpha
    return AttackConfig.from_preset(args.preset, **overrides)


def cmd_protect(args) -> int:
    image = load_image(_require_file(args.input, "input image"))
    ensemble = _load_ensemble(args.ensemble)
    cfg = _attack_config(args)
    result = protect(image, ensemble, cfg, seed=args.seed)
    save_png(result.protected, args.output)
    print(f"wrote {args.output} (faces={result.faces_attacked}, "
          f"objective {result.objective_trace[0]:.3f} -> {result.objective_trace[-1]:.3f})")
    for model_id, disp in sorted(result.per_model_displacement.items()):
        print(f"displacement {model_id} = {disp:.3f}")
    print(f"perceptual_cost = {result.lpips_cost:.5f}")
    return 0


def cmd_evaluate(args) -> int:
    from .evalbench.dataset import FaceDataset
    from .evalbench.experiments import ProtectedStore, run_protection_eval
    from .evalbench.protocol import EvalProtocol

    dataset = FaceDataset.from_descriptor(_require_file(args.dataset, "dataset descriptor"))
    protocol = EvalProtocol.load(_require_file(args.protocol, "protocol file"))
    ensemble = _load_ensemble(args.ensemble)
    victim = load_extractor(_load_spec(args.victim))
    store = ProtectedStore(directory=Path(args.store)) if args.store else None
    report = run_protection_eval(dataset, ensemble, victim, protocol,
                                 AttackConfig.from_preset(args.preset),
                                 store=store, seed=args.seed,
                                 jpeg_quality=args.jpeg_quality)
    Path(args.out).write_text(report.to_text())
    print(report.to_text())
    print(f"wrote {args.out}")
    return 0


def cmd_transfer_matrix(args) -> int:
    from .evalbench.dataset import FaceDataset
    from .evalbench.experiments import ProtectedStore, run_transfer_matrix
    from .evalbench.protocol import EvalProtocol

    dataset = FaceDataset.from_descriptor(_require_file(args.dataset, "dataset descriptor"))
    protocol = EvalProtocol.load(_require_file(args.protocol, "protocol file"))
    sources = [load_extractor(_load_spec(p)) for p in args.sources.split(",")]
    victims = [load_extractor(_load_spec(p)) for p in args.victims.split(",")]
    store = ProtectedStore(directory=Path(args.store)) if args.store else None
    report = run_transfer_matrix(dataset, sources, victims, protocol,
                                 AttackConfig.from_preset(args.preset),
                                 store=store, seed=args.seed)
    Path(args.out).write_text(report.to_text())
    print(report.to_text())
    print(f"wrote {args.out}")
    return 0


def cmd_train(args) -> int:
    from .detection import align_top_face
    from .evalbench.dataset import FaceDataset

    spec = _load_spec(args.spec)
    cfg = TrainConfig.from_dict(json.loads(_require_file(args.config, "train config").read_text()))
    dataset = FaceDataset.from_descriptor(_require_file(args.dataset, "dataset descriptor"))
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
    extractor, log = train_extractor(spec, crops, cfg)
    save_extractor(extractor, args.out)
    for rec in log.records:
        print(f"epoch {rec.epoch}: loss {rec.loss:.4f} lr {rec.lr:g}")
    if len(log):
        print(f"trained on {len(crops)} crops; loss {log.initial_loss:.4f} -> "
              f"{log.final_loss:.4f}; wrote {args.out}")
    else:
        print(f"no epochs run; wrote freshly initialized weights to {args.out}")
    return 0


def cmd_bench_runtime(args) -> int:
    image_dir = _require_file(args.images, "image directory")
    paths = sorted(p for p in Path(image_dir).glob("**/*")
                   if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if args.limit:
        paths = paths[: args.limit]
    if not paths:
        raise ConfigError(f"no images found under {image_dir}")
    images = [load_image(p) for p in paths]
    ensemble = _load_ensemble(args.ensemble)
    report = benchmark_runtime(images, ensemble, _attack_config(args), seed=args.seed)
    print(json.dumps(report.to_dict(), indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2))
        print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app, default_protector, mock_protector

    if args.config:
        config = ServiceConfig.from_file(_require_file(args.config, "service config"))
    else:
        config = ServiceConfig(storage_dir=Path(args.storage),
                               ttl_seconds=args.ttl, workers=args.workers)
    if args.mock:
        protector = mock_protector()
    else:
        if not args.ensemble:
            raise ConfigError("serve requires --ensemble unless --mock is set")
        protector = default_protector(_load_ensemble(args.ensemble))
    app = create_app(config, protector)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_make_dataset(args) -> int:
    from .evalbench.dataset import write_corpus
    from .synthdata import make_corpus

    corpus = make_corpus(args.identities, args.images_per_identity, seed=args.seed,
                         n_distractors=args.distractors,
                         identity_prefix=args.prefix)
    dataset = write_corpus(corpus, args.out, name=args.name)
    dataset.split_seed = args.seed
    dataset.save_descriptor(Path(args.out) / "descriptor.json")
    print(f"wrote {len(dataset.images)} images and descriptor.json under {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="faceveil")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("protect", help="protect one image")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--preset", default="standard")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ensemble", required=True, help="ensemble JSON with weights URIs")
    p.set_defaults(func=cmd_protect)

    p = sub.add_parser("evaluate", help="protection eval on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--ensemble", required=True)
    p.add_argument("--victim", required=True, help="victim extractor spec JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", default="standard")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--store", default=None, help="cache dir for protected images")
    p.add_argument("--jpeg-quality", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("transfer-matrix", help="source x victim grid")
    p.add_argument("--dataset", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--sources", required=True, help="comma-separated spec JSONs")
    p.add_argument("--victims", required=True, help="comma-separated spec JSONs")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", default="standard")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--store", default=None)
    p.set_defaults(func=cmd_transfer_matrix)

    p = sub.add_parser("train", help="train one extractor")
    p.add_argument("--spec", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench-runtime", help="seconds-per-image statistics")
    p.add_argument("images", help="directory of images")
    p.add_argument("--ensemble", required=True)
    p.add_argument("--preset", default="standard")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench_runtime)

    p = sub.add_parser("serve", help="run the protection HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ensemble", default=None)
    p.add_argument("--mock", action="store_true", help="stub backend for UI development")
    p.add_argument("--config", default=None, help="service config JSON")
    p.add_argument("--storage", default="/tmp/faceveil")
    p.add_argument("--ttl", type=float, default=3600.0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("make-dataset", help="generate a synthetic labeled corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--identities", type=int, default=20)
    p.add_argument("--images-per-identity", type=int, default=10)
    p.add_argument("--distractors", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prefix", default="id")
    p.add_argument("--name", default="synthetic")
    p.set_defaults(func=cmd_make_dataset)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FaceveilError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
