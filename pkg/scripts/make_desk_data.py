"""Generate the desk-scale corpora: a training set of synthetic identities
and a disjoint evaluation set with distractors, each with a descriptor."""

import argparse
from pathlib import Path

from faceveil.evalbench.dataset import write_corpus
from faceveil.synthdata import make_corpus


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data", help="output root")
    ap.add_argument("--train-identities", type=int, default=40)
    ap.add_argument("--eval-identities", type=int, default=20)
    ap.add_argument("--images-per-identity", type=int, default=10)
    ap.add_argument("--distractors", type=int, default=30)
    ap.add_argument("--train-seed", type=int, default=1000)
    ap.add_argument("--eval-seed", type=int, default=2000)
    args = ap.parse_args()

    root = Path(args.out)
    train = make_corpus(args.train_identities, args.images_per_identity,
                        seed=args.train_seed, identity_prefix="trn")
    ds_train = write_corpus(train, root / "train", name="desk-train")
    ds_train.split_seed = args.train_seed
    ds_train.save_descriptor(root / "train" / "descriptor.json")

    eval_corpus = make_corpus(args.eval_identities, args.images_per_identity,
                              seed=args.eval_seed, n_distractors=args.distractors)
    ds_eval = write_corpus(eval_corpus, root / "eval", name="desk-eval")
    ds_eval.split_seed = args.eval_seed
    ds_eval.save_descriptor(root / "eval" / "descriptor.json")

    print(f"train: {len(ds_train.images)} images -> {root / 'train'}")
    print(f"eval:  {len(ds_eval.images)} images -> {root / 'eval'}")


if __name__ == "__main__":
    main()
