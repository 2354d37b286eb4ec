"""Training harness for feature extractors.

SGD with momentum and weight decay, focal loss over margin-head logits,
and a step learning-rate schedule that divides by 10 at the configured
epochs. Defaults mirror the full-scale recipe; desk runs shrink batch,
epochs, and drop points.
"""

from __future__ import annotations


from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .errors import InsufficientClasses
from .heads import DEFAULT_MARGIN, DEFAULT_SCALE, FocalLoss, MarginHead
from .imaging import ImageTensor
from .registry import ExtractorSpec, FeatureExtractor, new_extractor


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 512
    epochs: int = 120
    lr: float = 0.1
    lr_drop_epochs: tuple[int, ...] = (35, 65, 95)
    momentum: float = 0.9
    weight_decay: float = 5e-4
    focal_gamma: float = 2.0
    head_margin: float | None = None  # None -> per-head default
    head_scale: float | None = None
    seed: int = 0

    def resolved_margin(self, head: str) -> float:
        return DEFAULT_MARGIN[head] if self.head_margin is None else self.head_margin

    def resolved_scale(self, head: str) -> float:
        return DEFAULT_SCALE[head] if self.head_scale is None else self.head_scale

    def to_dict(self) -> dict:
        return {"batch_size": self.batch_size, "epochs": self.epochs, "lr": self.lr,
                "lr_drop_epochs": list(self.lr_drop_epochs), "momentum": self.momentum,
                "weight_decay": self.weight_decay, "focal_gamma": self.focal_gamma,
                "head_margin": self.head_margin, "head_scale": self.head_scale,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "lr_drop_epochs" in d:
            d["lr_drop_epochs"] = tuple(d["lr_drop_epochs"])
        return cls(**d)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    lr: float


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)

    def lr_at(self, epoch: int) -> float:
        for r in self.records:
            if r.epoch == epoch:
                return r.lr
        raise KeyError(f"no record for epoch {epoch}")

    @property
    def initial_loss(self) -> float:
        return self.records[0].loss

    @property
    def final_loss(self) -> float:
        return self.records[-1].loss

    def __len__(self) -> int:
        return len(self.records)


def lr_for_epoch(cfg: TrainConfig, epoch: int) -> float:
    """lr used during a given (0-indexed) epoch under the step schedule."""
    drops = sum(1 for d in cfg.lr_drop_epochs if d <= epoch)
    return cfg.lr * (0.1 ** drops)


def train_extractor(spec: ExtractorSpec,
                    dataset: Sequence[tuple[ImageTensor, str]],
                    cfg: TrainConfig) -> tuple[FeatureExtractor, TrainingLog]:
    """Train an extractor from scratch on (112x112 crop, identity) pairs.

    Returns the trained extractor and a per-epoch loss/lr log. With
    epochs=0 the freshly initialized weights come back untouched and the
    log is empty.
    """
    identities = sorted({label for _, label in dataset})
    if len(identities) < 2:
        raise InsufficientClasses(
            f"need >= 2 identities to train, got {len(identities)}")
    label_index = {name: i for i, name in enumerate(identities)}

    torch.manual_seed(cfg.seed)
    extractor = new_extractor(spec)
    log = TrainingLog()
    if cfg.epochs == 0:
        return extractor, log

    module = extractor.module.train()
    for p in module.parameters():
        p.requires_grad_(True)
    head = MarginHead(spec.embed_dim, len(identities), spec.head,
                      cfg.resolved_margin(spec.head), cfg.resolved_scale(spec.head))
    criterion = FocalLoss(cfg.focal_gamma)
    params = list(module.parameters()) + list(head.parameters())
    opt = torch.optim.SGD(params, lr=cfg.lr, momentum=cfg.momentum,
                          weight_decay=cfg.weight_decay)
    sched = torch.optim.lr_scheduler.MultiStepLR(
        opt, milestones=sorted(cfg.lr_drop_epochs), gamma=0.1)

    crops = torch.stack([img.to_chw(torch.float32) for img, _ in dataset])
    labels = torch.tensor([label_index[label] for _, label in dataset], dtype=torch.long)
    n = len(dataset)
    order_rng = np.random.default_rng(cfg.seed)

    for epoch in range(cfg.epochs):
        lr_now = opt.param_groups[0]["lr"]
        perm = order_rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = torch.from_numpy(perm[start:start + cfg.batch_size].copy())
            opt.zero_grad()
            emb = module(crops[idx])
            logits = head(emb, labels[idx])
            loss = criterion(logits, labels[idx])
            loss.backward()
            opt.step()
            losses.append(loss.item())
        sched.step()
        log.records.append(EpochRecord(epoch=epoch, loss=float(np.mean(losses)), lr=lr_now))

    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return FeatureExtractor(spec, module), log
