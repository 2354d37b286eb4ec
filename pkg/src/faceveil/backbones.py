"""Embedding backbones over 112x112 aligned crops.

Two residual families (standard blocks and BN-first "improved residual"
blocks) in full-depth and micro configurations, plus a plain convolutional
net used as a held-out victim architecture. Micro variants keep single-core
CPU runs tractable; the full-depth configurations exist so that every
paper-scale backbone/head combination is expressible.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .alignment import FACE_SIZE


class BasicBlock(nn.Module):
    expansion = 1

    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.relu = nn.ReLU(inplace=True)
        self.down = None
        if stride != 1 or cin != cout:
            self.down = nn.Sequential(nn.Conv2d(cin, cout, 1, stride, bias=False),
                                      nn.BatchNorm2d(cout))

    def forward(self, x):
        identity = x if self.down is None else self.down(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + identity)


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, stride, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.conv3 = nn.Conv2d(cout, cout * 4, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(cout * 4)
        self.relu = nn.ReLU(inplace=True)
        self.down = None
        if stride != 1 or cin != cout * 4:
            self.down = nn.Sequential(nn.Conv2d(cin, cout * 4, 1, stride, bias=False),
                                      nn.BatchNorm2d(cout * 4))

    def forward(self, x):
        identity = x if self.down is None else self.down(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        return self.relu(out + identity)


class IRBlock(nn.Module):
    """BN-first residual unit with PReLU, the face-recognition flavor."""

    expansion = 1

    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.bn0 = nn.BatchNorm2d(cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, 1, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.prelu = nn.PReLU(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, stride, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.down = None
        if stride != 1 or cin != cout:
            self.down = nn.Sequential(nn.Conv2d(cin, cout, 1, stride, bias=False),
                                      nn.BatchNorm2d(cout))

    def forward(self, x):
        identity = x if self.down is None else self.down(x)
        out = self.bn0(x)
        out = self.prelu(self.bn1(self.conv1(out)))
        out = self.bn2(self.conv2(out))
        return out + identity


class ResidualBackbone(nn.Module):
    """Stem + four stages + flatten + linear projection to the embedding."""

    def __init__(self, block, layers, channels, embed_dim, stem_stride=1):
        super().__init__()
        self.embed_dim = embed_dim
        c0 = channels[0]
        self.stem = nn.Sequential(
            nn.Conv2d(3, c0, 3, stem_stride, 1, bias=False),
            nn.BatchNorm2d(c0),
            nn.PReLU(c0) if block is IRBlock else nn.ReLU(inplace=True),
        )
        stages = []
        cin = c0
        for i, (n, cout) in enumerate(zip(layers, channels)):
            stride = 2
            for j in range(n):
                stages.append(block(cin, cout, stride if j == 0 else 1))
                cin = cout * block.expansion
        self.stages = nn.Sequential(*stages)
        side = FACE_SIZE
        for _ in range(len(layers) + (1 if stem_stride == 2 else 0)):
            side = (side + 1) // 2  # 3x3 stride-2 conv with padding 1
        self.flat_dim = cin * side * side
        self.fc = nn.Linear(self.flat_dim, embed_dim)

    def forward(self, x):
        x = self.stem(x)
        x = self.stages(x)
        x = x.flatten(1)
        return self.fc(x)


class PlainConvBackbone(nn.Module):
    """Residual-free conv net; a structurally different victim family."""

    def __init__(self, channels, embed_dim):
        super().__init__()
        layers = []
        cin = 3
        for cout in channels:
            layers += [nn.Conv2d(cin, cout, 3, 2, 1, bias=False),
                       nn.BatchNorm2d(cout), nn.ReLU(inplace=True),
                       nn.Conv2d(cout, cout, 3, 1, 1, bias=False),
                       nn.BatchNorm2d(cout), nn.ReLU(inplace=True)]
            cin = cout
        self.features = nn.Sequential(*layers)
        side = FACE_SIZE // (2 ** len(channels))
        self.embed_dim = embed_dim
        self.fc = nn.Linear(cin * side * side, embed_dim)

    def forward(self, x):
        return self.fc(self.features(x).flatten(1))


def _rn(block, layers):
    def build(embed_dim):
        return ResidualBackbone(block, layers, (64, 128, 256, 512), embed_dim)
    return build


BACKBONES: dict[str, callable] = {
    # paper-scale configurations
    "rn50": _rn(Bottleneck, (3, 4, 6, 3)),
    "rn152": _rn(Bottleneck, (3, 8, 36, 3)),
    "ir50": _rn(IRBlock, (3, 4, 14, 3)),
    "ir152": _rn(IRBlock, (3, 8, 36, 3)),
    # desk-scale configurations
    "rn-micro": lambda d: ResidualBackbone(BasicBlock, (1, 1, 1, 1), (8, 16, 24, 32),
                                           d, stem_stride=2),
    "ir-micro": lambda d: ResidualBackbone(IRBlock, (1, 1, 1, 1), (8, 16, 24, 32),
                                           d, stem_stride=2),
    "pcnn-micro": lambda d: PlainConvBackbone((8, 14, 20, 28), d),
}


def build_backbone(name: str, embed_dim: int) -> nn.Module:
    try:
        builder = BACKBONES[name]
    except KeyError:
        raise KeyError(f"unknown backbone {name!r}; known: {sorted(BACKBONES)}") from None
    return builder(embed_dim)
