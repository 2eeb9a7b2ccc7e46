"""Early global map decoder.

``TrilateralDecoder`` is a reference three-branch design:

* semantic: lateral f4 and f3 merged top-down, lifted to stride 4;
* boundary: high-pass (feature minus its 3x3 local mean) of f1 and f2;
* detail:   f1 plus upsampled f2, kept at stride 4.

The three stride-4 maps are concatenated and reduced to one logit channel by
two 3x3 convolutions.  ``decode_early_map`` is the stable seam: another
decoder with the same signature can replace this one without touching the
rest of the network.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import resize_bilinear
from .encoder import FeaturePyramid, conv3x3

BRANCHES = ("semantic", "boundary", "detail")


class EarlyGlobalMap(NamedTuple):
    logits: torch.Tensor  # (N, 1, H/4, W/4)

    @property
    def probability(self) -> torch.Tensor:
        return torch.sigmoid(self.logits)


def high_pass(x: torch.Tensor) -> torch.Tensor:
    local = F.avg_pool2d(F.pad(x, (1, 1, 1, 1), mode="replicate"), 3, stride=1)
    return x - local


class BranchFusion(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.width = width
        self.conv1 = conv3x3(3 * width, width)
        self.conv2 = conv3x3(width, 1)

    def forward(self, s, b, d) -> EarlyGlobalMap:
        if not (s.shape == b.shape == d.shape):
            raise ValueError(f"branch shapes differ: {tuple(s.shape)}, {tuple(b.shape)}, {tuple(d.shape)}")
        x = torch.cat([s, b, d], dim=1)
        return EarlyGlobalMap(self.conv2(F.relu(self.conv1(x))))


class TrilateralDecoder(nn.Module):
    def __init__(self, channels, width: int = 64):
        super().__init__()
        self.channels = tuple(channels)
        self.width = width
        self.lateral = nn.ModuleList(nn.Conv2d(c, width, 1) for c in self.channels)
        self.semantic_conv = conv3x3(width, width)
        self.boundary_conv = conv3x3(width, width, bias=False)
        self.detail_conv = conv3x3(width, width)
        self.fusion = BranchFusion(width)

    def _laterals(self, p: FeaturePyramid):
        for i, (f, c) in enumerate(zip(p, self.channels), 1):
            if f.shape[1] != c:
                raise ValueError(f"f{i} has {f.shape[1]} channels, decoder expects {c}")
        return [lat(f) for lat, f in zip(self.lateral, p)]

    def branch_forward(self, p: FeaturePyramid, branch: str, laterals=None) -> torch.Tensor:
        l1, l2, l3, l4 = laterals if laterals is not None else self._laterals(p)
        size = l1.shape[-2:]
        if branch == "semantic":
            top = resize_bilinear(l4, l3.shape[-2:]) + l3
            return resize_bilinear(F.relu(self.semantic_conv(top)), size)
        if branch == "boundary":
            edges = high_pass(l1) + resize_bilinear(high_pass(l2), size)
            return F.relu(self.boundary_conv(edges))
        if branch == "detail":
            return F.relu(self.detail_conv(l1 + resize_bilinear(l2, size)))
        raise ValueError(f"unknown branch {branch!r}")

    def forward(self, p: FeaturePyramid) -> EarlyGlobalMap:
        lats = self._laterals(p)
        s, b, d = (self.branch_forward(p, name, lats) for name in BRANCHES)
        return self.fusion(s, b, d)


def decode_early_map(decoder: nn.Module, p: FeaturePyramid) -> EarlyGlobalMap:
    return decoder(p)
