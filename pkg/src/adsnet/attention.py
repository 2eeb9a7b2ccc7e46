"""Continuous attention: dual-semantic refinement of the early global map.

Pipeline for one forward pass::

    guide  = CIM(f1)                              channel then spatial gate
    e_i    = PASPP(f_i),           i = 2, 3, 4
    g4     = gate(pool(guide), e4)                deepest first
    g3     = gate(up(g4), e3)
    g2     = gate(up(g3), e2)
    AG_i   = up_to_stride4(proj(g_i))
    S, W   = partition(sigmoid(M))
    BS     = head(Cat(S * AG_i))
    OS     = head(Cat(S * AG_i, W * AG_i))
    final  = conv3x3(Cat(M, BS, OS))

with ``gate(a, b) = sigmoid(conv3x3(a)) * b``.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import PartitionConfig
from .core import resize_bilinear
from .encoder import conv3x3


class ChannelAttention(nn.Module):
    """x * sigmoid(H(maxpool(x)) + H(avgpool(x))) with a shared bottleneck H."""

    def __init__(self, channels: int, ratio: int = 4):
        super().__init__()
        if channels < ratio:
            raise ValueError(f"channel attention needs at least {ratio} channels, got {channels}")
        self.reduce = nn.Conv2d(channels, channels // ratio, 1, bias=False)
        self.restore = nn.Conv2d(channels // ratio, channels, 1, bias=False)

    def _mlp(self, v):
        return self.restore(F.relu(self.reduce(v)))

    def gate(self, x):
        return torch.sigmoid(self._mlp(F.adaptive_max_pool2d(x, 1)) + self._mlp(F.adaptive_avg_pool2d(x, 1)))

    def forward(self, x):
        return self.gate(x) * x


class SpatialAttention(nn.Module):
    """x * sigmoid(conv3x3([max_c(x), mean_c(x)]))."""

    def __init__(self):
        super().__init__()
        self.conv = conv3x3(2, 1)

    @staticmethod
    def pooled(x):
        return torch.cat([x.amax(dim=1, keepdim=True), x.mean(dim=1, keepdim=True)], dim=1)

    def gate(self, x):
        return torch.sigmoid(self.conv(self.pooled(x)))

    def forward(self, x):
        return self.gate(x) * x


class CIM(nn.Module):
    def __init__(self, channels: int, ratio: int = 4):
        super().__init__()
        self.channel = ChannelAttention(channels, ratio)
        self.spatial = SpatialAttention()

    def forward(self, f1):
        return self.spatial(self.channel(f1))


class PASPP(nn.Module):
    """Progressive atrous pyramid: dilations 1/2/4/8, merged pairwise then jointly.

    Works on any spatial size; below ``2 * 8 + 1`` pixels the outer atrous taps
    read replicate padding only.
    """

    def __init__(self, channels: int, dilations=(1, 2, 4, 8)):
        super().__init__()
        inner = max(channels // 4, 1)
        self.dilations = tuple(dilations)
        self.reduce = nn.Conv2d(channels, inner, 1)
        self.branches = nn.ModuleList(conv3x3(inner, inner, dilation=d) for d in self.dilations)
        self.pair_low = nn.Conv2d(inner, inner, 1)
        self.pair_high = nn.Conv2d(inner, inner, 1)
        self.project = nn.Conv2d(2 * inner, channels, 1)

    def forward(self, x):
        if x.shape[-1] < 1 or x.shape[-2] < 1:
            raise ValueError("PASPP needs a non-empty feature map")
        r = F.relu(self.reduce(x))
        b1, b2, b3, b4 = (F.relu(branch(r)) for branch in self.branches)
        low = F.relu(self.pair_low(b1 + b2))
        high = F.relu(self.pair_high(b3 + b4))
        return F.relu(self.project(torch.cat([low, high], dim=1)))


class RegionPartition(NamedTuple):
    strong: torch.Tensor
    weak: torch.Tensor


def partition_regions(prob: torch.Tensor, cfg: PartitionConfig) -> RegionPartition:
    """Split a probability map into strong (S) and weak (W) regions.

    soft: S = p, W = 1 - |2p - 1| (differentiable, peaks at p = 0.5).
    hard: S = [p >= theta], W = [|p - 0.5| < band] restricted to non-strong pixels.
    """
    cfg.validate()
    if cfg.mode == "soft":
        strong = prob
        return RegionPartition(strong, 1.0 - (2.0 * strong - 1.0).abs())
    strong = (prob >= cfg.theta).to(prob.dtype)
    weak = ((prob - 0.5).abs() < cfg.band).to(prob.dtype) * (1.0 - strong)
    return RegionPartition(strong, weak)


class GatedFeature(NamedTuple):
    ag2: torch.Tensor
    ag3: torch.Tensor
    ag4: torch.Tensor


class GateSequence(nn.Module):
    def __init__(self, guide_channels: int, level_channels, width: int):
        super().__init__()
        c2, c3, c4 = level_channels
        self.gate4 = conv3x3(guide_channels, c4)
        self.gate3 = conv3x3(c4, c3)
        self.gate2 = conv3x3(c3, c2)
        self.align = nn.ModuleList(nn.Conv2d(c, width, 1) for c in (c2, c3, c4))

    @staticmethod
    def gate(conv, a, b):
        return torch.sigmoid(conv(a)) * b

    def forward(self, guide, e2, e3, e4) -> GatedFeature:
        g4 = self.gate(self.gate4, F.adaptive_avg_pool2d(guide, e4.shape[-2:]), e4)
        g3 = self.gate(self.gate3, resize_bilinear(g4, e3.shape[-2:]), e3)
        g2 = self.gate(self.gate2, resize_bilinear(g3, e2.shape[-2:]), e2)
        size = guide.shape[-2:]
        return GatedFeature(*(resize_bilinear(proj(g), size) for proj, g in zip(self.align, (g2, g3, g4))))


class SemanticHead(nn.Module):
    """Two 3x3 convolutions from ``groups`` masked feature groups to one logit."""

    def __init__(self, width: int, groups: int):
        super().__init__()
        self.groups = groups
        self.conv1 = conv3x3(groups * width, width)
        self.conv2 = conv3x3(width, 1)

    def forward(self, x):
        return self.conv2(F.relu(self.conv1(x)))


def _check_mask(mask, ag: GatedFeature):
    ref = ag.ag2.shape[-2:]
    if mask.shape[-2:] != ref or any(a.shape[-2:] != ref for a in ag):
        raise ValueError(f"mask {tuple(mask.shape[-2:])} and gated features {[tuple(a.shape) for a in ag]} misaligned")


class BackgroundHead(SemanticHead):
    def __init__(self, width: int):
        super().__init__(width, 3)

    def forward(self, strong, ag: GatedFeature):
        _check_mask(strong, ag)
        return super().forward(torch.cat([strong * a for a in ag], dim=1))


class ObjectHead(SemanticHead):
    def __init__(self, width: int):
        super().__init__(width, 6)

    def forward(self, strong, weak, ag: GatedFeature):
        _check_mask(strong, ag)
        _check_mask(weak, ag)
        return super().forward(torch.cat([strong * a for a in ag] + [weak * a for a in ag], dim=1))


class FinalFusion(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv = conv3x3(3, 1)

    def forward(self, early, bs, os_):
        if not (early.shape == bs.shape == os_.shape):
            raise ValueError("early, BS and OS maps must share one shape")
        return self.conv(torch.cat([early, bs, os_], dim=1))


class ContinuousAttention(nn.Module):
    def __init__(self, channels, width: int, ratio: int = 4):
        super().__init__()
        c1, c2, c3, c4 = channels
        self.cim = CIM(c1, ratio)
        self.paspp = nn.ModuleList(PASPP(c) for c in (c2, c3, c4))
        self.gates = GateSequence(c1, (c2, c3, c4), width)
        self.background = BackgroundHead(width)
        self.object = ObjectHead(width)
        self.fuse = FinalFusion()

    def gated_features(self, pyramid) -> GatedFeature:
        guide = self.cim(pyramid.f1)
        e2, e3, e4 = (m(f) for m, f in zip(self.paspp, pyramid[1:]))
        return self.gates(guide, e2, e3, e4)
