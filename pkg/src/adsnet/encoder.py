"""Four-level feature pyramid encoders.

``toy``          four [3x3 conv -> ReLU -> average-pool] stages, pooling 4, 2, 2, 2.
``paper_shape``  same topology with the 256/512/1024/2048 channel contract; when
                 a local EfficientNetV2-S weight file is supplied, the torchvision
                 backbone is used instead, with 1x1 projections onto the contract.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import PROFILE_CHANNELS
from .core import FeatureMap


class FeaturePyramid(NamedTuple):
    f1: torch.Tensor
    f2: torch.Tensor
    f3: torch.Tensor
    f4: torch.Tensor

    def level(self, i: int) -> FeatureMap:
        return FeatureMap(self[i - 1], i)

    def shapes_hwc(self) -> list[tuple[int, int, int]]:
        return [self.level(i).hwc for i in range(1, 5)]


@dataclass(frozen=True)
class EncoderProfile:
    name: str = "toy"
    channel_scheme: tuple = ()
    parameter_init_seed: int = 0
    weights_path: str = ""

    def resolved_channels(self) -> tuple:
        if self.name not in PROFILE_CHANNELS:
            raise ValueError(f"unknown encoder profile {self.name!r}")
        return tuple(self.channel_scheme) or PROFILE_CHANNELS[self.name]


def conv3x3(cin, cout, dilation=1, bias=True):
    # replicate padding keeps constant maps constant up to the bias
    return nn.Conv2d(cin, cout, 3, padding=dilation, dilation=dilation, bias=bias, padding_mode="replicate")


class StageEncoder(nn.Module):
    pools = (4, 2, 2, 2)

    def __init__(self, channels=(16, 32, 64, 128), in_channels=3):
        super().__init__()
        self.channels = tuple(channels)
        cins = (in_channels,) + self.channels[:3]
        self.stages = nn.ModuleList(conv3x3(ci, co) for ci, co in zip(cins, self.channels))

    def forward(self, x: torch.Tensor) -> FeaturePyramid:
        h, w = x.shape[-2:]
        if h % 32 or w % 32:
            raise ValueError(f"input dims must be divisible by 32, got {h}x{w}")
        feats = []
        for conv, pool in zip(self.stages, self.pools):
            x = F.avg_pool2d(F.relu(conv(x)), pool)
            feats.append(x)
        return FeaturePyramid(*feats)


class EfficientNetV2SAdapter(nn.Module):
    """torchvision EfficientNetV2-S trunk tapped at strides 4/8/16/32."""

    taps = (2, 3, 5, 7)
    tap_channels = (48, 64, 160, 1280)

    def __init__(self, channels=PROFILE_CHANNELS["paper_shape"], weights_path: str = ""):
        super().__init__()
        from torchvision.models import efficientnet_v2_s

        trunk = efficientnet_v2_s(weights=None)
        if weights_path:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            trunk.load_state_dict(state)
        self.features = trunk.features
        self.channels = tuple(channels)
        self.proj = nn.ModuleList(nn.Conv2d(ci, co, 1) for ci, co in zip(self.tap_channels, self.channels))

    def forward(self, x: torch.Tensor) -> FeaturePyramid:
        h, w = x.shape[-2:]
        if h % 32 or w % 32:
            raise ValueError(f"input dims must be divisible by 32, got {h}x{w}")
        feats = []
        for idx, block in enumerate(self.features):
            x = block(x)
            if idx in self.taps:
                feats.append(self.proj[len(feats)](x))
        return FeaturePyramid(*feats)


def build_encoder(profile: EncoderProfile) -> nn.Module:
    channels = profile.resolved_channels()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(profile.parameter_init_seed)
        if profile.weights_path:
            return EfficientNetV2SAdapter(channels, profile.weights_path)
        return StageEncoder(channels)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def extract_features(encoder: nn.Module, img) -> FeaturePyramid:
    """Run ``encoder`` on an ``ImageTensor`` or an NCHW tensor."""
    x = img if isinstance(img, torch.Tensor) else img.to_tensor()
    dtype = next(encoder.parameters()).dtype
    return encoder(x.to(dtype))
