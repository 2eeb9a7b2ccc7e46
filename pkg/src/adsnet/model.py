"""Full network: encoder -> trilateral decoder -> continuous attention."""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn

from .attention import ContinuousAttention, partition_regions
from .config import PartitionConfig, RunConfig
from .core import resize_bilinear
from .decoder import TrilateralDecoder
from .encoder import EncoderProfile, build_encoder


class ADSNetOutput(NamedTuple):
    """All maps at stride 4 (``strong``/``weak`` in [0, 1], the rest logits)."""

    early: torch.Tensor
    strong: torch.Tensor
    weak: torch.Tensor
    bs: torch.Tensor
    os: torch.Tensor
    final: torch.Tensor

    def upsampled(self, size) -> "ADSNetOutput":
        return ADSNetOutput(*(resize_bilinear(t, size) for t in self))

    def head_logits(self) -> dict[str, torch.Tensor]:
        return {"final": self.final, "early": self.early, "bs": self.bs, "os": self.os}


class ADSNet(nn.Module):
    def __init__(self, encoder: nn.Module, channels, width: int, partition: PartitionConfig | None = None):
        super().__init__()
        self.encoder = encoder
        self.decoder = TrilateralDecoder(channels, width)
        self.attention = ContinuousAttention(channels, width)
        self.partition = partition or PartitionConfig()

    def forward(self, x: torch.Tensor, drop: tuple[str, ...] = ()) -> ADSNetOutput:
        """Forward pass; ``drop`` may name ``"bs"``/``"os"`` to zero a head before fusion."""
        pyramid = self.encoder(x)
        early = self.decoder(pyramid).logits
        strong, weak = partition_regions(torch.sigmoid(early), self.partition)
        ag = self.attention.gated_features(pyramid)
        bs = self.attention.background(strong, ag)
        os_ = self.attention.object(strong, weak, ag)
        bs_in = torch.zeros_like(bs) if "bs" in drop else bs
        os_in = torch.zeros_like(os_) if "os" in drop else os_
        final = self.attention.fuse(early, bs_in, os_in)
        return ADSNetOutput(early, strong, weak, bs, os_, final)

    @torch.no_grad()
    def predict_proba(self, x: torch.Tensor, drop: tuple[str, ...] = ()) -> torch.Tensor:
        """Final probability map at the input resolution."""
        out = self(x, drop=drop)
        return torch.sigmoid(resize_bilinear(out.final, x.shape[-2:]))


def build_model(cfg: RunConfig) -> ADSNet:
    """Construct a deterministic model for ``cfg`` (seeded by ``cfg.seed``)."""
    profile = EncoderProfile(cfg.encoder_profile, cfg.channel_scheme, cfg.seed, cfg.encoder_weights)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        encoder = build_encoder(profile)
        return ADSNet(encoder, profile.resolved_channels(), cfg.decoder_width, cfg.partition)
