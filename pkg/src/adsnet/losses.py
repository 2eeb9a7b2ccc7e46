"""Active-contour + binary cross-entropy training objective.

All functions take ``(N, 1, H, W)`` (or ``(H, W)``) torch tensors: ``y`` is the
binary ground truth, ``p`` a probability map.  Every term is averaged over
pixels and batch.

Finite differences are central with replicate padding.  The gradient
magnitude is smoothed as ``sqrt(gx^2 + gy^2 + d) - sqrt(d)`` so that it is
exactly zero on flat regions and differentiable everywhere.

Curvature sign: ``K = div(grad p / |grad p|)`` is *negative* on the rim of
a convex bright blob (about ``-1/r`` for a disc of radius ``r``).
"""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn.functional as F

from .config import LossConfig

GRAD_SMOOTH = 1e-12


def _as_nchw(t: torch.Tensor) -> torch.Tensor:
    if t.ndim == 2:
        return t[None, None]
    if t.ndim == 3:
        return t[:, None]
    return t


def _check_pair(y, p):
    if y.shape != p.shape:
        raise ValueError(f"shape mismatch: y {tuple(y.shape)} vs p {tuple(p.shape)}")


def central_gradients(p: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """(d/dx, d/dy) by central differences with replicate borders."""
    q = F.pad(_as_nchw(p), (1, 1, 1, 1), mode="replicate")
    gx = (q[..., 1:-1, 2:] - q[..., 1:-1, :-2]) / 2.0
    gy = (q[..., 2:, 1:-1] - q[..., :-2, 1:-1]) / 2.0
    return gx, gy


def gradient_magnitude(p: torch.Tensor) -> torch.Tensor:
    gx, gy = central_gradients(p)
    d = torch.tensor(GRAD_SMOOTH, dtype=gx.dtype)
    return (torch.sqrt(gx * gx + gy * gy + d) - torch.sqrt(d)).reshape(p.shape)


def curvature_map(p: torch.Tensor, eps: float = 1e-7) -> torch.Tensor:
    """Level-set curvature ``div(grad p / (|grad p| + eps))``."""
    if p.shape[-1] < 3 or p.shape[-2] < 3:
        raise ValueError("curvature needs a map of at least 3x3")
    gx, gy = central_gradients(p)
    norm = gradient_magnitude(_as_nchw(p)) + eps
    nx, ny = gx / norm, gy / norm
    dnx, _ = central_gradients(nx)
    _, dny = central_gradients(ny)
    return (dnx + dny).reshape(p.shape)


def bce_loss(y: torch.Tensor, p: torch.Tensor, eps: float = 1e-7) -> torch.Tensor:
    _check_pair(y, p)
    p = p.clamp(eps, 1.0 - eps)
    return -(y * torch.log(p) + (1.0 - y) * torch.log1p(-p)).mean()


class AceTerms(NamedTuple):
    length_curvature: torch.Tensor
    region_in: torch.Tensor
    region_out: torch.Tensor
    curvature_map: torch.Tensor


def ace_loss(y: torch.Tensor, p: torch.Tensor, cfg: LossConfig | None = None):
    """Active-contour energy: ``(alpha + beta K^2)|grad p| + lam*y*(c1-p)^2 + lam*(1-y)*(c2-p)^2``.

    Returns ``(total, AceTerms)``; curvature is taken from the prediction.
    """
    cfg = cfg or LossConfig()
    _check_pair(y, p)
    k = curvature_map(p, cfg.epsilon)
    length = ((cfg.alpha + cfg.beta * k * k) * gradient_magnitude(p)).mean()
    region_in = (cfg.lam * y * (cfg.c1 - p) ** 2).mean()
    region_out = (cfg.lam * (1.0 - y) * (cfg.c2 - p) ** 2).mean()
    terms = AceTerms(length, region_in, region_out, k)
    return length + region_in + region_out, terms


def combined_loss(y: torch.Tensor, p: torch.Tensor, cfg: LossConfig | None = None) -> torch.Tensor:
    cfg = cfg or LossConfig()
    ace, _ = ace_loss(y, p, cfg)
    return ace + bce_loss(y, p, cfg.epsilon)


HEADS = ("final", "early", "bs", "os")


def total_training_loss(y: torch.Tensor, outputs: dict, cfg: LossConfig | None = None, weights=None):
    """Weighted sum of ``combined_loss`` over the supervised heads.

    ``outputs`` maps head name to probability maps already at ``y``'s size.
    Returns ``(total, per_head)``.
    """
    cfg = cfg or LossConfig()
    weights = cfg.weights if weights is None else weights
    per_head = {}
    total = y.new_zeros(())
    for name in HEADS:
        if name not in outputs:
            raise KeyError(f"missing output {name!r}")
        per_head[name] = combined_loss(y, outputs[name], cfg)
        total = total + weights[name] * per_head[name]
    return total, per_head
