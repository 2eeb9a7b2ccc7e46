"""Shared tensor records and small numeric helpers.

Spatial layout conventions used across the package:

* Network tensors are stored NCHW (torch's native layout).  The records
  below expose ``hwc`` accessors so shapes can be read channel-last.
* A level-``i`` feature has stride ``2 ** (i + 1)``.  Odd sizes are handled by
  floor division at every stride level, so ``feature_hw(65, 1) == 16``.
* Bilinear resampling uses ``align_corners=False`` (half-pixel centres).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np
import torch

MIN_IMAGE_SIDE = 32
MASK_KINDS = ("ground_truth", "logits", "probability")


def level_stride(level: int) -> int:
    if level not in (1, 2, 3, 4):
        raise ValueError(f"feature level must be 1..4, got {level}")
    return 2 ** (level + 1)


def feature_hw(size: int, level: int) -> int:
    """Side length of a level-``level`` feature for a source side ``size``."""
    side = size // 4
    for _ in range(level - 1):
        side //= 2
    return side


@dataclass(frozen=True)
class ImageTensor:
    data: np.ndarray  # (H, W, 3) float32
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValueError(f"ImageTensor needs (H, W, 3) data, got {d.shape}")
        if d.shape[0] < MIN_IMAGE_SIDE or d.shape[1] < MIN_IMAGE_SIDE:
            raise ValueError(f"image sides must be >= {MIN_IMAGE_SIDE}, got {d.shape[:2]}")
        if not np.isfinite(d).all():
            raise ValueError("ImageTensor contains non-finite values")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def to_tensor(self, dtype=torch.float32) -> torch.Tensor:
        """(1, 3, H, W) tensor for the network."""
        return torch.from_numpy(np.ascontiguousarray(self.data.transpose(2, 0, 1))).to(dtype)[None]


@dataclass(frozen=True)
class MaskTensor:
    data: np.ndarray  # (H, W)
    kind: Literal["ground_truth", "logits", "probability"] = "ground_truth"

    def __post_init__(self):
        d = self.data
        if d.ndim != 2:
            raise ValueError(f"MaskTensor needs (H, W) data, got {d.shape}")
        if self.kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if not np.isfinite(d).all():
            raise ValueError("MaskTensor contains non-finite values")
        if self.kind == "ground_truth" and not np.isin(d, (0, 1)).all():
            raise ValueError("ground-truth masks must be binary {0, 1}")
        if self.kind == "probability" and (d.min() < 0 or d.max() > 1):
            raise ValueError("probability masks must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class FeatureMap:
    data: torch.Tensor  # (N, C, H, W)
    level: int

    @property
    def stride(self) -> int:
        return level_stride(self.level)

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def hwc(self) -> tuple[int, int, int]:
        _, c, h, w = self.data.shape
        return h, w, c


def normalize_image(raw: np.ndarray, mean=None, std=None) -> ImageTensor:
    """Scale a byte image to [0, 1], optionally standardizing per channel.

    ``mean``/``std`` are recorded in ``meta`` so the transform can be undone.
    """
    raw = np.asarray(raw)
    if raw.size == 0:
        raise ValueError("empty image")
    if raw.ndim != 3 or raw.shape[2] != 3:
        raise ValueError(f"expected a 3-channel image, got shape {raw.shape}")
    data = raw.astype(np.float32) / 255.0
    meta = {"scale": 1.0 / 255.0}
    if mean is not None or std is not None:
        mean = np.asarray(mean if mean is not None else (0.0, 0.0, 0.0), dtype=np.float32)
        std = np.asarray(std if std is not None else (1.0, 1.0, 1.0), dtype=np.float32)
        data = (data - mean) / std
        meta.update(mean=mean.tolist(), std=std.tolist())
    return ImageTensor(data, meta)


Resizable = Union[MaskTensor, FeatureMap, torch.Tensor, np.ndarray]


def _axis_weights(n_in: int, n_out: int, dtype):
    src = (torch.arange(n_out, dtype=torch.float64) + 0.5) * (n_in / n_out) - 0.5
    src = src.clamp(min=0.0)
    i0 = src.floor().long().clamp(max=n_in - 1)
    i1 = (i0 + 1).clamp(max=n_in - 1)
    return i0, i1, (src - i0).to(dtype)


def _lerp_axis(x: torch.Tensor, dim: int, n_out: int) -> torch.Tensor:
    n_in = x.shape[dim]
    if n_in == n_out:
        return x
    i0, i1, t = _axis_weights(n_in, n_out, x.dtype)
    a = x.index_select(dim, i0)
    b = x.index_select(dim, i1)
    shape = [1] * x.ndim
    shape[dim] = n_out
    # a + t * (b - a) keeps constant maps exactly constant
    return a + t.view(shape) * (b - a)


def _resize_nchw(x: torch.Tensor, target: tuple[int, int]) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(target):
        return x
    return _lerp_axis(_lerp_axis(x, x.ndim - 2, target[0]), x.ndim - 1, target[1])


def resize_bilinear(t: Resizable, target: tuple[int, int]) -> Resizable:
    """Bilinear resampling (half-pixel centres) returning the input's kind.

    Accepts ``MaskTensor`` (H, W), ``FeatureMap``, NCHW tensors and 2-D/3-D
    (H, W[, C]) numpy arrays.  Same-size requests return the input unchanged.
    """
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise ValueError(f"target dims must be positive, got {target}")
    if isinstance(t, FeatureMap):
        return FeatureMap(_resize_nchw(t.data, (th, tw)), t.level)
    if isinstance(t, torch.Tensor):
        if t.ndim != 4:
            raise ValueError("tensor input must be NCHW")
        return _resize_nchw(t, (th, tw))
    if isinstance(t, MaskTensor):
        out = resize_bilinear(t.data, (th, tw))
        if t.kind == "ground_truth":
            out = (out >= 0.5).astype(t.data.dtype)
        return MaskTensor(out, t.kind)
    arr = np.asarray(t)
    if arr.shape[:2] == (th, tw):
        return arr
    if arr.ndim == 2:
        x = torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float64))[None, None]
        return _resize_nchw(x, (th, tw))[0, 0].numpy().astype(arr.dtype, copy=False)
    if arr.ndim == 3:
        x = torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1), dtype=np.float64))[None]
        out = _resize_nchw(x, (th, tw))[0].numpy().transpose(1, 2, 0)
        return np.ascontiguousarray(out).astype(arr.dtype, copy=False)
    raise ValueError(f"cannot resize array of shape {arr.shape}")


def sigmoid_map(logits):
    """Elementwise logistic function for tensors, arrays and logit masks."""
    if isinstance(logits, MaskTensor):
        if logits.kind != "logits":
            raise ValueError("sigmoid_map expects a logits mask")
        return MaskTensor(_np_sigmoid(logits.data), "probability")
    if isinstance(logits, torch.Tensor):
        return torch.sigmoid(logits)
    return _np_sigmoid(np.asarray(logits, dtype=np.float64))


def _np_sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
