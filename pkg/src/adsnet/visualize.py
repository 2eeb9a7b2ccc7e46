"""Static figure panels showing every intermediate map of one forward pass."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .core import resize_bilinear
from .model import ADSNet

TILES = ("input", "gt", "early", "strong", "weak", "bs", "os", "final")
GAP = 2


def _gray(a: np.ndarray) -> np.ndarray:
    a = np.clip(np.asarray(a, dtype=np.float64), 0.0, 1.0)
    return np.repeat(np.round(a * 255).astype(np.uint8)[..., None], 3, axis=2)


def panel_tiles(model: ADSNet, rec, image_size: int) -> dict[str, np.ndarray]:
    """Maps for one record at its mask resolution, each in [0, 1].

    Logit heads are shown through the logistic function; the two partition
    maps are already probabilities.
    """
    h, w = rec.mask.data.shape
    img = resize_bilinear(rec.image.data, (image_size, image_size))
    x = torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)))[None].to(next(model.parameters()).dtype)
    with torch.no_grad():
        out = model(x).upsampled((h, w))
    tiles = {"input": np.clip(rec.image.data, 0, 1), "gt": rec.mask.data}
    for name in TILES[2:]:
        t = getattr(out, name)[0, 0]
        if name not in ("strong", "weak"):
            t = torch.sigmoid(t)
        tiles[name] = t.double().numpy()
    return tiles


def compose_panel(tiles: dict[str, np.ndarray]) -> Image.Image:
    """Lay the tiles out left to right with a thin white gutter."""
    h, w = tiles["gt"].shape
    canvas = np.full((h, len(TILES) * (w + GAP) - GAP, 3), 255, dtype=np.uint8)
    for i, name in enumerate(TILES):
        t = tiles[name]
        rgb = np.round(np.clip(t, 0, 1) * 255).astype(np.uint8) if t.ndim == 3 else _gray(t)
        canvas[:, i * (w + GAP) : i * (w + GAP) + w] = rgb
    return Image.fromarray(canvas)


def visualize_panels(model: ADSNet, dataset, out_dir, image_size: int, limit: int | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.eval()
    written = []
    n = len(dataset) if limit is None else min(limit, len(dataset))
    for i in range(n):
        rec = dataset[i]
        path = out_dir / f"{rec.image_id.replace('/', '_')}_panel.png"
        compose_panel(panel_tiles(model, rec, image_size)).save(path, optimize=False)
        written.append(path)
    return written
