"""Benchmark folders, the learning/generalization split, augmentation and toy data.

Folder layout: ``<root>/images/<stem>.{png,jpg,...}`` with masks at
``<root>/masks/<stem>.<ext>``.  Masks are binarized at 128/255.
"""

from __future__ import annotations

import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .core import ImageTensor, MaskTensor, normalize_image, resize_bilinear
from .errors import DataError

EXPECTED_COUNTS = {
    "kvasir_seg": 1000,
    "cvc_clinicdb": 612,
    "etis": 196,
    "cvc_colondb": 380,
}
PAPER_TRAIN_COUNTS = {"kvasir_seg": 900, "cvc_clinicdb": 550}
IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")
MASK_THRESHOLD = 128


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    root_path: str
    expected_count: int | None = None
    split_role: str = "test"

    def __post_init__(self):
        if self.expected_count is None and self.name in EXPECTED_COUNTS:
            object.__setattr__(self, "expected_count", EXPECTED_COUNTS[self.name])


@dataclass
class SampleRecord:
    image_id: str
    image: ImageTensor
    mask: MaskTensor
    original_size: tuple[int, int]
    meta: dict = field(default_factory=dict)


class RecordList(Sequence):
    """In-memory dataset."""

    def __init__(self, records, name: str = "memory"):
        self.records = list(records)
        self.name = name

    @property
    def image_ids(self):
        return [r.image_id for r in self.records]

    def __len__(self):
        return len(self.records)

    def __getitem__(self, idx):
        return self.records[idx]


class FolderDataset(Sequence):
    """Lazily loaded image/mask folder, sorted by stem."""

    def __init__(self, root, name: str = "folder"):
        self.root = Path(root)
        self.name = name
        img_dir, mask_dir = self.root / "images", self.root / "masks"
        if not img_dir.is_dir() or not mask_dir.is_dir():
            raise DataError(f"{self.root} needs images/ and masks/ subdirectories")
        images = {p.stem: p for p in img_dir.iterdir() if p.suffix.lower() in IMAGE_EXTS}
        masks = {p.stem: p for p in mask_dir.iterdir() if p.suffix.lower() in IMAGE_EXTS}
        missing = sorted(set(images) - set(masks))
        if missing:
            raise DataError(f"image without mask in {self.root}: {', '.join(missing[:5])}")
        self.image_ids = sorted(images)
        self._pairs = [(images[s], masks[s]) for s in self.image_ids]

    def __len__(self):
        return len(self._pairs)

    def __getitem__(self, idx):
        img_path, mask_path = self._pairs[idx]
        return read_pair(self.image_ids[idx], img_path, mask_path)


def read_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def read_mask(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return (np.asarray(im.convert("L")) >= MASK_THRESHOLD).astype(np.float32)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def read_pair(image_id, img_path, mask_path) -> SampleRecord:
    raw = read_image(img_path)
    mask = read_mask(mask_path)
    if raw.shape[:2] != mask.shape:
        raise DataError(f"{image_id}: image {raw.shape[:2]} and mask {mask.shape} differ")
    return SampleRecord(image_id, normalize_image(raw), MaskTensor(mask), raw.shape[:2])


def load_dataset(spec: DatasetSpec) -> FolderDataset:
    if not Path(spec.root_path).is_dir():
        raise DataError(f"dataset root {spec.root_path!r} does not exist")
    ds = FolderDataset(spec.root_path, spec.name)
    if spec.expected_count is not None and len(ds) != spec.expected_count:
        warnings.warn(f"{spec.name}: found {len(ds)} pairs, expected {spec.expected_count}", stacklevel=2)
    return ds


class Subset(Sequence):
    def __init__(self, base, indices, name: str = "subset"):
        self.base = base
        self.indices = [int(i) for i in indices]
        self.name = name

    @property
    def image_ids(self):
        ids = self.base.image_ids
        return [ids[i] for i in self.indices]

    def __len__(self):
        return len(self.indices)

    def __getitem__(self, idx):
        return self.base[self.indices[idx]]


class Concat(Sequence):
    def __init__(self, parts, name: str = "concat"):
        self.parts = list(parts)
        self.name = name
        self._offsets = np.cumsum([0] + [len(p) for p in self.parts])

    @property
    def image_ids(self):
        return [f"{p.name}/{i}" for p in self.parts for i in p.image_ids]

    def __len__(self):
        return int(self._offsets[-1])

    def __getitem__(self, idx):
        if idx < 0:
            idx += len(self)
        part = int(np.searchsorted(self._offsets, idx, side="right")) - 1
        return self.parts[part][idx - int(self._offsets[part])]


class AccessLog(Sequence):
    """Wrapper recording every image id that is read."""

    def __init__(self, base):
        self.base = base
        self.name = getattr(base, "name", "logged")
        self.accessed: list[str] = []

    @property
    def image_ids(self):
        return self.base.image_ids

    def __len__(self):
        return len(self.base)

    def __getitem__(self, idx):
        rec = self.base[idx]
        self.accessed.append(rec.image_id)
        return rec


def make_paper_split(kvasir, clinic, seed: int = 0) -> dict[str, Sequence]:
    """900 Kvasir-SEG + 550 CVC-ClinicDB images for training, the rest for testing."""
    n_k, n_c = PAPER_TRAIN_COUNTS["kvasir_seg"], PAPER_TRAIN_COUNTS["cvc_clinicdb"]
    if len(kvasir) <= n_k or len(clinic) <= n_c:
        raise DataError(f"split needs more than {n_k}/{n_c} images, got {len(kvasir)}/{len(clinic)}")
    rng = np.random.default_rng(seed)
    perm_k = rng.permutation(len(kvasir))
    perm_c = rng.permutation(len(clinic))
    train_k = Subset(kvasir, sorted(perm_k[:n_k]), "kvasir_seg")
    train_c = Subset(clinic, sorted(perm_c[:n_c]), "cvc_clinicdb")
    return {
        "train": Concat([train_k, train_c], "train"),
        "test_kvasir": Subset(kvasir, sorted(perm_k[n_k:]), "test_kvasir"),
        "test_clinic": Subset(clinic, sorted(perm_c[n_c:]), "test_clinic"),
    }


def apply_transform(rec: SampleRecord, hflip: bool = False, vflip: bool = False, rot90: int = 0) -> SampleRecord:
    img, mask = rec.image.data, rec.mask.data
    if hflip:
        img, mask = img[:, ::-1], mask[:, ::-1]
    if vflip:
        img, mask = img[::-1], mask[::-1]
    if rot90:
        img, mask = np.rot90(img, rot90, axes=(0, 1)), np.rot90(mask, rot90)
    if not (hflip or vflip or rot90):
        return rec
    return replace(
        rec,
        image=ImageTensor(np.ascontiguousarray(img), rec.image.meta),
        mask=MaskTensor(np.ascontiguousarray(mask), rec.mask.kind),
    )


def augment(rec: SampleRecord, seed) -> SampleRecord:
    """Seeded flips and a 0/+-90 degree rotation applied to image and mask alike."""
    rng = np.random.default_rng(seed)
    hflip, vflip = (bool(b) for b in rng.random(2) < 0.5)
    rot = int(rng.integers(-1, 2))
    return apply_transform(rec, hflip, vflip, rot)


def resize_record(rec: SampleRecord, size: int) -> SampleRecord:
    if rec.image.data.shape[:2] == (size, size):
        return rec
    img = resize_bilinear(rec.image.data, (size, size))
    mask = resize_bilinear(rec.mask, (size, size))
    return replace(rec, image=ImageTensor(img.astype(np.float32), rec.image.meta), mask=mask)


# synthetic data --------------------------------------------------------------

LOW_CONTRAST = 0.2


def _blob_mask(size, rng, radius_range):
    cy, cx = rng.uniform(0.25 * size, 0.75 * size, 2)
    r0 = rng.uniform(*radius_range) * size
    yy, xx = np.mgrid[:size, :size].astype(np.float64)
    theta = np.arctan2(yy - cy, xx - cx)
    radius = r0 * (1 + 0.15 * np.cos(2 * theta + rng.uniform(0, 2 * np.pi)) + 0.08 * np.cos(3 * theta + rng.uniform(0, 2 * np.pi)))
    return np.hypot(yy - cy, xx - cx) <= radius


def _texture(size, rng):
    noise = rng.standard_normal((size, size, 3))
    smooth = ndimage.gaussian_filter(noise, sigma=(2.0, 2.0, 0))
    smooth /= smooth.std() + 1e-12
    base = np.array([0.75, 0.45, 0.40])
    return np.clip(base + 0.06 * smooth, 0, 1)


def synthetic_toy_dataset(n: int, size: int = 64, seed: int = 0, radius_range=(0.14, 0.22)) -> RecordList:
    """Blob images on a textured background with matching masks.

    Odd-indexed samples are faint-blob variants: one blob is drawn at
    20% contrast but still fully marked in the mask (``meta['low_contrast']``).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if size < 32 or size % 32:
        raise ValueError("size must be a positive multiple of 32")
    records = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        img = _texture(size, rng)
        mask = np.zeros((size, size), dtype=bool)
        n_blobs = int(rng.integers(1, 4))
        low = i % 2 == 1
        blob_masks = []
        for b in range(n_blobs):
            blob = _blob_mask(size, rng, radius_range)
            blob_masks.append(blob)
            contrast = LOW_CONTRAST if low and b == 0 else 1.0
            soft = ndimage.gaussian_filter(blob.astype(np.float64), 0.7)[..., None]
            color = np.array([0.55, 0.20, 0.15]) + 0.05 * rng.standard_normal(3)
            img = img * (1 - contrast * soft) + color * contrast * soft
            mask |= blob
        raw = np.clip(np.round(img * 255), 0, 255).astype(np.uint8)
        meta = {"low_contrast": low}
        if low:
            meta["low_contrast_blob"] = blob_masks[0]
        records.append(SampleRecord(f"toy_{i:04d}", normalize_image(raw), MaskTensor(mask.astype(np.float32)), (size, size), meta))
    return RecordList(records, "synthetic")


def write_dataset(records, root) -> Path:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    for rec in records:
        raw = np.clip(np.round(rec.image.data * 255), 0, 255).astype(np.uint8)
        Image.fromarray(raw).save(root / "images" / f"{rec.image_id}.png")
        Image.fromarray((rec.mask.data > 0.5).astype(np.uint8) * 255).save(root / "masks" / f"{rec.image_id}.png")
    return root


def batch_tensors(records, dtype=None):
    """Stack records into (N, 3, H, W) images and (N, 1, H, W) masks."""
    import torch

    imgs = np.stack([r.image.data.transpose(2, 0, 1) for r in records])
    masks = np.stack([r.mask.data[None] for r in records])
    dtype = dtype or torch.float32
    return torch.from_numpy(np.ascontiguousarray(imgs)).to(dtype), torch.from_numpy(masks).to(dtype)
