"""Training loop, checkpoints and inference helpers."""

from __future__ import annotations

import logging
import math
import pickle
import queue
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import data as D
from .config import RunConfig
from .core import resize_bilinear
from .errors import ConfigError, DataError, NumericError
from .losses import total_training_loss
from .model import ADSNet, build_model

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
DATASET_NAMES = ("synthetic", "kvasir_seg", "cvc_clinicdb", "etis", "cvc_colondb", "train", "test_kvasir", "test_clinic")


def set_deterministic(flag: bool = True) -> None:
    torch.use_deterministic_algorithms(flag)
    torch.backends.cudnn.benchmark = not flag


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


# datasets ------------------------------------------------------------------------


def resolve_dataset(cfg: RunConfig, name: str):
    if name == "synthetic":
        if cfg.data.synthetic_root:
            return D.load_dataset(D.DatasetSpec("synthetic", cfg.data.synthetic_root))
        return D.synthetic_toy_dataset(cfg.data.synthetic_n, cfg.image_size, cfg.data.synthetic_seed)
    if name in D.EXPECTED_COUNTS:
        root = getattr(cfg.data, name)
        if not root:
            raise DataError(f"no root configured for {name} (set data.{name})")
        return D.load_dataset(D.DatasetSpec(name, root))
    if name in ("train", "paper_split", "test_kvasir", "test_clinic"):
        split = D.make_paper_split(resolve_dataset(cfg, "kvasir_seg"), resolve_dataset(cfg, "cvc_clinicdb"), cfg.data.split_seed)
        return split["train" if name == "paper_split" else name]
    raise DataError(f"unknown dataset {name!r}")


def training_dataset(cfg: RunConfig):
    return resolve_dataset(cfg, "paper_split" if cfg.data.train == "paper_split" else cfg.data.train)


# logs and checkpoints ------------------------------------------------------------


@dataclass
class TrainLog:
    entries: list[dict] = field(default_factory=list)
    timestamps: list[float] = field(default_factory=list)

    def append(self, entry: dict) -> None:
        if self.entries and entry["iteration"] <= self.entries[-1]["iteration"]:
            raise ValueError("iterations must be strictly increasing")
        self.entries.append(entry)
        self.timestamps.append(time.time())

    @property
    def losses(self) -> np.ndarray:
        return np.array([e["loss"] for e in self.entries])

    def to_csv(self, with_time: bool = True) -> str:
        if not self.entries:
            return ""
        keys = list(self.entries[0])
        lines = [",".join(keys + (["wall_time"] if with_time else []))]
        for e, t in zip(self.entries, self.timestamps):
            row = [repr(e[k]) if isinstance(e[k], float) else str(e[k]) for k in keys]
            lines.append(",".join(row + ([f"{t:.3f}"] if with_time else [])))
        return "\n".join(lines) + "\n"


def _rng_states() -> dict:
    return {"torch": torch.get_rng_state(), "numpy": np.random.get_state(), "python": random.getstate()}


def save_checkpoint(path, model: ADSNet, cfg: RunConfig, optimizer=None, iteration: int = 0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format_version": CHECKPOINT_VERSION,
            "config": cfg.dumps(),
            "params": model.state_dict(),
            "optimizer": optimizer.state_dict() if optimizer is not None else None,
            "iteration": iteration,
            "rng": _rng_states(),
        },
        path,
    )
    return path


def load_checkpoint(path) -> tuple[ADSNet, RunConfig, dict]:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError, pickle.UnpicklingError, EOFError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("format_version") if isinstance(payload, dict) else None
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"checkpoint format {version} is not supported (expected {CHECKPOINT_VERSION})")
    cfg = RunConfig.loads(payload["config"]).validate()
    model = build_model(cfg)
    model.load_state_dict(payload["params"])
    model.eval()
    return model, cfg, payload


# training ------------------------------------------------------------------------


def head_losses(model: ADSNet, imgs: torch.Tensor, masks: torch.Tensor, cfg: RunConfig):
    out = model(imgs)
    size = masks.shape[-2:]
    probs = {k: torch.sigmoid(resize_bilinear(v, size)) for k, v in out.head_logits().items()}
    return total_training_loss(masks, probs, cfg.loss)


def _batches(dataset, cfg: RunConfig, start: int = 0):
    """Yield (iteration, records) with a seeded order and seeded augmentation."""
    n = len(dataset)
    bs = min(cfg.train.batch_size, n)
    rng = np.random.default_rng([cfg.seed, 1])
    order, pos = rng.permutation(n), 0
    for it in range(cfg.train.iterations):
        if pos + bs > n:
            order, pos = rng.permutation(n), 0
        idx = order[pos : pos + bs]
        pos += bs
        if it < start:
            continue
        recs = [D.resize_record(dataset[int(i)], cfg.image_size) for i in idx]
        if cfg.train.augment:
            recs = [D.augment(r, [cfg.seed, it, j]) for j, r in enumerate(recs)]
        yield it, recs


def _prefetch(gen, depth: int = 2):
    """Run ``gen`` in a worker thread behind a bounded queue (order preserved)."""
    q: queue.Queue = queue.Queue(maxsize=depth)
    done = object()

    def worker():
        try:
            for item in gen:
                q.put(item)
        except BaseException as exc:  # noqa: BLE001 - re-raised in the consumer
            q.put(exc)
        q.put(done)

    threading.Thread(target=worker, daemon=True).start()
    while (item := q.get()) is not done:
        if isinstance(item, BaseException):
            raise item
        yield item


@dataclass
class TrainResult:
    model: ADSNet
    log: TrainLog
    checkpoint: Path | None


def train(cfg: RunConfig, out_dir=None, dataset=None, prefetch: int = 2) -> TrainResult:
    """Optimise the full network with the weighted multi-head loss.

    Aborts with ``NumericError`` on a non-finite loss, dumping the batch to
    ``out_dir/nan_batch.npz`` when ``out_dir`` is given.
    """
    cfg.validate()
    if cfg.train.deterministic:
        set_deterministic(True)
    seed_everything(cfg.seed)
    dataset = training_dataset(cfg) if dataset is None else dataset
    if len(dataset) == 0:
        raise DataError("training dataset is empty")
    out_dir = Path(out_dir) if out_dir is not None else None

    model = build_model(cfg)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.train.lr)
    total_iters = cfg.train.iterations
    if cfg.train.schedule == "cosine":
        scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lambda i: 0.5 * (1 + math.cos(math.pi * i / total_iters)))
    else:
        scheduler = None

    trainlog = TrainLog()
    ckpt = None
    batches = _batches(dataset, cfg)
    if prefetch:
        batches = _prefetch(batches, prefetch)
    for it, recs in batches:
        imgs, masks = D.batch_tensors(recs)
        lr = optimizer.param_groups[0]["lr"]
        loss, per_head = head_losses(model, imgs, masks, cfg)
        if not torch.isfinite(loss):
            dump = None
            if out_dir is not None:
                out_dir.mkdir(parents=True, exist_ok=True)
                dump = out_dir / "nan_batch.npz"
                np.savez(dump, images=imgs.numpy(), masks=masks.numpy(), ids=np.array([r.image_id for r in recs]))
            raise NumericError(
                f"non-finite loss at iteration {it} (lr={lr:g}, images={[r.image_id for r in recs]}); batch dumped to {dump}"
            )
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        if scheduler is not None:
            scheduler.step()
        if it % cfg.train.log_every == 0 or it == total_iters - 1:
            entry = {"iteration": it, "loss": float(loss.detach()), "lr": float(lr)}
            entry.update({f"loss_{k}": float(v.detach()) for k, v in per_head.items()})
            trainlog.append(entry)
            log.debug("iter %d loss %.5f", it, entry["loss"])
        if out_dir is not None and ((it + 1) % cfg.train.checkpoint_every == 0 or it == total_iters - 1):
            ckpt = save_checkpoint(out_dir / "checkpoint.pt", model, cfg, optimizer, it + 1)
    if out_dir is not None:
        (out_dir / "trainlog.csv").write_text(trainlog.to_csv())
    model.eval()
    return TrainResult(model, trainlog, ckpt)


# inference ------------------------------------------------------------------------


def model_predictor(model: ADSNet, image_size: int, drop: tuple[str, ...] = ()):
    """``record -> probability map`` at the record's mask resolution."""
    dtype = next(model.parameters()).dtype

    def predict(rec):
        img = resize_bilinear(rec.image.data, (image_size, image_size))
        x = torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)))[None].to(dtype)
        with torch.no_grad():
            logits = model(x, drop=drop).final
            prob = torch.sigmoid(resize_bilinear(logits, rec.mask.data.shape))
        return prob[0, 0].double().numpy()

    return predict
