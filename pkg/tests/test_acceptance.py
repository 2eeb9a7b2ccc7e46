"""Acceptance criteria 1-9.

Each test carries ``@pytest.mark.acceptance(number, title)``; the terminal
summary prints one PASS/FAIL line per criterion (see ``conftest.py``).
"""

import time

import numpy as np
import pytest
import torch

from adsnet import data as D
from adsnet import engine
from adsnet.attention import ChannelAttention, SpatialAttention, partition_regions
from adsnet.config import LossConfig, PartitionConfig, RunConfig
from adsnet.core import feature_hw
from adsnet.losses import combined_loss
from adsnet.metrics import CSV_COLUMNS, TABLE_COLUMNS, MetricReport, dice, image_metrics, iou, mae, weighted_fbeta
from adsnet.model import build_model
from oracles import central_fd, dice_loop, iou_loop, mae_loop, wfb_definition

# 1 -----------------------------------------------------------------------------------


@pytest.mark.acceptance(1, "shape contract for 64/96/352 inputs, toy and paper_shape profiles")
@pytest.mark.parametrize("profile", ["toy", "paper_shape"])
def test_shape_contract(profile):
    start = time.perf_counter()
    cfg = RunConfig(encoder_profile=profile)
    model = build_model(cfg).eval()
    chans = cfg.channel_scheme
    for size in (64, 96, 352):
        x = torch.rand(1, 3, size, size, generator=torch.Generator().manual_seed(size))
        with torch.no_grad():
            pyramid = model.encoder(x)
            for level, f in enumerate(pyramid, start=1):
                side = feature_hw(size, level)
                assert side == size // 2 ** (level + 1)
                assert tuple(f.shape) == (1, chans[level - 1], side, side)
            lat = model.decoder._laterals(pyramid)
            for branch in ("semantic", "boundary", "detail"):
                b = model.decoder.branch_forward(pyramid, branch, lat)
                assert tuple(b.shape) == (1, cfg.decoder_width, size // 4, size // 4)
            for g in model.attention.gated_features(pyramid):
                assert tuple(g.shape) == (1, cfg.decoder_width, size // 4, size // 4)
            out = model(x)
            for t in out:
                assert tuple(t.shape) == (1, 1, size // 4, size // 4)
            prob = model.predict_proba(x)
            assert tuple(prob.shape) == (1, 1, size, size)
            assert torch.all((prob >= 0) & (prob <= 1))
    assert time.perf_counter() - start < 60


# 2 -----------------------------------------------------------------------------------


def _rel(a, n):
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


@pytest.mark.acceptance(2, "gradient check: loss inputs <= 1e-4, toy model parameters <= 1e-3")
@pytest.mark.parametrize("seed", range(5))
def test_gradient_loss_inputs(seed):
    rng = np.random.default_rng(seed)
    y = torch.tensor((rng.random((8, 8)) < 0.5).astype(np.float64))
    p0 = rng.uniform(0.05, 0.95, (8, 8))
    cfg = LossConfig()
    p = torch.tensor(p0, requires_grad=True)
    combined_loss(y, p, cfg).backward()
    numeric = central_fd(lambda q: combined_loss(y, torch.tensor(q), cfg).item(), p0)
    assert _rel(p.grad.numpy(), numeric).max() <= 1e-4


@pytest.mark.acceptance(2, "gradient check: loss inputs <= 1e-4, toy model parameters <= 1e-3")
@pytest.mark.parametrize("seed", range(3))
def test_gradient_full_model(seed):
    # 32x32 is the smallest input the stride-32 encoder accepts; its stride-4 heads are 8x8
    cfg = RunConfig(image_size=32, seed=seed)
    model = build_model(cfg).double()
    gen = torch.Generator().manual_seed(seed)
    x = torch.rand(1, 3, 32, 32, generator=gen, dtype=torch.float64)
    y = (torch.rand(1, 1, 8, 8, generator=gen, dtype=torch.float64) < 0.5).double()

    def loss():
        return engine.head_losses(model, x, y, cfg)[0]

    model.zero_grad()
    loss().backward()
    # entries behind inactive ReLUs have an exact zero gradient and test nothing
    entries = [(p, tuple(i)) for p in model.parameters() for i in torch.nonzero(p.grad).tolist()]
    rng = np.random.default_rng(seed)
    h = 1e-4
    for k in rng.choice(len(entries), 10, replace=False):
        p, idx = entries[k]
        auto = p.grad[idx].item()
        with torch.no_grad():
            orig = p[idx].item()
            p[idx] = orig + h
            up = loss().item()
            p[idx] = orig - h
            down = loss().item()
            p[idx] = orig
        assert _rel(auto, (up - down) / (2 * h)) <= 1e-3


# 3 -----------------------------------------------------------------------------------


@pytest.mark.acceptance(3, "metric oracle equivalence")
def test_metric_oracles():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        pred = rng.random((16, 16)) * (rng.random((16, 16)) < rng.uniform(0.1, 0.9))
        gt = rng.random((16, 16)) < rng.uniform(0.05, 0.6)
        assert abs(dice(pred, gt) - dice_loop(pred, gt)) <= 1e-9
        assert abs(iou(pred, gt) - iou_loop(pred, gt)) <= 1e-9
        assert abs(mae(pred, gt) - mae_loop(pred, gt)) <= 1e-9
        d, j = dice(pred, gt, smooth=0.0), iou(pred, gt, smooth=0.0)
        assert abs(d - 2 * j / (1 + j)) <= 1e-12
    for _ in range(20):
        pred = rng.random((16, 16))
        gt = rng.random((16, 16)) < rng.uniform(0.05, 0.5)
        gt[rng.integers(16), rng.integers(16)] = True
        assert abs(weighted_fbeta(pred, gt) - wfb_definition(pred, gt)) <= 1e-6


# 4 -----------------------------------------------------------------------------------


@pytest.mark.acceptance(4, "partition invariants")
def test_partition_invariants():
    gen = torch.Generator().manual_seed(4)
    soft, hard = PartitionConfig("soft"), PartitionConfig("hard")
    for _ in range(1000):
        p = torch.rand(1, 1, 6, 6, generator=gen, dtype=torch.float64)
        p[0, 0, 0, 0] = 0.5
        s, w = partition_regions(p, soft)
        assert torch.equal(s, p)
        assert torch.equal(w, 1 - (2 * p - 1).abs())
        assert w[0, 0, 0, 0] == 1.0 and w.max() == 1.0
        s, w = partition_regions(p, hard)
        assert torch.all(s * w == 0)
        assert w[0, 0, 0, 0] == w.max() == 1.0


# 5 -----------------------------------------------------------------------------------


@pytest.mark.acceptance(5, "channel and spatial gate properties")
def test_gate_properties():
    rng = np.random.default_rng(5)
    for trial in range(25):
        c = int(rng.choice([4, 8, 12, 32]))
        h, w = (int(v) for v in rng.integers(1, 20, 2))
        torch.manual_seed(trial)
        ca, sa = ChannelAttention(c).double(), SpatialAttention().double()
        x = torch.randn(2, c, h, w, dtype=torch.float64)
        z = torch.zeros_like(x)
        with torch.no_grad():
            for mod in (ca, sa):
                assert torch.equal(mod(z), z)
                out = mod(x)
                assert out.shape == x.shape
                g = mod.gate(x)
                assert torch.all((g > 0) & (g < 1))


# 6 / 7 -------------------------------------------------------------------------------


OVERFIT = {
    "image_size": 64,
    "seed": 0,
    "train.lr": 1e-3,
    "train.iterations": 500,
    "train.schedule": "cosine",
    "train.augment": False,
    "train.batch_size": 8,
    "train.deterministic": True,
    "data.synthetic_n": 8,
    "data.synthetic_seed": 0,
}


@pytest.fixture(scope="module")
def overfit():
    cfg = RunConfig().override(**OVERFIT)
    dataset = D.synthetic_toy_dataset(8, 64, 0)
    start = time.perf_counter()
    result = engine.train(cfg, dataset=dataset)
    return cfg, dataset, result, time.perf_counter() - start


def _dice_per_sample(model, dataset, drop=()):
    predict = engine.model_predictor(model, 64, drop)
    return {rec.image_id: dice(predict(rec), rec.mask.data) for rec in dataset}


@pytest.mark.slow
@pytest.mark.acceptance(6, "overfit toy set: Dice >= 0.95 per sample, windowed loss decreasing")
def test_overfit(overfit):
    cfg, dataset, result, seconds = overfit
    assert seconds < 600
    scores = _dice_per_sample(result.model, dataset)
    low = [rec.image_id for rec in dataset if rec.meta["low_contrast"]]
    assert low
    assert all(v >= 0.95 for v in scores.values()), scores
    losses = result.log.losses
    assert len(losses) == cfg.train.iterations
    windows = losses.reshape(-1, 10).mean(axis=1)
    assert np.all(np.diff(windows) < 0), windows


@pytest.mark.slow
@pytest.mark.acceptance(7, "dropping OS at inference does not help low-contrast samples")
def test_ablation_direction(overfit):
    _, dataset, result, _ = overfit
    low = D.RecordList([r for r in dataset if r.meta["low_contrast"]])
    full = np.mean(list(_dice_per_sample(result.model, low).values()))
    no_os = np.mean(list(_dice_per_sample(result.model, low, ("os",)).values()))
    assert full >= no_os - 0.02


# 8 -----------------------------------------------------------------------------------


@pytest.mark.acceptance(8, "identical train logs and bit-exact checkpoint round trip")
def test_determinism(tmp_path):
    cfg = RunConfig().override(**{
        "image_size": 64, "train.iterations": 6, "train.batch_size": 4, "train.lr": 1e-3,
        "train.deterministic": True, "train.checkpoint_every": 3, "data.synthetic_n": 6,
    })
    a = engine.train(cfg, tmp_path / "a")
    b = engine.train(cfg, tmp_path / "b")
    assert a.log.entries == b.log.entries
    model, loaded_cfg, _ = engine.load_checkpoint(a.checkpoint)
    assert loaded_cfg == cfg
    x = torch.rand(3, 3, 64, 64, generator=torch.Generator().manual_seed(8))
    with torch.no_grad():
        before, after = a.model(x), model(x)
    assert all(torch.equal(u, v) for u, v in zip(before, after))


# 9 -----------------------------------------------------------------------------------


class _Index:
    def __init__(self, name, n):
        self.name = name
        self.image_ids = [f"{i:04d}" for i in range(n)]

    def __len__(self):
        return len(self.image_ids)


@pytest.mark.acceptance(9, "report format and split counts (published scores not reproduced)")
def test_report_format_and_split():
    assert [title for title, _ in TABLE_COLUMNS] == ["Dice", "IoU", "F^w_beta", "MAE"]
    assert CSV_COLUMNS == ("image_id", "dice", "iou", "wfb", "mae")
    gt = np.zeros((8, 8))
    gt[2:5, 2:5] = 1
    report = MetricReport("Kvasir-SEG", 0.5, [image_metrics("a", gt, gt)])
    assert report.to_csv().split("\n")[0] == "image_id,dice,iou,wfb,mae"
    assert report.format_table().split("\n")[0].split() == ["Dataset", "Dice", "IoU", "F^w_beta", "MAE"]
    split = D.make_paper_split(_Index("kvasir_seg", 1000), _Index("cvc_clinicdb", 612), seed=0)
    assert {k: len(v) for k, v in split.items()} == {"train": 1450, "test_kvasir": 100, "test_clinic": 62}
    assert D.EXPECTED_COUNTS["etis"] == 196 and D.EXPECTED_COUNTS["cvc_colondb"] == 380
