import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adsnet.data import RecordList, synthetic_toy_dataset
from adsnet.metrics import (
    MetricReport,
    UndefinedMetric,
    dice,
    evaluate_dataset,
    image_metrics,
    iou,
    mae,
    weighted_fbeta,
)
from oracles import dice_loop, iou_loop, mae_loop, wfb_definition

masks = arrays(np.bool_, st.tuples(st.integers(3, 12), st.integers(3, 12)))


def _four_by_four():
    p = np.zeros((4, 4))
    g = np.zeros((4, 4))
    p[0, :4] = 1
    g[0, 2:] = 1
    g[1, :2] = 1
    return p, g


def test_dice_identity_and_disjoint():
    g = np.zeros((6, 6))
    g[2:4, 2:4] = 1
    assert dice(g, g) == pytest.approx(1.0, abs=1e-8)
    assert dice(np.zeros_like(g), g) == 0.0


def test_dice_counting_example():
    p, g = _four_by_four()
    assert dice(p, g) == pytest.approx(0.5, abs=1e-9)


def test_iou_counting_example():
    p = np.zeros((4, 4))
    g = np.zeros((4, 4))
    p[0, :4] = 1
    g[0, 2:] = 1
    g[1, :2] = 1
    assert iou(p, g) == pytest.approx(1 / 3, abs=1e-9)


def test_empty_masks_score_one():
    z = np.zeros((5, 5))
    assert dice(z, z) == 1.0 and iou(z, z) == 1.0


def test_mae_examples(rng):
    g = np.zeros((8, 8))
    assert mae(np.full((8, 8), 0.25), g) == 0.25
    assert mae(g, g) == 0.0
    p, y = rng.random((8, 8)), rng.random((8, 8)) < 0.5
    assert abs(mae(p, y) - mae_loop(p, y)) < 1e-12


@pytest.mark.parametrize("fn", [dice, iou, mae, weighted_fbeta])
def test_shape_mismatch(fn):
    with pytest.raises(ValueError):
        fn(np.zeros((4, 4)), np.ones((4, 5)))


def test_threshold_is_inclusive():
    g = np.ones((2, 2))
    assert dice(np.full((2, 2), 0.5), g) == pytest.approx(1.0)


def test_loop_oracles_agree(rng):
    for _ in range(20):
        p = rng.random((10, 10))
        g = rng.random((10, 10)) < 0.4
        assert abs(dice(p, g) - dice_loop(p, g)) < 1e-9
        assert abs(iou(p, g) - iou_loop(p, g)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(masks, st.data())
def test_dice_iou_relation(p, data):
    g = data.draw(arrays(np.bool_, p.shape))
    if not (p.any() or g.any()):
        return
    d = dice(p, g, smooth=0.0)
    j = iou(p, g, smooth=0.0)
    assert abs(d - 2 * j / (1 + j)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(masks, st.data())
def test_symmetry_and_flip(p, data):
    g = data.draw(arrays(np.bool_, p.shape))
    pf, gf = p.astype(float), g.astype(float)
    assert dice(pf, gf) == dice(gf, pf)
    assert iou(pf, gf) == iou(gf, pf)
    assert dice(pf[:, ::-1], gf[:, ::-1]) == dice(pf, gf)
    assert iou(pf[:, ::-1], gf[:, ::-1]) == iou(pf, gf)


@settings(max_examples=200, deadline=None)
@given(masks, st.data())
def test_adding_correct_pixel_is_monotone(p, data):
    g = data.draw(arrays(np.bool_, p.shape))
    candidates = np.argwhere(g & ~p)
    if len(candidates) == 0:
        return
    r, c = candidates[data.draw(st.integers(0, len(candidates) - 1))]
    q = p.copy()
    q[r, c] = True
    assert dice(q.astype(float), g) >= dice(p.astype(float), g)
    assert iou(q.astype(float), g) >= iou(p.astype(float), g)


# weighted F-beta ---------------------------------------------------------------------


def test_wfb_identity():
    g = np.zeros((12, 12))
    g[3:8, 4:9] = 1
    assert weighted_fbeta(g, g) == pytest.approx(1.0, abs=1e-9)


def test_wfb_zero_prediction():
    g = np.zeros((12, 12))
    g[3:8, 4:9] = 1
    assert weighted_fbeta(np.zeros_like(g), g) == pytest.approx(0.0, abs=1e-9)


def test_wfb_empty_ground_truth_is_undefined():
    with pytest.raises(UndefinedMetric):
        weighted_fbeta(np.zeros((5, 5)), np.zeros((5, 5)))
    assert image_metrics("x", np.zeros((5, 5)), np.zeros((5, 5))).wfb_skipped


def test_wfb_single_misplaced_pixel():
    g = np.zeros((5, 5))
    g[2, 2] = 1
    p = np.zeros((5, 5))
    p[2, 3] = 1
    assert abs(weighted_fbeta(p, g) - wfb_definition(p, g)) <= 1e-6


def test_wfb_in_unit_interval():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        n = int(rng.integers(4, 12))
        g = rng.random((n, n)) < rng.uniform(0.05, 0.8)
        if not g.any():
            g[0, 0] = True
        v = weighted_fbeta(rng.random((n, n)), g)
        assert 0.0 <= v <= 1.0


def test_wfb_matches_definition(rng):
    for _ in range(5):
        g = rng.random((9, 11)) < 0.3
        g[4, 5] = True
        p = rng.random((9, 11))
        assert abs(weighted_fbeta(p, g) - wfb_definition(p, g)) <= 1e-6


def test_wfb_penalises_far_false_positives_more():
    g = np.zeros((20, 20))
    g[2:6, 2:6] = 1
    near, far = g.copy(), g.copy()
    near[6, 3] = 1
    far[18, 18] = 1
    assert weighted_fbeta(far, g) < weighted_fbeta(near, g)


# reports -------------------------------------------------------------------------------


def _identity_predictor(rec):
    return rec.mask.data.astype(np.float64)


def test_evaluate_identity_model():
    ds = synthetic_toy_dataset(1, 64, 0)
    rep = evaluate_dataset(_identity_predictor, ds, "toy")
    agg = rep.aggregate
    assert agg["dice"] == pytest.approx(1.0) and agg["iou"] == pytest.approx(1.0)
    assert agg["wfb"] == pytest.approx(1.0) and agg["mae"] == 0.0


def test_aggregate_is_row_mean():
    ds = synthetic_toy_dataset(2, 64, 1)
    rep = evaluate_dataset(lambda r: np.full(r.mask.data.shape, 0.7), ds)
    for key in ("dice", "iou", "wfb", "mae"):
        assert rep.aggregate[key] == pytest.approx(np.mean([getattr(m, key) for m in rep.per_image]), abs=1e-15)


def test_csv_contract_and_determinism():
    ds = synthetic_toy_dataset(3, 64, 2)
    pred = lambda r: np.clip(r.mask.data * 0.8 + 0.1, 0, 1)  # noqa: E731
    a = evaluate_dataset(pred, ds, "toy", seed=0).to_csv()
    b = evaluate_dataset(pred, ds, "toy", seed=0).to_csv()
    assert a == b
    lines = a.strip().split("\n")
    assert lines[0] == "image_id,dice,iou,wfb,mae"
    assert lines[-1].startswith("__mean__,")
    assert len(lines) == 5
    for field in lines[1].split(",")[1:]:
        assert len(field.split(".")[1]) == 6


def test_serial_and_parallel_agree():
    ds = synthetic_toy_dataset(6, 64, 4)
    pred = lambda r: np.random.default_rng(int(r.image_id[-1])).random(r.mask.data.shape)  # noqa: E731
    assert evaluate_dataset(pred, ds, workers=1).to_csv() == evaluate_dataset(pred, ds, workers=4).to_csv()


def test_rows_sorted_and_failures_listed():
    recs = list(synthetic_toy_dataset(3, 64, 0))[::-1]

    def flaky(rec):
        if rec.image_id == "toy_0001":
            raise OSError("unreadable")
        return rec.mask.data

    rep = evaluate_dataset(flaky, RecordList(recs))
    assert [m.image_id for m in rep.per_image] == ["toy_0000", "toy_0002"]
    assert rep.failures[0][0] == "toy_0001"


def test_all_failures_raise_and_empty_rejected():
    ds = synthetic_toy_dataset(1, 64, 0)
    with pytest.raises(RuntimeError):
        evaluate_dataset(lambda r: 1 / 0, ds)
    with pytest.raises(ValueError):
        evaluate_dataset(_identity_predictor, RecordList([]))


def test_table_columns_and_skip_note():
    g = np.zeros((8, 8))
    rep = MetricReport("x", 0.5, [image_metrics("a", g, g)])
    table = rep.format_table()
    header = table.split("\n")[0].split()
    assert header == ["Dataset", "Dice", "IoU", "F^w_beta", "MAE"]
    assert "skipped" in table
    assert math.isnan(rep.aggregate["wfb"])
