"""Patch evaluation protocol: error maps, confusion counts, score sweeps."""

import numpy as np
import pytest

from qipfseg import metrics
from qipfseg.errors import InvalidPatch, InvalidRange, ShapeMismatch


def test_error_map():
    truth = np.array([[0, 1], [2, 0]])
    assert not metrics.error_map(truth, truth).any()
    preds = truth.copy()
    preds[0, 1] = 0
    em = metrics.error_map(preds, truth)
    assert em.sum() == 1 and em[0, 1]
    with pytest.raises(ShapeMismatch):
        metrics.error_map(truth, truth[:1])


def test_patch_reduce_mean():
    m = np.arange(16, dtype=float).reshape(4, 4)
    out = metrics.patch_reduce(m, 2, "mean")
    assert out.shape == (2, 2)
    assert out[0, 0] == pytest.approx(np.mean([0, 1, 4, 5]))
    const = metrics.patch_reduce(np.full((6, 6), 0.3), 3, "mean")
    np.testing.assert_allclose(const, 0.3)


def test_patch_reduce_strict_majority():
    # 2x2 patch with exactly half correct is NOT accurate
    half = np.array([[True, True], [False, False]])
    assert not metrics.patch_reduce(half, 2, "accurate_flag")[0, 0]
    # 9 of 16 correct is accurate
    nine = np.zeros((4, 4), dtype=bool)
    nine.ravel()[:9] = True
    assert metrics.patch_reduce(nine, 4, "accurate_flag")[0, 0]


def test_patch_reduce_partial_patches():
    # 5x5 with patch 2: trailing patches count their true pixel totals
    m = np.ones((5, 5), dtype=bool)
    out = metrics.patch_reduce(m, 2, "accurate_flag")
    assert out.shape == (3, 3)
    assert out.all()
    vals = metrics.patch_reduce(np.ones((5, 5)), 2, "mean")
    np.testing.assert_allclose(vals, 1.0)


def test_patch_reduce_validation():
    with pytest.raises(InvalidPatch):
        metrics.patch_reduce(np.ones((4, 4)), 0, "mean")


def test_threshold_value():
    assert metrics.threshold_value(0.2, 0.8, 0.0) == pytest.approx(0.2)
    assert metrics.threshold_value(0.2, 0.8, 1.0) == pytest.approx(0.8)
    assert metrics.threshold_value(0.2, 0.8, 0.5) == pytest.approx(0.5)
    with pytest.raises(InvalidRange):
        metrics.threshold_value(0.9, 0.1, 0.5)


def test_confusion_worked_example():
    flags = np.array([True, True, True, False, False, True])
    unc = np.array([0.1, 0.9, 0.2, 0.8, 0.1, 0.9])
    c = metrics.confusion(flags, unc, 0.5)
    assert (c.n_ac, c.n_au, c.n_ic, c.n_iu) == (2, 2, 1, 1)
    empty = metrics.confusion(np.array([], dtype=bool), np.array([]), 0.5)
    assert empty.total == 0


def test_scores_worked_example():
    c = metrics.ConfusionCounts(3, 1, 1, 2)
    s = metrics.scores(c)
    assert s["PA"] == pytest.approx(0.75, abs=1e-4)
    assert s["PU"] == pytest.approx(0.6667, abs=1e-4)
    assert s["PAvPU"] == pytest.approx(0.7143, abs=1e-4)
    undef = metrics.scores(metrics.ConfusionCounts(0, 0, 0, 0))
    assert undef["PA"] is None and undef["PU"] is None and undef["PAvPU"] is None


def brute_force_counts(flags, unc, u_th):
    n_ac = n_au = n_ic = n_iu = 0
    for a, u in zip(flags, unc):
        uncertain = u >= u_th
        if a and not uncertain:
            n_ac += 1
        elif a and uncertain:
            n_au += 1
        elif not a and not uncertain:
            n_ic += 1
        else:
            n_iu += 1
    return n_ac, n_au, n_ic, n_iu


def test_confusion_matches_brute_force_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = rng.integers(1, 60)
        flags = rng.random(n) < 0.7
        unc = rng.random(n)
        u_th = rng.random()
        c = metrics.confusion(flags, unc, u_th)
        assert (c.n_ac, c.n_au, c.n_ic, c.n_iu) == brute_force_counts(flags, unc, u_th)
        assert c.total == n


def test_sweep_properties():
    rng = np.random.default_rng(1)
    flags = rng.random(100) < 0.8
    unc = rng.random(100)
    sw = metrics.sweep(flags, unc, unc.min(), unc.max())
    assert len(sw.t_values) == 21
    acc_total = sw.counts[0].n_ac + sw.counts[0].n_au
    prev_uncertain = None
    for c, s in zip(sw.counts, sw.scores):
        assert c.n_ac + c.n_au == acc_total  # accuracy partition fixed
        uncertain = c.n_au + c.n_iu
        if prev_uncertain is not None:
            assert uncertain <= prev_uncertain  # non-increasing in t
        prev_uncertain = uncertain
        for v in s.values():
            assert v is None or 0.0 <= v <= 1.0


def test_sweep_validation():
    flags = np.array([True, False])
    unc = np.array([0.1, 0.9])
    with pytest.raises(InvalidRange):
        metrics.sweep(flags, unc, 0.0, 1.0, t_grid=(0.5, 0.5))
    with pytest.raises(InvalidRange):
        metrics.sweep(flags, unc, 0.0, 1.0, t_grid=(-0.1, 0.5))
    two = metrics.sweep(flags, unc, 0.0, 1.0, t_grid=(0.0, 1.0))
    assert len(two.counts) == 2


def test_average_scores_skips_undefined():
    flags = np.ones(4, dtype=bool)  # no inaccurate patches: PU undefined
    unc = np.array([0.1, 0.2, 0.3, 0.4])
    sw = metrics.sweep(flags, unc, 0.1, 0.4, t_grid=(0.0, 0.5, 1.0))
    avg = metrics.average_scores(sw)
    assert avg["PU"] is None
    assert avg["PA"] == pytest.approx(1.0)
