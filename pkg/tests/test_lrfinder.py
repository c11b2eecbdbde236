from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cxrpipe.errors import NoDescentError, ValidationError
from cxrpipe.lrfinder import (Rule, StopReason, SweepPoint, SweepRecord, lr_range_test, select_lr,
                              sweep_lrs)

import quadratic


def record_from_curve(lrs, smoothed, stop=StopReason.COMPLETED):
    return SweepRecord([SweepPoint(i, float(lr), float(s), float(s))
                        for i, (lr, s) in enumerate(zip(lrs, smoothed))], stop)


class TestSweepLrs:
    def test_endpoints_and_geometry(self):
        lrs = sweep_lrs(1e-5, 10.0, 200)
        assert lrs[0] == 1e-5
        assert lrs[-1] == pytest.approx(10.0, rel=1e-12)
        np.testing.assert_allclose(lrs, 1e-5 * (1e6) ** (np.arange(200) / 199), rtol=1e-12)
        assert np.all(np.diff(lrs) > 0)


class TestRangeTest:
    def test_quadratic_diverges_and_selection_trains(self):
        rec = lr_range_test(quadratic.Quadratic(), quadratic.stream(), quadratic.loss_fn, momentum=0.0)
        assert rec.stop_reason is StopReason.DIVERGED
        lr = select_lr(rec)
        assert 0 < lr < 2 / quadratic.LAMBDA
        losses = quadratic.train(quadratic.Quadratic(), lr, 100)
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_smoothing_recomputed(self):
        beta = 0.9
        rec = lr_range_test(quadratic.Quadratic(), quadratic.stream(), quadratic.loss_fn, num_iters=40,
                            beta=beta, momentum=0.0)
        s = 0.0
        for i, p in enumerate(rec.points):
            s = beta * s + (1 - beta) * p.raw_loss
            assert p.smoothed_loss == pytest.approx(s / (1 - beta ** (i + 1)), rel=1e-12)

    def test_beta_zero_smoothed_equals_raw(self):
        rec = lr_range_test(quadratic.Quadratic(), quadratic.stream(), quadratic.loss_fn, num_iters=30,
                            beta=0.0, momentum=0.0)
        np.testing.assert_array_equal(rec.smoothed, rec.raw)

    def test_lrs_follow_geometric_schedule(self):
        rec = lr_range_test(quadratic.Quadratic(), quadratic.stream(), quadratic.loss_fn, 1e-4, 1.0, 50,
                            momentum=0.0)
        np.testing.assert_array_equal(rec.lrs, sweep_lrs(1e-4, 1.0, 50)[:len(rec.points)])

    def test_caller_model_untouched(self):
        model = quadratic.Quadratic(0.7)
        before = model.w.data.copy()
        lr_range_test(model, quadratic.stream(), quadratic.loss_fn, num_iters=50)
        np.testing.assert_array_equal(model.w.data, before)
        np.testing.assert_array_equal(model.w.grad, 0.0)

    def test_short_stream_completes(self):
        rec = lr_range_test(quadratic.Quadratic(), [None] * 12, quadratic.loss_fn, num_iters=200)
        assert len(rec.points) == 12
        assert rec.stop_reason is StopReason.COMPLETED

    def test_empty_stream(self):
        with pytest.raises(ValidationError):
            lr_range_test(quadratic.Quadratic(), [], quadratic.loss_fn)

    @pytest.mark.parametrize("kwargs", [dict(lr_start=1.0, lr_end=0.1), dict(num_iters=5),
                                        dict(beta=1.0), dict(divergence_factor=1.0)])
    def test_invalid_arguments(self, kwargs):
        with pytest.raises(ValidationError):
            lr_range_test(quadratic.Quadratic(), quadratic.stream(), quadratic.loss_fn, **kwargs)

    def test_csv(self, tmp_path):
        rec = lr_range_test(quadratic.Quadratic(), quadratic.stream(), quadratic.loss_fn, num_iters=20)
        rec.write_csv(tmp_path / "sweep.csv")
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == "iteration,lr,raw_loss,smoothed_loss"
        assert len(lines) == len(rec.points) + 1


class TestSelect:
    def test_v_shape_min_over_ten(self):
        lrs = sweep_lrs(1e-4, 1.0, 41)
        star = lrs[25]
        smooth = np.abs(np.log(lrs) - np.log(star)) + 1.0
        assert select_lr(record_from_curve(lrs, smooth), Rule.MIN_OVER_TEN) == pytest.approx(star / 10, rel=1e-15)

    def test_steepest_picks_largest_drop(self):
        lrs = sweep_lrs(1e-3, 1.0, 20)
        smooth = np.linspace(5, 4, 20)
        smooth[12:] -= 1.0  # cliff between points 11 and 12
        assert select_lr(record_from_curve(lrs, smooth)) == lrs[11]

    def test_steepest_falls_back_when_few_descents(self):
        lrs = sweep_lrs(1e-3, 1.0, 20)
        smooth = np.full(20, 2.0)
        smooth[5], smooth[6] = 1.5, 1.2
        smooth[7:] = 3.0
        rec = record_from_curve(lrs, smooth)
        assert select_lr(rec, Rule.STEEPEST) == select_lr(rec, Rule.MIN_OVER_TEN) == lrs[6] / 10

    def test_diverged_point_ignored(self):
        lrs = sweep_lrs(1e-3, 1.0, 15)
        smooth = np.linspace(3, 1, 15)
        smooth[-1] = -100.0  # would be the minimum if counted
        rec = record_from_curve(lrs, smooth, StopReason.DIVERGED)
        assert select_lr(rec, Rule.MIN_OVER_TEN) == lrs[-2] / 10

    def test_monotone_increasing_raises(self):
        lrs = sweep_lrs(1e-3, 1.0, 20)
        with pytest.raises(NoDescentError):
            select_lr(record_from_curve(lrs, np.linspace(1, 2, 20)))

    def test_too_few_points(self):
        lrs = sweep_lrs(1e-3, 1.0, 9)
        with pytest.raises(ValidationError):
            select_lr(record_from_curve(lrs, np.linspace(2, 1, 9)))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.01, 100), min_size=10, max_size=60), st.sampled_from(list(Rule)))
    def test_selected_positive_and_below_last(self, losses, rule):
        lrs = sweep_lrs(1e-5, 10.0, len(losses))
        rec = record_from_curve(lrs, losses)
        try:
            lr = select_lr(rec, rule)
        except NoDescentError:
            assert all(b >= a for a, b in zip(losses, losses[1:]))
            return
        assert 0 < lr <= lrs[-1]
        assert math.isfinite(lr)
