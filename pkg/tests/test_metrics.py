"""Circular angle statistics, PSNR and inspection exports."""

import numpy as np
import pytest

from ineat.field import DenseVolume
from ineat.geometry import AngleSequence, uniform_angles
from ineat.metrics import (angle_error, circular_mean_deg, mip_triview, psnr,
                           sine_curve_table, wrap_degrees)

RNG = np.random.default_rng(42)


class TestWrap:
    def test_range(self):
        x = RNG.uniform(-1000, 1000, 500)
        w = wrap_degrees(x)
        assert np.all(w > -180.0) and np.all(w <= 180.0)

    def test_identity_inside_range(self):
        x = np.array([-179.9, -10.0, 0.0, 10.0, 180.0])
        assert np.allclose(wrap_degrees(x), x, atol=1e-12)

    def test_period(self):
        x = np.array([12.5, -33.0, 170.0])
        assert np.allclose(wrap_degrees(x + 720.0), wrap_degrees(x))

    def test_half_turn_lands_on_positive_side(self):
        assert wrap_degrees(-180.0) == 180.0
        assert wrap_degrees(540.0) == 180.0


class TestCircularMean:
    def test_plain_average_for_small_spread(self):
        assert abs(circular_mean_deg([10.0, 20.0]) - 15.0) < 1e-12

    def test_wraparound_cluster(self):
        # values straddling the seam must not average to ~0
        m = circular_mean_deg([359.0, 1.0])
        assert abs(wrap_degrees(m - 0.0)) < 1e-9

    def test_shift_equivariance(self):
        x = RNG.uniform(-20, 20, 50)
        m0 = circular_mean_deg(x)
        m1 = circular_mean_deg(x + 77.0)
        assert abs(wrap_degrees(m1 - m0 - 77.0)) < 1e-9


class TestPsnr:
    def test_known_value(self):
        # MSE 0.01 against a unit-max reference is exactly 20 dB
        ref = np.zeros((10, 10))
        ref[0, 0] = 1.0
        test = ref + 0.1
        test[0, 0] = 1.1
        assert abs(psnr(test, ref) - 20.0) < 1e-9

    def test_identical_images_hit_the_cap(self):
        ref = RNG.random((16, 16))
        assert psnr(ref.copy(), ref) == 120.0

    def test_monotone_in_noise(self):
        ref = RNG.random((16, 16))
        a = psnr(ref + 0.01 * RNG.standard_normal(ref.shape), ref)
        b = psnr(ref + 0.1 * RNG.standard_normal(ref.shape), ref)
        assert a > b

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_constant_reference_rejected(self):
        with pytest.raises(ValueError):
            psnr(np.ones((4, 4)), np.ones((4, 4)))


class TestAngleError:
    def test_pure_offset_vanishes(self):
        truth = uniform_angles(36, 10.0)
        shifted = AngleSequence(truth.angles_deg + 25.0, "corrected")
        rep = angle_error(shifted, truth)
        assert abs(rep.global_offset_deg - 25.0) < 1e-9
        assert rep.rmse_deg < 1e-9
        assert rep.max_abs_deg < 1e-9

    def test_residuals_after_offset_removal(self):
        truth = uniform_angles(4, 90.0)
        est = AngleSequence(truth.angles_deg + 10.0
                            + np.array([-1.0, 1.0, -1.0, 1.0]), "corrected")
        rep = angle_error(est, truth)
        assert abs(rep.global_offset_deg - 10.0) < 1e-9
        assert abs(rep.rmse_deg - 1.0) < 1e-9
        assert abs(rep.max_abs_deg - 1.0) < 1e-9
        assert np.allclose(rep.residuals_deg, [-1.0, 1.0, -1.0, 1.0])

    def test_estimates_across_the_seam(self):
        truth = uniform_angles(3, 120.0)
        est = AngleSequence(truth.angles_deg + 359.5, "corrected")
        rep = angle_error(est, truth)
        assert abs(wrap_degrees(rep.global_offset_deg + 0.5)) < 1e-9
        assert rep.rmse_deg < 1e-9

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            angle_error(uniform_angles(4, 90.0), uniform_angles(5, 72.0))


class TestSineTable:
    def test_full_rows(self):
        assumed = uniform_angles(4, 90.0)
        truth = AngleSequence(assumed.angles_deg + 1.0, "corrected")
        corr = AngleSequence(assumed.angles_deg + 0.5, "corrected")
        rows = sine_curve_table(assumed, truth, corr)
        assert len(rows) == 4
        i, a, t, c, sa, st, sc = rows[1]
        assert (i, a, t, c) == (1, 90.0, 91.0, 90.5)
        assert abs(sa - 1.0) < 1e-12
        assert abs(st - np.sin(np.deg2rad(91.0))) < 1e-12
        assert abs(sc - np.sin(np.deg2rad(90.5))) < 1e-12

    def test_missing_sequences_leave_holes(self):
        rows = sine_curve_table(uniform_angles(2, 10.0), None, None)
        assert rows[0][2] is None and rows[0][3] is None
        assert rows[0][5] is None and rows[0][6] is None

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            sine_curve_table(uniform_angles(3, 10.0),
                             uniform_angles(4, 10.0), None)


class TestMipTriview:
    def test_axis_maxima(self):
        data = np.zeros((8, 8, 8))
        data[2, 3, 4] = 5.0
        mx, my, mz = mip_triview(DenseVolume(data))
        assert mx.shape == my.shape == mz.shape == (8, 8)
        assert mx[3, 4] == 5.0 and mx.sum() == 5.0
        assert my[2, 4] == 5.0 and my.sum() == 5.0
        assert mz[2, 3] == 5.0 and mz.sum() == 5.0
