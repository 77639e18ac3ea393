from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from affectfuse.core import (
    AnnotationTrace,
    RaterSet,
    resample,
    resample_values,
    savgol_smooth,
    savitzky_golay,
    standardize,
    standardize_values,
)
from affectfuse.errors import ParameterError


def trace(values, rate=2.0, rater="r0", kind="arousal"):
    return AnnotationTrace(rater_id=rater, sample_rate_hz=rate, values=np.asarray(values, dtype=np.float64), kind=kind)


class TestAnnotationTrace:
    def test_basic_fields(self):
        t = trace([0.0, 1.0, 2.0])
        assert len(t) == 3
        assert t.duration_s == pytest.approx(1.0)
        assert t.values.dtype == np.float64

    def test_values_are_read_only_copies(self):
        src = np.array([0.0, 1.0])
        t = trace(src)
        src[0] = 99.0
        assert t.values[0] == 0.0
        with pytest.raises(ValueError):
            t.values[0] = 5.0

    def test_timestamps_are_rounded_millis(self):
        t = trace([0.0] * 5, rate=3.0)
        assert t.timestamps_ms().tolist() == [0, 333, 667, 1000, 1333]
        assert t.timestamps_ms().dtype == np.int64

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(values=np.array([[1.0, 2.0]])),
            dict(values=np.array([1.0, np.nan])),
            dict(values=np.array([1.0, np.inf])),
            dict(rate=0.0),
            dict(rate=-2.0),
            dict(kind="joy"),
        ],
    )
    def test_rejects_bad_inputs(self, kwargs):
        base = dict(values=np.array([0.0, 1.0]), rate=2.0, kind="arousal")
        base.update(kwargs)
        with pytest.raises(ParameterError):
            AnnotationTrace(
                rater_id="x",
                sample_rate_hz=base["rate"],
                values=base["values"],
                kind=base["kind"],
            )


class TestRaterSet:
    def test_groups_matching_traces(self):
        rs = RaterSet("rec", (trace([0.0, 1.0]), trace([2.0, 3.0], rater="r1")))
        assert rs.kind == "arousal"
        assert rs.sample_rate_hz == 2.0
        assert rs.n_samples == 2
        assert rs.matrix().shape == (2, 2)

    def test_rejects_mixed_kind_rate_or_length(self):
        with pytest.raises(ParameterError):
            RaterSet("rec", (trace([0.0, 1.0]), trace([0.0, 1.0], kind="valence")))
        with pytest.raises(ParameterError):
            RaterSet("rec", (trace([0.0, 1.0]), trace([0.0, 1.0], rate=4.0)))
        with pytest.raises(ParameterError):
            RaterSet("rec", (trace([0.0, 1.0]), trace([0.0, 1.0, 2.0])))
        with pytest.raises(ParameterError):
            RaterSet("rec", ())


class TestStandardize:
    def test_zero_mean_unit_population_std(self):
        rng = np.random.default_rng(3)
        x = rng.normal(5.0, 3.0, size=200)
        z, degenerate = standardize_values(x)
        assert not degenerate
        assert z.mean() == pytest.approx(0.0, abs=1e-12)
        assert z.std() == pytest.approx(1.0, abs=1e-12)  # population std

    def test_constant_maps_to_zeros_with_flag(self):
        z, degenerate = standardize_values(np.array([5.0, 5.0, 5.0]))
        assert degenerate
        assert np.all(z == 0.0)

    def test_trace_wrapper_sets_flag(self):
        t = standardize(trace([7.0, 7.0]))
        assert t.degenerate
        assert np.all(t.values == 0.0)
        t2 = standardize(trace([0.0, 1.0, 2.0]))
        assert not t2.degenerate
        assert t2.rater_id == "r0"

    def test_affine_invariance(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=50)
        z1, _ = standardize_values(x)
        z2, _ = standardize_values(3.5 * x - 2.0)
        np.testing.assert_allclose(z1, z2, atol=1e-12)


class TestResample:
    def test_upsample_worked_example(self):
        out = resample_values(np.array([0.0, 1.0, 2.0, 3.0]), 1.0, 2.0)
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])

    def test_downsample_takes_every_other(self):
        x = np.arange(9, dtype=np.float64)
        out = resample_values(x, 2.0, 1.0)
        np.testing.assert_allclose(out, [0.0, 2.0, 4.0, 6.0, 8.0])

    def test_identity_rate(self):
        x = np.array([1.0, 4.0, 2.0])
        np.testing.assert_array_equal(resample_values(x, 2.0, 2.0), x)

    def test_output_length_formula(self):
        # floor(duration * target) + 1 samples on the common grid
        x = np.zeros(121)  # 60 s at 2 Hz
        assert resample_values(x, 2.0, 4.0).size == 241
        assert resample_values(x, 2.0, 1.0).size == 61

    def test_single_sample_extends(self):
        out = resample_values(np.array([3.0]), 2.0, 4.0)
        np.testing.assert_array_equal(out, [3.0])

    def test_trace_wrapper_updates_rate(self):
        t = resample(trace([0.0, 1.0, 2.0], rate=1.0), 2.0)
        assert t.sample_rate_hz == 2.0
        assert len(t) == 5


class TestSavitzkyGolay:
    def test_window5_order2_interior_weights(self):
        # classic quadratic kernel: (-3, 12, 17, 12, -3)/35
        x = np.zeros(11)
        x[5] = 35.0
        out = savgol_smooth(x, 5, 2)
        np.testing.assert_allclose(out[3:8], [-3.0, 12.0, 17.0, 12.0, -3.0], atol=1e-9)

    @pytest.mark.parametrize("window,order", [(5, 2), (4, 2), (26, 3), (7, 3), (2, 1)])
    def test_polynomials_preserved_everywhere(self, window, order):
        # degree <= polyorder inputs pass through unchanged, edges included
        t = np.linspace(-1.0, 1.0, 60)
        coeffs = np.array([0.3, -1.2, 0.8, 0.5])[: order + 1]
        x = sum(c * t**k for k, c in enumerate(coeffs))
        out = savgol_smooth(x, window, order)
        np.testing.assert_allclose(out, x, atol=1e-9)

    def test_even_window_accepted(self):
        x = np.random.default_rng(0).normal(size=40)
        out = savgol_smooth(x, 26, 3)
        assert out.shape == x.shape
        assert np.all(np.isfinite(out))

    def test_smooths_noise(self):
        rng = np.random.default_rng(5)
        t = np.linspace(0, 4 * np.pi, 300)
        clean = np.sin(t)
        noisy = clean + 0.3 * rng.normal(size=t.size)
        out = savgol_smooth(noisy, 15, 3)
        assert np.abs(out - clean).mean() < np.abs(noisy - clean).mean()

    def test_rejects_bad_parameters(self):
        x = np.zeros(10)
        with pytest.raises(ParameterError):
            savgol_smooth(x, 1, 0)  # window < 2
        with pytest.raises(ParameterError):
            savgol_smooth(x, 5, 5)  # polyorder >= window
        with pytest.raises(ParameterError):
            savgol_smooth(x, 11, 3)  # window > len
        with pytest.raises(ParameterError):
            savgol_smooth(x, 5, -1)

    def test_trace_wrapper(self):
        t = savitzky_golay(trace(np.sin(np.linspace(0, 6, 50)).tolist()), window=8)
        assert isinstance(t, AnnotationTrace)
        assert len(t) == 50


class TestFrozen:
    def test_dataclasses_are_frozen(self):
        t = trace([0.0, 1.0])
        with pytest.raises(dataclasses.FrozenInstanceError):
            t.rater_id = "other"
