"""Core signal types and preprocessing: standardize, resample, Savitzky-Golay smoothing."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError

__all__ = [
    "KINDS",
    "AnnotationTrace",
    "RaterSet",
    "standardize",
    "standardize_values",
    "resample",
    "resample_values",
    "savitzky_golay",
    "savgol_smooth",
]

KINDS = ("valence", "arousal", "physio")

# Relative spread below this is treated as constant: standardizing float noise
# around a flat signal would amplify rounding error into a fake +-1 pattern.
_CONST_RTOL = 1e-12


def _as_readonly(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class AnnotationTrace:
    """One continuous signal on a uniform time grid starting at t = 0.

    ``values`` is copied and frozen at construction; traces are safe to share
    across threads. ``degenerate`` marks a trace that was constant when it was
    standardized.
    """

    rater_id: str
    sample_rate_hz: float
    values: np.ndarray
    kind: str
    degenerate: bool = False

    def __post_init__(self) -> None:
        arr = _as_readonly(np.atleast_1d(np.asarray(self.values, dtype=np.float64)))
        object.__setattr__(self, "values", arr)
        if arr.ndim != 1 or arr.size < 1:
            raise ParameterError("trace values must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(arr)):
            raise ParameterError(f"trace {self.rater_id!r} contains non-finite values")
        if not self.sample_rate_hz > 0:
            raise ParameterError("sample_rate_hz must be positive")
        if self.kind not in KINDS:
            raise ParameterError(f"unknown trace kind {self.kind!r}; expected one of {KINDS}")

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def duration_s(self) -> float:
        """Time span between first and last sample."""
        return (len(self) - 1) / self.sample_rate_hz

    def timestamps_ms(self) -> np.ndarray:
        """Integer millisecond timestamps of the sample grid."""
        return np.rint(np.arange(len(self)) * 1000.0 / self.sample_rate_hz).astype(np.int64)


@dataclass(frozen=True)
class RaterSet:
    """All annotation traces of one recording for one signal kind."""

    recording_id: str
    traces: tuple[AnnotationTrace, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "traces", tuple(self.traces))
        if not self.traces:
            raise ParameterError("rater set needs at least one trace")
        first = self.traces[0]
        for t in self.traces[1:]:
            if t.kind != first.kind:
                raise ParameterError(
                    f"mixed trace kinds in rater set {self.recording_id!r}: "
                    f"{t.kind!r} vs {first.kind!r}"
                )
            if t.sample_rate_hz != first.sample_rate_hz:
                raise ParameterError(f"mixed sample rates in rater set {self.recording_id!r}")
            if len(t) != len(first):
                raise ParameterError(f"unequal trace lengths in rater set {self.recording_id!r}")

    def __len__(self) -> int:
        return len(self.traces)

    @property
    def kind(self) -> str:
        return self.traces[0].kind

    @property
    def sample_rate_hz(self) -> float:
        return self.traces[0].sample_rate_hz

    @property
    def n_samples(self) -> int:
        return len(self.traces[0])

    def matrix(self) -> np.ndarray:
        """Trace values stacked to shape (n_raters, n_samples)."""
        return np.stack([t.values for t in self.traces])


def standardize_values(x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Zero-mean unit-variance copy of ``x`` with population (1/N) moments.

    Returns ``(standardized, degenerate)``; a constant input maps to all
    zeros with ``degenerate=True`` instead of dividing by zero.
    """
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean()
    sigma = x.std()
    if np.ptp(x) == 0.0 or sigma <= _CONST_RTOL * max(1.0, abs(mu)):
        return np.zeros_like(x), True
    return (x - mu) / sigma, False


def standardize(trace: AnnotationTrace) -> AnnotationTrace:
    """Standardized copy of a trace; constant traces come back zeroed and flagged."""
    vals, degen = standardize_values(trace.values)
    return replace(trace, values=vals, degenerate=degen or trace.degenerate)


def resample_values(x: np.ndarray, source_hz: float, target_hz: float) -> np.ndarray:
    """Linear interpolation of ``x`` onto a uniform grid at ``target_hz``.

    The output grid starts at t = 0 and has ``floor(duration * target_hz) + 1``
    samples, so it never extends past the source span. A length-1 input is
    extended as a constant.
    """
    if target_hz <= 0:
        raise ParameterError("target_hz must be positive")
    if source_hz <= 0:
        raise ParameterError("source_hz must be positive")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ParameterError("resample input must be a non-empty 1-d sequence")
    duration = (x.size - 1) / source_hz
    n_out = int(np.floor(duration * target_hz + 1e-9)) + 1
    t_out = np.arange(n_out) / target_hz
    t_src = np.arange(x.size) / source_hz
    return np.interp(t_out, t_src, x)


def resample(trace: AnnotationTrace, target_hz: float) -> AnnotationTrace:
    """Trace resampled to ``target_hz`` by linear interpolation."""
    vals = resample_values(trace.values, trace.sample_rate_hz, target_hz)
    return replace(trace, values=vals, sample_rate_hz=float(target_hz))


def _savgol_weights(left: int, right: int, polyorder: int) -> np.ndarray:
    # Least-squares polynomial fit over offsets [-left, right], evaluated at
    # offset 0. Offsets are scaled into [-1, 1] for conditioning; the fitted
    # value at 0 is unchanged by that scaling.
    offsets = np.arange(-left, right + 1, dtype=np.float64)
    scale = float(max(left, right, 1))
    degree = min(polyorder, offsets.size - 1)
    vand = np.vander(offsets / scale, degree + 1, increasing=True)
    return np.linalg.pinv(vand)[0]


def savgol_smooth(x: np.ndarray, window: int, polyorder: int = 3) -> np.ndarray:
    """Savitzky-Golay smoothing with support for even window sizes.

    Each output sample is the value at the evaluation offset of a
    least-squares polynomial fit over the window. For an even ``window`` the
    evaluation offset sits at index ``window // 2``, i.e. the window spans
    ``window // 2`` samples to the left and ``window - 1 - window // 2`` to
    the right. Near the edges both arms shrink by the same amount until the
    window fits, so a signal that is itself a polynomial of degree
    <= ``polyorder`` passes through unchanged everywhere.

    Parameters
    ----------
    x : array
        Signal to smooth.
    window : int
        Window size in samples, >= 2; may be even.
    polyorder : int
        Fit degree, >= 0 and < window.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if x.ndim != 1 or n < 1:
        raise ParameterError("savgol input must be a non-empty 1-d sequence")
    if window < 2:
        raise ParameterError("window must be >= 2")
    if polyorder < 0:
        raise ParameterError("polyorder must be >= 0")
    if polyorder >= window:
        raise ParameterError(f"polyorder {polyorder} must be < window {window}")
    if window > n:
        raise ParameterError(f"window {window} exceeds signal length {n}")

    left_arm = window // 2
    right_arm = window - 1 - left_arm
    out = np.empty(n)
    out[left_arm : n - right_arm] = np.correlate(
        x, _savgol_weights(left_arm, right_arm, polyorder), mode="valid"
    )
    edge = list(range(left_arm)) + list(range(n - right_arm, n))
    for i in edge:
        shrink = max(left_arm - i, right_arm - (n - 1 - i), 0)
        lo = min(i, max(0, left_arm - shrink))
        hi = min(n - 1 - i, max(0, right_arm - shrink))
        out[i] = x[i - lo : i + hi + 1] @ _savgol_weights(lo, hi, polyorder)
    return out


def savitzky_golay(trace: AnnotationTrace, window: int, polyorder: int = 3) -> AnnotationTrace:
    """Smoothed copy of a trace; see :func:`savgol_smooth`."""
    return replace(trace, values=savgol_smooth(trace.values, window, polyorder))
