"""Gold-standard fusion: rater-aligned weighting and physiology substitution."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .align import AlignmentResult, multi_align
from .core import AnnotationTrace, RaterSet, resample, savitzky_golay, standardize, standardize_values
from .errors import ParameterError

__all__ = [
    "FusionConfig",
    "PhysioConfig",
    "GoldStandard",
    "ewe_weights",
    "ewe_fuse",
    "raaw",
    "physio_fuse",
    "agreement_stats",
]


@dataclass(frozen=True)
class FusionConfig:
    """Knobs of the alignment stage used by :func:`raaw`."""

    max_iter: int = 20
    tol: float = 1e-4
    band: int | None = None  # None -> 10% of the sequence length
    reference: str | int = "mean"


@dataclass(frozen=True)
class PhysioConfig:
    """Physiology-substitution settings on top of :class:`FusionConfig`.

    ``target_hz=None`` resamples the physiological signal to the rater grid
    rate. Window 26 at 2 Hz smooths over 13 seconds.
    """

    fusion: FusionConfig = field(default_factory=FusionConfig)
    sg_window: int = 26
    sg_polyorder: int = 3
    target_hz: float | None = None


@dataclass(frozen=True)
class GoldStandard:
    """Fused annotation with its provenance: weights, alignment, agreement."""

    recording_id: str
    kind: str
    values: np.ndarray
    weights: np.ndarray
    alignment: AlignmentResult
    agreement_mean: float
    agreement_std: float
    sample_rate_hz: float
    metadata: dict = field(default_factory=dict)


def _trace_values(trace) -> np.ndarray:
    values = getattr(trace, "values", trace)
    return np.asarray(values, dtype=np.float64)


def _pearson_or_none(x: np.ndarray, y: np.ndarray) -> float | None:
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt((dx**2).mean())
    sy = np.sqrt((dy**2).mean())
    if sx == 0.0 or sy == 0.0:
        return None
    return float((dx * dy).mean() / (sx * sy))


def ewe_weights(traces: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluator-weighted-estimator weights for a set of equal-length traces.

    Each trace's raw weight is its Pearson correlation with the mean of the
    other traces, clipped at zero; weights are normalized to sum to 1. A
    constant trace, or one whose mean-of-others is constant, gets raw weight
    0. If no trace earns positive weight the fallback is uniform. Items may
    be plain arrays or objects with a ``values`` attribute.
    """
    mat = np.stack([_trace_values(t) for t in traces])
    k, n = mat.shape
    if k < 2:
        raise ParameterError("ewe_weights needs at least 2 traces")
    if n < 2:
        raise ParameterError("ewe_weights needs traces of length >= 2")
    total = mat.sum(axis=0)
    raw = np.zeros(k)
    for i in range(k):
        others_mean = (total - mat[i]) / (k - 1)
        r = _pearson_or_none(mat[i], others_mean)
        raw[i] = max(0.0, r) if r is not None else 0.0
    if raw.sum() <= 0.0:
        warnings.warn("no trace has positive inter-rater correlation; using uniform weights")
        return np.full(k, 1.0 / k)
    return raw / raw.sum()


def ewe_fuse(traces: Sequence[np.ndarray], weights: np.ndarray) -> np.ndarray:
    """Weighted sum of traces; weights must be non-negative and sum to 1."""
    mat = np.stack([_trace_values(t) for t in traces])
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size != mat.shape[0]:
        raise ParameterError(f"got {w.size} weights for {mat.shape[0]} traces")
    if w.min() < 0.0 or abs(w.sum() - 1.0) > 1e-9:
        raise ParameterError("weights must be non-negative and sum to 1")
    return w @ mat


def _pairwise_agreement(mat: np.ndarray, recording_id: str) -> tuple[float, float]:
    """Mean and population std of pairwise Pearson CCs; NaN if no pair is defined."""
    ccs = []
    skipped = 0
    k = mat.shape[0]
    for i in range(k):
        for j in range(i + 1, k):
            r = _pearson_or_none(mat[i], mat[j])
            if r is None:
                skipped += 1
            else:
                ccs.append(r)
    if skipped:
        warnings.warn(
            f"recording {recording_id!r}: {skipped} rater pair(s) with a constant trace "
            "skipped in the agreement computation"
        )
    if not ccs:
        warnings.warn(f"recording {recording_id!r}: inter-rater agreement undefined")
        return float("nan"), float("nan")
    arr = np.asarray(ccs)
    return float(arr.mean()), float(arr.std())


def raaw(rater_set: RaterSet, config: FusionConfig | None = None) -> GoldStandard:
    """Fuse a rater set into one gold standard.

    Pipeline: standardize every trace, align all traces onto a common grid
    (iterative reference-based warping), weight the aligned traces by their
    agreement with the others, and fuse by weighted sum. Inter-rater
    agreement is reported on the aligned traces; the pre-alignment numbers
    are kept in ``metadata``.
    """
    config = config or FusionConfig()
    if len(rater_set) < 2:
        raise ParameterError(
            f"recording {rater_set.recording_id!r}: fusion needs at least 2 raters, "
            f"got {len(rater_set)}"
        )
    std_traces = [standardize(t) for t in rater_set.traces]
    degenerate = [t.rater_id for t in std_traces if t.degenerate]
    pre_mean, pre_std = _pairwise_agreement(
        np.stack([t.values for t in std_traces]), rater_set.recording_id
    )
    alignment = multi_align(
        rater_set,
        max_iter=config.max_iter,
        tol=config.tol,
        band=config.band,
        reference=config.reference,
    )
    weights = ewe_weights(list(alignment.warped))
    values = ewe_fuse(list(alignment.warped), weights)
    agr_mean, agr_std = _pairwise_agreement(alignment.warped, rater_set.recording_id)
    return GoldStandard(
        recording_id=rater_set.recording_id,
        kind=rater_set.kind,
        values=values,
        weights=weights,
        alignment=alignment,
        agreement_mean=agr_mean,
        agreement_std=agr_std,
        sample_rate_hz=rater_set.sample_rate_hz,
        metadata={
            "rater_ids": [t.rater_id for t in rater_set.traces],
            "pre_agreement_mean": pre_mean,
            "pre_agreement_std": pre_std,
            "degenerate_raters": degenerate,
            "iterations": alignment.iterations,
            "converged": alignment.converged,
        },
    )


def prepare_physio(eda: AnnotationTrace, label_rate_hz: float, config: PhysioConfig) -> AnnotationTrace:
    """Resample, smooth, and standardize a physiological signal.

    Order matters and is fixed: resample to the label rate first, then
    Savitzky-Golay smoothing (even windows supported), then standardization.
    """
    target = config.target_hz if config.target_hz is not None else label_rate_hz
    out = resample(eda, target)
    out = savitzky_golay(out, config.sg_window, config.sg_polyorder)
    out = standardize(out)
    if out.degenerate:
        warnings.warn(f"physiological trace {eda.rater_id!r} is constant; its weight will be 0")
    return out


def _conform_length(trace: AnnotationTrace, n: int) -> AnnotationTrace:
    """Trim or edge-hold a trace's values to exactly ``n`` samples."""
    vals = trace.values
    if vals.size == n:
        return trace
    if vals.size > n:
        vals = vals[:n]
    else:
        vals = np.concatenate([vals, np.full(n - vals.size, vals[-1])])
    return AnnotationTrace(
        rater_id=trace.rater_id,
        sample_rate_hz=trace.sample_rate_hz,
        values=vals,
        kind=trace.kind,
        degenerate=trace.degenerate,
    )


def physio_fuse(
    rater_set: RaterSet, eda: AnnotationTrace, config: PhysioConfig | None = None
) -> GoldStandard:
    """Gold standard with the least-agreeing annotator replaced by physiology.

    Annotator weights are computed exactly as in :func:`raaw` on the original
    set; the annotator with the minimum weight (ties: lowest index) is
    dropped, the processed physiological signal joins as a pseudo-rater, and
    the fusion pipeline reruns on the substituted set.
    """
    config = config or PhysioConfig()
    if len(rater_set) < 2:
        raise ParameterError(
            f"recording {rater_set.recording_id!r}: physio fusion needs at least 2 raters"
        )
    ranking = raaw(rater_set, config.fusion)
    drop = int(np.argmin(ranking.weights))  # argmin takes the lowest index on ties
    pseudo = prepare_physio(eda, rater_set.sample_rate_hz, config)
    pseudo = _conform_length(pseudo, rater_set.n_samples)
    pseudo = AnnotationTrace(
        rater_id=f"physio:{eda.rater_id}",
        sample_rate_hz=rater_set.sample_rate_hz,
        values=pseudo.values,
        kind=rater_set.kind,
        degenerate=pseudo.degenerate,
    )
    kept = [t for i, t in enumerate(rater_set.traces) if i != drop]
    substituted = RaterSet(recording_id=rater_set.recording_id, traces=(*kept, pseudo))
    gold = raaw(substituted, config.fusion)
    gold.metadata.update(
        {
            "removed_rater": rater_set.traces[drop].rater_id,
            "removed_index": drop,
            "annotator_weights": [float(w) for w in ranking.weights],
            "sg_window": config.sg_window,
            "sg_polyorder": config.sg_polyorder,
            "target_hz": config.target_hz
            if config.target_hz is not None
            else rater_set.sample_rate_hz,
        }
    )
    return gold


def agreement_stats(golds: Sequence[GoldStandard]) -> tuple[float, float]:
    """Mean and population std of per-recording inter-rater agreement.

    Recordings whose agreement is undefined (all raters constant) are
    skipped with a warning.
    """
    if not golds:
        raise ParameterError("agreement_stats needs at least one gold standard")
    vals = []
    for g in golds:
        if np.isnan(g.agreement_mean):
            warnings.warn(f"recording {g.recording_id!r} skipped: agreement undefined")
        else:
            vals.append(g.agreement_mean)
    if not vals:
        raise ParameterError("agreement undefined for every recording")
    arr = np.asarray(vals)
    return float(arr.mean()), float(arr.std())
