"""File formats, label-grid alignment, windowing, partitions, and segments.

All CSV writers format floats with ``repr`` (shortest round-trip form) and
sort rows deterministically, so reruns under a fixed seed produce
byte-identical files.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import AnnotationTrace, RaterSet
from .errors import DataError, ParameterError

__all__ = [
    "FeatureSequence",
    "WindowSpec",
    "Partition",
    "Segment",
    "align_to_labels",
    "window",
    "merge_segments",
    "read_annotation_csv",
    "write_annotation_csv",
    "read_rater_set",
    "read_feature_csv",
    "write_feature_csv",
    "read_gold_csv",
    "write_gold_csv",
    "read_prediction_csv",
    "write_prediction_csv",
    "read_partition_csv",
    "write_partition_csv",
    "read_segments_csv",
    "write_segments_csv",
    "read_labels_csv",
    "write_labels_csv",
    "write_warp_path_csv",
    "slice_by_span",
]

SPLITS = ("train", "devel", "test")


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_lines(path: Path | str) -> list[str]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    text = path.read_text()
    return [ln for ln in text.splitlines() if ln.strip()]


def _write_lines(path: Path | str, lines: Iterable[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# containers


@dataclass(frozen=True)
class FeatureSequence:
    """A feature matrix on a time grid.

    ``timestamps_ms`` holds frame times; when ``end_timestamps_ms`` is
    present the rows are word-level features valid over
    ``[timestamps_ms[i], end_timestamps_ms[i]]``.
    """

    recording_id: str
    feature_set: str
    matrix: np.ndarray  # (T, D) float64
    timestamps_ms: np.ndarray  # (T,) int64
    end_timestamps_ms: np.ndarray | None = None

    def __post_init__(self) -> None:
        mat = np.atleast_2d(np.asarray(self.matrix, dtype=np.float64))
        ts = np.asarray(self.timestamps_ms, dtype=np.int64)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "timestamps_ms", ts)
        if mat.shape[0] != ts.size:
            raise ParameterError("feature matrix rows must match timestamps")
        if ts.size == 0:
            raise ParameterError("feature sequence must not be empty")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise ParameterError(
                f"timestamps of {self.recording_id!r}/{self.feature_set!r} must be strictly increasing"
            )
        if self.end_timestamps_ms is not None:
            ends = np.asarray(self.end_timestamps_ms, dtype=np.int64)
            object.__setattr__(self, "end_timestamps_ms", ends)
            if ends.size != ts.size:
                raise ParameterError("end timestamps must match start timestamps")
            if np.any(ends < ts):
                raise ParameterError("word end timestamps must be >= start timestamps")

    @property
    def n_features(self) -> int:
        return int(self.matrix.shape[1])


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window layout in samples."""

    window: int
    hop: int

    def __post_init__(self) -> None:
        if self.window < 1 or self.hop < 1:
            raise ParameterError("window and hop must be >= 1 sample")


@dataclass(frozen=True)
class Partition:
    """Recording-to-split assignment with disjoint splits."""

    assignment: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for rid, split in self.assignment.items():
            if split not in SPLITS:
                raise ParameterError(f"unknown split {split!r} for recording {rid!r}")

    def split_of(self, recording_id: str) -> str:
        if recording_id not in self.assignment:
            raise DataError(f"recording {recording_id!r} missing from the partition map")
        return self.assignment[recording_id]

    def recordings(self, split: str) -> tuple[str, ...]:
        if split not in SPLITS:
            raise ParameterError(f"unknown split {split!r}")
        return tuple(sorted(r for r, s in self.assignment.items() if s == split))


@dataclass(frozen=True)
class Segment:
    """A labelled time span of one recording; times in ms, half-open [start, end)."""

    segment_id: str
    recording_id: str
    start_ms: int
    end_ms: int
    partition: str

    def __post_init__(self) -> None:
        if self.end_ms <= self.start_ms:
            raise ParameterError(f"segment {self.segment_id!r}: end must be after start")
        if self.start_ms < 0:
            raise ParameterError(f"segment {self.segment_id!r}: negative start")


# ---------------------------------------------------------------------------
# label-grid alignment and windowing


def _check_uniform_grid(label_ts: np.ndarray) -> int:
    if label_ts.ndim != 1 or label_ts.size < 2:
        raise ParameterError("label grid needs at least 2 timestamps")
    diffs = np.diff(label_ts)
    step = int(round(float(np.median(diffs))))
    if np.any(np.abs(diffs - step) > 1):  # rounded-ms grids may wobble by 1 ms
        raise ParameterError("label grid must be uniform")
    if step <= 0:
        raise ParameterError("label timestamps must be strictly increasing")
    return step


def align_to_labels(features: FeatureSequence, label_timestamps_ms) -> np.ndarray:
    """Project a feature sequence onto a uniform label grid.

    Frame features (no end timestamps) are matched by nearest timestamp; a
    label step with no feature within half a grid step gets a zero row. Word
    features are repeated at every label step inside ``[start, end]`` and are
    zero outside any word.
    """
    label_ts = np.asarray(label_timestamps_ms, dtype=np.int64)
    step = _check_uniform_grid(label_ts)
    out = np.zeros((label_ts.size, features.n_features))
    if features.end_timestamps_ms is None:
        ft = features.timestamps_ms
        idx = np.searchsorted(ft, label_ts)
        for row, t in enumerate(label_ts):
            best, best_dist = -1, None
            for j in (idx[row] - 1, idx[row]):
                if 0 <= j < ft.size:
                    d = abs(int(ft[j]) - int(t))
                    if best_dist is None or d < best_dist:
                        best, best_dist = j, d
            if best >= 0 and best_dist * 2 <= step:
                out[row] = features.matrix[best]
    else:
        starts = features.timestamps_ms
        ends = features.end_timestamps_ms
        for row, t in enumerate(label_ts):
            hits = np.nonzero((starts <= t) & (t <= ends))[0]
            if hits.size:
                out[row] = features.matrix[hits[0]]
    return out


def window(values: np.ndarray, spec: WindowSpec) -> list[tuple[int, np.ndarray]]:
    """Cut a sequence into overlapping windows.

    Window starts are 0, hop, 2*hop, ... while the start is inside the
    sequence; the final window is truncated at the end, so concatenating
    ``[start : start + len)`` spans loses no sample. A sequence no longer
    than ``hop`` yields a single window.
    """
    values = np.asarray(values)
    n = values.shape[0]
    if n < 1:
        raise ParameterError("cannot window an empty sequence")
    return [(s, values[s : min(s + spec.window, n)]) for s in range(0, n, spec.hop)]


def merge_segments(
    segments: Sequence[Segment],
    max_gap_ms: int = 2000,
    same_group: Callable[[Segment, Segment], bool] | None = None,
) -> list[Segment]:
    """Merge segments of the same group separated by less than ``max_gap_ms``.

    ``same_group`` defaults to matching recording and partition. Segments are
    processed in start order per recording; a merged segment keeps the first
    segment's id. Segments of different groups never merge, whatever the gap.
    """
    if same_group is None:
        same_group = lambda a, b: (a.recording_id, a.partition) == (b.recording_id, b.partition)
    ordered = sorted(segments, key=lambda s: (s.recording_id, s.start_ms, s.end_ms))
    out: list[Segment] = []
    for seg in ordered:
        if out:
            prev = out[-1]
            gap = seg.start_ms - prev.end_ms
            if same_group(prev, seg) and gap < max_gap_ms:
                out[-1] = Segment(
                    segment_id=prev.segment_id,
                    recording_id=prev.recording_id,
                    start_ms=prev.start_ms,
                    end_ms=max(prev.end_ms, seg.end_ms),
                    partition=prev.partition,
                )
                continue
        out.append(seg)
    return out


def slice_by_span(timestamps_ms: np.ndarray, start_ms: int, end_ms: int) -> np.ndarray:
    """Boolean mask of grid samples inside the half-open span [start, end)."""
    ts = np.asarray(timestamps_ms)
    return (ts >= start_ms) & (ts < end_ms)


# ---------------------------------------------------------------------------
# two-column signal CSVs


def _read_two_column(path: Path | str, expected_header: str) -> tuple[np.ndarray, np.ndarray]:
    lines = _read_lines(path)
    if not lines or lines[0].strip() != expected_header:
        raise DataError(f"{path}: expected header {expected_header!r}")
    ts, vals = [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 2:
            raise DataError(f"{path}: malformed row {ln!r}")
        try:
            ts.append(int(parts[0]))
            vals.append(float(parts[1]))
        except ValueError as exc:
            raise DataError(f"{path}: malformed row {ln!r}") from exc
    if not ts:
        raise DataError(f"{path}: no data rows")
    return np.asarray(ts, dtype=np.int64), np.asarray(vals)


def _write_two_column(path: Path | str, header: str, ts: np.ndarray, vals: np.ndarray) -> None:
    lines = [header]
    lines += [f"{int(t)},{_fmt(v)}" for t, v in zip(ts, vals)]
    _write_lines(path, lines)


def _rate_from_timestamps(ts: np.ndarray, path) -> float:
    if ts.size < 2:
        return 1.0
    diffs = np.diff(ts)
    step = float(np.median(diffs))
    if step <= 0 or np.any(np.abs(diffs - step) > 1):
        raise DataError(f"{path}: timestamps must form a uniform grid")
    return 1000.0 / step


def read_annotation_csv(path: Path | str, rater_id: str, kind: str) -> AnnotationTrace:
    """Load one rater's trace from a ``timestamp_ms,value`` CSV."""
    ts, vals = _read_two_column(path, "timestamp_ms,value")
    rate = _rate_from_timestamps(ts, path)
    try:
        return AnnotationTrace(rater_id=rater_id, sample_rate_hz=rate, values=vals, kind=kind)
    except ParameterError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_annotation_csv(path: Path | str, trace: AnnotationTrace) -> None:
    _write_two_column(path, "timestamp_ms,value", trace.timestamps_ms(), trace.values)


def read_rater_set(annotations_dir: Path | str, recording_id: str, kind: str) -> RaterSet:
    """Load ``<annotations_dir>/<recording_id>/<kind>/<rater_id>.csv`` into a RaterSet."""
    folder = Path(annotations_dir) / recording_id / kind
    if not folder.is_dir():
        raise DataError(f"no {kind!r} annotations for recording {recording_id!r} under {annotations_dir}")
    files = sorted(folder.glob("*.csv"))
    if not files:
        raise DataError(f"no annotation files in {folder}")
    traces = tuple(read_annotation_csv(f, rater_id=f.stem, kind=kind) for f in files)
    try:
        return RaterSet(recording_id=recording_id, traces=traces)
    except ParameterError as exc:
        raise DataError(f"recording {recording_id!r}: {exc}") from exc


def list_recordings(annotations_dir: Path | str, kind: str) -> list[str]:
    """Recording ids under an annotation root that have the given kind."""
    root = Path(annotations_dir)
    if not root.is_dir():
        raise DataError(f"missing annotation directory: {root}")
    return sorted(p.parent.name for p in root.glob(f"*/{kind}") if p.is_dir())


# ---------------------------------------------------------------------------
# feature CSVs


def read_feature_csv(path: Path | str, recording_id: str, feature_set: str) -> FeatureSequence:
    """Load a feature CSV: ``timestamp_ms,f0,...`` or ``start_ms,end_ms,f0,...`` for words."""
    lines = _read_lines(path)
    header = lines[0].split(",")
    word_mode = header[:2] == ["start_ms", "end_ms"]
    if not word_mode and header[:1] != ["timestamp_ms"]:
        raise DataError(f"{path}: unrecognized feature header {lines[0]!r}")
    meta_cols = 2 if word_mode else 1
    expected = [f"f{i}" for i in range(len(header) - meta_cols)]
    if header[meta_cols:] != expected:
        raise DataError(f"{path}: feature columns must be named f0,f1,...")
    ts, ends, rows = [], [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise DataError(f"{path}: malformed row {ln!r}")
        try:
            ts.append(int(parts[0]))
            if word_mode:
                ends.append(int(parts[1]))
            rows.append([float(v) for v in parts[meta_cols:]])
        except ValueError as exc:
            raise DataError(f"{path}: malformed row {ln!r}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    try:
        return FeatureSequence(
            recording_id=recording_id,
            feature_set=feature_set,
            matrix=np.asarray(rows),
            timestamps_ms=np.asarray(ts, dtype=np.int64),
            end_timestamps_ms=np.asarray(ends, dtype=np.int64) if word_mode else None,
        )
    except ParameterError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_feature_csv(path: Path | str, features: FeatureSequence) -> None:
    d = features.n_features
    cols = ",".join(f"f{i}" for i in range(d))
    if features.end_timestamps_ms is None:
        lines = [f"timestamp_ms,{cols}"]
        for t, row in zip(features.timestamps_ms, features.matrix):
            lines.append(f"{int(t)}," + ",".join(_fmt(v) for v in row))
    else:
        lines = [f"start_ms,end_ms,{cols}"]
        for t, e, row in zip(features.timestamps_ms, features.end_timestamps_ms, features.matrix):
            lines.append(f"{int(t)},{int(e)}," + ",".join(_fmt(v) for v in row))
    _write_lines(path, lines)


# ---------------------------------------------------------------------------
# gold standards, predictions, partitions, segments, labels


def write_gold_csv(path: Path | str, timestamps_ms: np.ndarray, values: np.ndarray, metadata: Mapping | None = None) -> None:
    """Write a gold CSV and, with metadata given, a ``.json`` sidecar next to it."""
    _write_two_column(path, "timestamp_ms,value", np.asarray(timestamps_ms), np.asarray(values))
    if metadata is not None:
        side = Path(path).with_suffix(".json")
        side.write_text(json.dumps(dict(metadata), indent=2, sort_keys=True) + "\n")


def read_gold_csv(path: Path | str) -> tuple[np.ndarray, np.ndarray, dict]:
    """Read a gold CSV; returns (timestamps_ms, values, sidecar metadata or {})."""
    ts, vals = _read_two_column(path, "timestamp_ms,value")
    side = Path(path).with_suffix(".json")
    meta = json.loads(side.read_text()) if side.is_file() else {}
    return ts, vals, meta


def write_prediction_csv(path: Path | str, timestamps_ms: np.ndarray, preds: np.ndarray) -> None:
    _write_two_column(path, "timestamp_ms,pred", np.asarray(timestamps_ms), np.asarray(preds))


def read_prediction_csv(path: Path | str) -> tuple[np.ndarray, np.ndarray]:
    return _read_two_column(path, "timestamp_ms,pred")


def write_partition_csv(path: Path | str, partition: Partition) -> None:
    lines = ["recording_id,partition"]
    lines += [f"{rid},{split}" for rid, split in sorted(partition.assignment.items())]
    _write_lines(path, lines)


def read_partition_csv(path: Path | str) -> Partition:
    """Load a partition map; a recording assigned to two splits is rejected."""
    lines = _read_lines(path)
    if lines[0].strip() != "recording_id,partition":
        raise DataError(f"{path}: expected header 'recording_id,partition'")
    assignment: dict[str, str] = {}
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 2:
            raise DataError(f"{path}: malformed row {ln!r}")
        rid, split = parts[0].strip(), parts[1].strip()
        if split not in SPLITS:
            raise DataError(f"{path}: unknown split {split!r} for recording {rid!r}")
        if rid in assignment and assignment[rid] != split:
            raise DataError(f"{path}: recording {rid!r} appears in two splits")
        assignment[rid] = split
    return Partition(assignment=assignment)


def write_segments_csv(path: Path | str, segments: Sequence[Segment]) -> None:
    lines = ["segment_id,recording_id,start_ms,end_ms,partition"]
    for s in segments:
        lines.append(f"{s.segment_id},{s.recording_id},{s.start_ms},{s.end_ms},{s.partition}")
    _write_lines(path, lines)


def read_segments_csv(path: Path | str) -> list[Segment]:
    lines = _read_lines(path)
    if lines[0].strip() != "segment_id,recording_id,start_ms,end_ms,partition":
        raise DataError(f"{path}: unexpected segment header {lines[0]!r}")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 5:
            raise DataError(f"{path}: malformed row {ln!r}")
        try:
            seg = Segment(parts[0], parts[1], int(parts[2]), int(parts[3]), parts[4])
        except (ValueError, ParameterError) as exc:
            raise DataError(f"{path}: bad segment row {ln!r}: {exc}") from exc
        out.append(seg)
    return out


def write_labels_csv(path: Path | str, labels: Mapping[str, int]) -> None:
    lines = ["segment_id,class"]
    lines += [f"{sid},{int(c)}" for sid, c in sorted(labels.items())]
    _write_lines(path, lines)


def read_labels_csv(path: Path | str) -> dict[str, int]:
    lines = _read_lines(path)
    if lines[0].strip() != "segment_id,class":
        raise DataError(f"{path}: expected header 'segment_id,class'")
    out: dict[str, int] = {}
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 2:
            raise DataError(f"{path}: malformed row {ln!r}")
        out[parts[0]] = int(parts[1])
    return out


def write_warp_path_csv(path: Path | str, warp_path) -> None:
    """Debug dump of a warp path as ``src_idx,ref_idx`` rows."""
    lines = ["src_idx,ref_idx"]
    lines += [f"{int(s)},{int(r)}" for s, r in warp_path.pairs]
    _write_lines(path, lines)


def grid_timestamps_ms(n: int, rate_hz: float) -> np.ndarray:
    """Millisecond timestamps of a uniform grid starting at 0."""
    return np.rint(np.arange(n) * 1000.0 / rate_hz).astype(np.int64)
