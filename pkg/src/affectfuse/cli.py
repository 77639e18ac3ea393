"""Command-line entry points.

Seven subcommands cover the full pipeline: ``synth`` writes a synthetic
corpus, ``raaw`` and ``physio`` fuse annotations into gold standards,
``discretize`` turns continuous gold into sentiment classes, ``train`` fits
one sequence model on one feature set, ``eval`` scores prediction
directories, and ``fuse-late`` stacks several prediction streams.

Conventions shared by every subcommand:
  * progress goes to stderr, machine-readable ``key=value`` lines to stdout
  * exit codes: 0 ok, 2 bad parameters or usage, 3 data problems, 4 numeric
    failures (non-finite loss or parameters)
  * ``--config FILE`` reads ``key = value`` lines overriding built-in
    defaults (explicit flags still win)
  * relative paths resolve against ``AFFECTFUSE_DATA_ROOT`` when it is set
  * ``--jobs N`` runs per-recording fusion in N worker processes
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dataio, synth
from .discretize import (
    fit_class_model,
    model_project,
    assign_nearest,
    save_class_model,
    segment_features,
    validate_clusters,
)
from .errors import DataError, NumericError, ParameterError
from .fuse import FusionConfig, PhysioConfig, agreement_stats, physio_fuse, raaw
from .latefusion import FusionPlan, fuse_predictions
from .metrics import ScoreReport, ccc, macro_f1, partition_ccc
from .seqmodel import RegressorConfig, SequenceModel, evaluate, save_checkpoint, train

__all__ = ["main", "build_parser"]

# Per-task protocol defaults: (label rate hz, window samples, hop samples).
TASK_DEFAULTS = {
    "wilder": (4.0, 200, 100),
    "sent": (4.0, 200, 100),
    "stress": (2.0, 300, 50),
    "physio": (2.0, 300, 50),
}
# Mid-grid learning rates; override with --lr for grid runs.
TASK_LR = {"wilder": 1e-3, "sent": 5e-3, "stress": 5e-4, "physio": 5e-4}

DATA_ROOT_ENV = "AFFECTFUSE_DATA_ROOT"


def _resolve(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    root = os.environ.get(DATA_ROOT_ENV)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(key: str, value) -> None:
    print(f"{key}={value}")


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


# ---------------------------------------------------------------------------
# config files


def _load_config_file(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise ParameterError(f"config file not found: {path}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def _convert_config_value(text: str):
    low = text.lower()
    if low in ("none", "null"):
        return None
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


# ---------------------------------------------------------------------------
# parser


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--seed", type=int, default=101, help="base random seed")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes for per-recording fusion")
    sp.add_argument("--config", default=None, help="file of 'key = value' default overrides")


def build_parser() -> tuple[argparse.ArgumentParser, list[argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="affectfuse",
        description="Continuous emotion annotation fusion and sequence baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: list[argparse.ArgumentParser] = []

    def register(sp: argparse.ArgumentParser, func) -> None:
        sp.set_defaults(func=func)
        subparsers.append(sp)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    _add_common(p)
    p.add_argument("--out", required=True, help="corpus output directory")
    p.add_argument("--recordings", type=int, default=6)
    p.add_argument("--duration", type=float, default=300.0, help="seconds per recording")
    p.add_argument("--rate", type=float, default=2.0, help="annotation rate in Hz")
    p.add_argument("--raters", type=int, default=5)
    p.add_argument("--max-lag", type=float, default=2.0, help="max rater lag in seconds")
    p.add_argument("--noise", type=float, default=0.05, help="rater noise sigma")
    p.add_argument("--scale-jitter", type=float, default=0.2)
    p.add_argument("--feature-dim", type=int, default=8)
    p.add_argument("--feature-noise", type=float, default=0.1)
    p.add_argument("--feature-sets", default="modal_a,modal_b", help="comma-separated set names")
    p.add_argument("--kind", default="arousal", choices=("valence", "arousal", "physio"))
    register(p, cmd_synth)

    p = sub.add_parser("raaw", help="fuse rater annotations into gold standards")
    _add_common(p)
    p.add_argument("--annotations", required=True, help="root with <rec>/<kind>/*.csv")
    p.add_argument("--kind", default="arousal", choices=("valence", "arousal", "physio"))
    p.add_argument("--out", required=True, help="directory for <rec>.csv gold files")
    p.add_argument("--max-iter", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--band", type=int, default=None, help="warp band; default 10%% of length")
    p.add_argument("--reference", default="mean", help="'mean' or a rater index")
    p.add_argument("--dump-paths", default=None, help="directory for warp path CSVs")
    register(p, cmd_raaw)

    p = sub.add_parser("physio", help="fuse annotations with an EDA pseudo-rater")
    _add_common(p)
    p.add_argument("--annotations", required=True)
    p.add_argument("--kind", default="physio", choices=("valence", "arousal", "physio"))
    p.add_argument("--eda", required=True, help="directory with <rec>.csv EDA signals")
    p.add_argument("--out", required=True)
    p.add_argument("--max-iter", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--band", type=int, default=None)
    p.add_argument("--reference", default="mean")
    p.add_argument("--sg-window", type=int, default=26, help="smoothing window in samples")
    p.add_argument("--sg-order", type=int, default=3, help="smoothing polynomial order")
    p.add_argument("--target-hz", type=float, default=None, help="EDA resample rate; default label rate")
    p.add_argument("--dump-paths", default=None)
    register(p, cmd_physio)

    p = sub.add_parser("discretize", help="turn gold standards into sentiment classes")
    _add_common(p)
    p.add_argument("--gold", required=True, help="directory of <rec>.csv gold files")
    p.add_argument("--segments", required=True, help="segments CSV")
    p.add_argument("--target", required=True, choices=("valence", "arousal"))
    p.add_argument("--method", default=None, choices=("kmeans", "gmm"),
                   help="default: kmeans for valence, gmm for arousal")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--out", required=True, help="labels CSV to write")
    p.add_argument("--model-out", default=None, help="optional class model JSON")
    register(p, cmd_discretize)

    p = sub.add_parser("train", help="train one sequence model on one feature set")
    _add_common(p)
    p.add_argument("--task", required=True, choices=tuple(TASK_DEFAULTS))
    p.add_argument("--features", required=True, help="directory of <rec>.csv feature files")
    p.add_argument("--gold", default=None, help="regression: directory of <rec>.csv gold files")
    p.add_argument("--segments", default=None, help="sent: segments CSV")
    p.add_argument("--labels", default=None, help="sent: labels CSV")
    p.add_argument("--partitions", default=None, help="regression: partitions CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=None, help="train window in samples")
    p.add_argument("--hop", type=int, default=None, help="train hop in samples")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--bidirectional", action="store_true")
    p.add_argument("--lr", type=float, default=None, help="default: mid-grid for the task")
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=15)
    p.add_argument("--batch", type=int, default=32)
    register(p, cmd_train)

    p = sub.add_parser("eval", help="score prediction directories")
    _add_common(p)
    p.add_argument("--pred", default=None, help="directory of <rec>.csv predictions")
    p.add_argument("--gold", default=None, help="directory of <rec>.csv gold files")
    p.add_argument("--name", default="ccc", help="label for the first target")
    p.add_argument("--pred2", default=None)
    p.add_argument("--gold2", default=None)
    p.add_argument("--name2", default="ccc2")
    p.add_argument("--pred-labels", default=None, help="classification: predicted labels CSV")
    p.add_argument("--gold-labels", default=None, help="classification: gold labels CSV")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--per-recording", action="store_true", help="per-recording CCC to stderr")
    register(p, cmd_eval)

    p = sub.add_parser("fuse-late", help="fuse >=2 prediction streams with a small model")
    _add_common(p)
    p.add_argument("--task", required=True, choices=tuple(TASK_DEFAULTS))
    p.add_argument("--streams", nargs="+", required=True,
                   help="prediction roots with <split>/<rec>.csv (regression) "
                        "or <split>_logits.csv (sent)")
    p.add_argument("--gold", default=None, help="regression: gold directory")
    p.add_argument("--gold-labels", default=None, help="sent: labels CSV")
    p.add_argument("--partitions", default=None, help="regression: partitions CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=None, help="default: full sequences")
    p.add_argument("--hop", type=int, default=None)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=15)
    p.add_argument("--batch", type=int, default=32)
    register(p, cmd_fuse_late)

    return parser, subparsers


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    out = _resolve(args.out)
    feature_sets = tuple(s.strip() for s in args.feature_sets.split(",") if s.strip())
    if not feature_sets:
        raise ParameterError("--feature-sets must name at least one set")
    config = synth.SynthConfig(
        seed=args.seed,
        duration_s=args.duration,
        rate_hz=args.rate,
        n_raters=args.raters,
        max_lag_s=args.max_lag,
        noise_sigma=args.noise,
        scale_jitter=args.scale_jitter,
        feature_dim=args.feature_dim,
        feature_noise=args.feature_noise,
        kind=args.kind,
    )
    _info(f"writing {args.recordings} synthetic recordings to {out}")
    ids = synth.write_corpus(config, out, args.recordings, feature_sets=feature_sets)
    _emit("recordings", len(ids))
    _emit("feature_sets", ",".join(feature_sets))
    _emit("out", out)
    return 0


# ---------------------------------------------------------------------------
# raaw / physio (parallel per recording)


def _fuse_worker(task) -> tuple[str, object]:
    mode, ann_root, rec, kind, fusion_kwargs, eda_dir, physio_kwargs = task
    rater_set = dataio.read_rater_set(Path(ann_root), rec, kind)
    fusion = FusionConfig(**fusion_kwargs)
    if mode == "raaw":
        return rec, raaw(rater_set, fusion)
    eda_path = Path(eda_dir) / f"{rec}.csv"
    if not eda_path.is_file():
        raise ParameterError(f"missing EDA file for recording {rec!r}: {eda_path}")
    eda = dataio.read_annotation_csv(eda_path, rater_id=eda_path.stem, kind="physio")
    config = PhysioConfig(fusion=fusion, **physio_kwargs)
    return rec, physio_fuse(rater_set, eda, config)


def _parse_reference(text: str) -> str | int:
    if text == "mean":
        return "mean"
    try:
        return int(text)
    except ValueError:
        raise ParameterError(f"--reference must be 'mean' or an integer, got {text!r}")


def _run_fusion(args, mode: str) -> int:
    ann_root = _resolve(args.annotations)
    out = _resolve(args.out)
    recordings = dataio.list_recordings(ann_root, args.kind)
    if not recordings:
        raise DataError(f"no recordings with {args.kind!r} annotations under {ann_root}")
    fusion_kwargs = {
        "max_iter": args.max_iter,
        "tol": args.tol,
        "band": args.band,
        "reference": _parse_reference(args.reference),
    }
    physio_kwargs = {}
    eda_dir = None
    if mode == "physio":
        eda_dir = _resolve(args.eda)
        physio_kwargs = {
            "sg_window": args.sg_window,
            "sg_polyorder": args.sg_order,
            "target_hz": args.target_hz,
        }
    tasks = [
        (mode, str(ann_root), rec, args.kind, fusion_kwargs, str(eda_dir) if eda_dir else None, physio_kwargs)
        for rec in recordings
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = dict(pool.map(_fuse_worker, tasks))
    else:
        results = dict(_fuse_worker(t) for t in tasks)

    out.mkdir(parents=True, exist_ok=True)
    golds = []
    for rec in recordings:
        gold = results[rec]
        golds.append(gold)
        ts = dataio.grid_timestamps_ms(len(gold.values), gold.sample_rate_hz)
        metadata = _jsonable(
            {
                "recording_id": gold.recording_id,
                "kind": gold.kind,
                "sample_rate_hz": gold.sample_rate_hz,
                "weights": gold.weights,
                "agreement_mean": gold.agreement_mean,
                "agreement_std": gold.agreement_std,
                "fusion": fusion_kwargs,
                **gold.metadata,
            }
        )
        dataio.write_gold_csv(out / f"{rec}.csv", ts, gold.values, metadata)
        _info(f"fused {rec} (agreement {gold.agreement_mean:.3f})")
        if args.dump_paths:
            dump = _resolve(args.dump_paths)
            rater_ids = gold.metadata.get("rater_ids", [])
            for idx, path in enumerate(gold.alignment.paths):
                rid = rater_ids[idx] if idx < len(rater_ids) else str(idx)
                dataio.write_warp_path_csv(dump / f"{rec}_{rid}.csv", path)
    mean, std = agreement_stats(golds)
    _emit("recordings", len(recordings))
    _emit("agreement_mean", repr(round(mean, 6)))
    _emit("agreement_std", repr(round(std, 6)))
    _emit("out", out)
    return 0


def cmd_raaw(args) -> int:
    return _run_fusion(args, "raaw")


def cmd_physio(args) -> int:
    return _run_fusion(args, "physio")


# ---------------------------------------------------------------------------
# discretize


def cmd_discretize(args) -> int:
    gold_dir = _resolve(args.gold)
    segments = dataio.read_segments_csv(_resolve(args.segments))
    if not segments:
        raise DataError(f"no segments in {args.segments}")
    method = args.method or ("kmeans" if args.target == "valence" else "gmm")

    golds: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for seg in segments:
        if seg.recording_id not in golds:
            path = gold_dir / f"{seg.recording_id}.csv"
            if not path.is_file():
                raise DataError(f"no gold file for recording {seg.recording_id!r}: {path}")
            ts, values, _ = dataio.read_gold_csv(path)
            golds[seg.recording_id] = (ts, values)

    rows = []
    for seg in segments:
        ts, values = golds[seg.recording_id]
        mask = dataio.slice_by_span(ts, seg.start_ms, seg.end_ms)
        if int(mask.sum()) < 2:
            raise DataError(f"segment {seg.segment_id!r} covers fewer than 2 gold samples")
        feats = segment_features(values[mask], args.target, segment_id=seg.segment_id)
        rows.append(feats.vector())
    matrix = np.vstack(rows)

    train_rows = np.array([s.partition == "train" for s in segments])
    if int(train_rows.sum()) < 6:
        raise DataError("need at least 6 train segments to fit the class model")
    _info(f"fitting {method} on {int(train_rows.sum())} train segments ({args.target})")
    model = fit_class_model(
        matrix[train_rows], args.target, method,
        n_classes=args.classes, seed=args.seed,
    )
    projected = model_project(model, matrix)
    assignments = assign_nearest(model.centres, projected)
    report = validate_clusters(projected, assignments, n_classes=args.classes)

    out = _resolve(args.out)
    labels = {seg.segment_id: int(lab) for seg, lab in zip(segments, assignments)}
    dataio.write_labels_csv(out, labels)
    if args.model_out:
        save_class_model(_resolve(args.model_out), model)
        _info(f"class model written to {args.model_out}")
    _emit("silhouette", repr(round(report.silhouette, 6)))
    _emit("min_share_ok", report.min_share_ok)
    _emit("class_counts", ",".join(str(c) for c in report.class_counts))
    _emit("labels", out)
    return 0


# ---------------------------------------------------------------------------
# train


def _read_split_map(partitions_path: Path) -> dataio.Partition:
    return dataio.read_partition_csv(partitions_path)


def _train_regression(args) -> int:
    if not args.gold or not args.partitions:
        raise ParameterError("regression training needs --gold and --partitions")
    rate, window_n, hop_n = TASK_DEFAULTS[args.task]
    window_n = args.window if args.window is not None else window_n
    hop_n = args.hop if args.hop is not None else hop_n
    spec = dataio.WindowSpec(window=window_n, hop=hop_n)
    features_dir = _resolve(args.features)
    gold_dir = _resolve(args.gold)
    partition = _read_split_map(_resolve(args.partitions))

    gold_files = sorted(gold_dir.glob("*.csv"))
    if not gold_files:
        raise DataError(f"no gold files under {gold_dir}")
    items: dict[str, list] = {s: [] for s in dataio.SPLITS}
    full: dict[str, dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]] = {
        s: {} for s in dataio.SPLITS
    }
    input_dim = None
    for path in gold_files:
        rec = path.stem
        fpath = features_dir / f"{rec}.csv"
        if not fpath.is_file():
            _info(f"skipping {rec}: no feature file {fpath}")
            continue
        ts, gold_values, _ = dataio.read_gold_csv(path)
        fseq = dataio.read_feature_csv(fpath, recording_id=rec, feature_set=features_dir.name)
        x = dataio.align_to_labels(fseq, ts)
        input_dim = x.shape[1]
        split = partition.split_of(rec)
        full[split][rec] = (ts, x, gold_values)
        if split == "train":
            xw = dataio.window(x, spec)
            yw = dataio.window(gold_values, spec)
            items["train"] += [
                (wx, wy) for (_, wx), (_, wy) in zip(xw, yw) if len(wy) >= 2
            ]
        else:
            items[split].append((x, gold_values))
    if input_dim is None:
        raise DataError("no recordings had both gold and features")
    if not items["train"] or not items["devel"]:
        raise DataError("need train and devel recordings with gold and features")

    config = RegressorConfig(
        input_dim=input_dim,
        hidden_dim=args.hidden,
        layers=args.layers,
        bidirectional=args.bidirectional,
        head="regression",
        learning_rate=args.lr if args.lr is not None else TASK_LR[args.task],
        l2_penalty=args.l2,
        batch_size=args.batch,
        max_epochs=args.epochs,
        patience=args.patience,
        seed=args.seed,
    )
    model = SequenceModel(config)
    _info(
        f"training {args.task} regressor: dim {input_dim}, hidden {config.hidden_dim}, "
        f"{len(items['train'])} train windows, rate {rate} Hz"
    )
    history = train(
        model, items["train"], items["devel"],
        progress=lambda e, l, m: _info(f"epoch {e}: loss {l:.4f} devel_ccc {m:.4f}"),
    )

    out = _resolve(args.out)
    save_checkpoint(out / "model.json", model)
    history.write_csv(out / "history.csv")
    for split in dataio.SPLITS:
        for rec, (ts, x, _gold) in sorted(full[split].items()):
            preds = model.predict(x)
            dataio.write_prediction_csv(out / "preds" / split / f"{rec}.csv", ts, preds)
    _emit("devel_ccc", repr(round(history.best_metric(), 6)))
    _emit("best_epoch", history.best_epoch)
    _emit("epochs_run", len(history.rows))
    _emit("out", out)
    return 0


def _train_sent(args) -> int:
    if not args.segments or not args.labels:
        raise ParameterError("sent training needs --segments and --labels")
    _, window_n, hop_n = TASK_DEFAULTS[args.task]
    window_n = args.window if args.window is not None else window_n
    hop_n = args.hop if args.hop is not None else hop_n
    spec = dataio.WindowSpec(window=window_n, hop=hop_n)
    features_dir = _resolve(args.features)
    segments = dataio.read_segments_csv(_resolve(args.segments))
    labels = dataio.read_labels_csv(_resolve(args.labels))

    feats: dict[str, dataio.FeatureSequence] = {}
    input_dim = None
    seg_x: dict[str, np.ndarray] = {}
    for seg in segments:
        if seg.recording_id not in feats:
            fpath = features_dir / f"{seg.recording_id}.csv"
            if not fpath.is_file():
                raise DataError(f"no feature file for recording {seg.recording_id!r}: {fpath}")
            feats[seg.recording_id] = dataio.read_feature_csv(
                fpath, recording_id=seg.recording_id, feature_set=features_dir.name
            )
        fseq = feats[seg.recording_id]
        mask = dataio.slice_by_span(fseq.timestamps_ms, seg.start_ms, seg.end_ms)
        x = fseq.matrix[mask]
        if x.shape[0] < 1:
            raise DataError(f"segment {seg.segment_id!r} covers no feature frames")
        seg_x[seg.segment_id] = x
        input_dim = x.shape[1]

    items: dict[str, list] = {s: [] for s in dataio.SPLITS}
    seg_by_split: dict[str, list] = {s: [] for s in dataio.SPLITS}
    for seg in segments:
        seg_by_split[seg.partition].append(seg)
        if seg.partition == "test" and seg.segment_id not in labels:
            continue
        if seg.segment_id not in labels:
            raise DataError(f"no label for {seg.partition} segment {seg.segment_id!r}")
        label = labels[seg.segment_id]
        if seg.partition == "train":
            items["train"] += [
                (wx, label) for _, wx in dataio.window(seg_x[seg.segment_id], spec)
            ]
        else:
            items[seg.partition].append((seg_x[seg.segment_id], label))
    if not items["train"] or not items["devel"]:
        raise DataError("need labeled train and devel segments")

    n_classes = max(labels.values()) + 1 if labels else 5
    n_classes = max(n_classes, 5)
    config = RegressorConfig(
        input_dim=input_dim,
        hidden_dim=args.hidden,
        layers=args.layers,
        bidirectional=args.bidirectional,
        head="classification",
        n_classes=n_classes,
        learning_rate=args.lr if args.lr is not None else TASK_LR[args.task],
        l2_penalty=args.l2,
        batch_size=args.batch,
        max_epochs=args.epochs,
        patience=args.patience,
        seed=args.seed,
    )
    model = SequenceModel(config)
    _info(f"training sentiment classifier: dim {input_dim}, {len(items['train'])} train windows")
    history = train(
        model, items["train"], items["devel"],
        progress=lambda e, l, m: _info(f"epoch {e}: loss {l:.4f} devel_f1 {m:.4f}"),
    )

    out = _resolve(args.out)
    save_checkpoint(out / "model.json", model)
    history.write_csv(out / "history.csv")
    for split in dataio.SPLITS:
        if not seg_by_split[split]:
            continue
        pred_labels = {}
        logit_rows = {}
        for seg in seg_by_split[split]:
            logits = model.predict(seg_x[seg.segment_id])
            pred_labels[seg.segment_id] = int(np.argmax(logits))
            logit_rows[seg.segment_id] = logits
        dataio.write_labels_csv(out / "preds" / f"{split}_labels.csv", pred_labels)
        _write_logits_csv(out / "preds" / f"{split}_logits.csv", logit_rows)
    _emit("devel_f1", repr(round(history.best_metric(), 6)))
    _emit("best_epoch", history.best_epoch)
    _emit("epochs_run", len(history.rows))
    _emit("out", out)
    return 0


def cmd_train(args) -> int:
    if args.task == "sent":
        return _train_sent(args)
    return _train_regression(args)


# ---------------------------------------------------------------------------
# eval


def _read_pred_dir(pred_dir: Path, gold_dir: Path):
    preds = {}
    golds = {}
    files = sorted(pred_dir.glob("*.csv"))
    if not files:
        raise DataError(f"no prediction files under {pred_dir}")
    for path in files:
        rec = path.stem
        _, pvals = dataio.read_prediction_csv(path)
        gpath = gold_dir / f"{rec}.csv"
        if not gpath.is_file():
            raise DataError(f"no gold file for recording {rec!r}: {gpath}")
        _, gvals, _ = dataio.read_gold_csv(gpath)
        preds[rec] = pvals
        golds[rec] = gvals
    return preds, golds


def cmd_eval(args) -> int:
    if args.pred_labels or args.gold_labels:
        if not (args.pred_labels and args.gold_labels):
            raise ParameterError("classification eval needs --pred-labels and --gold-labels")
        pred_map = dataio.read_labels_csv(_resolve(args.pred_labels))
        gold_map = dataio.read_labels_csv(_resolve(args.gold_labels))
        shared = sorted(set(pred_map) & set(gold_map))
        if not shared:
            raise DataError("no shared segment ids between predictions and gold labels")
        preds = np.array([pred_map[s] for s in shared])
        golds = np.array([gold_map[s] for s in shared])
        score = macro_f1(preds, golds, n_classes=args.classes)
        _info(f"macro F1 over {len(shared)} segments")
        _emit("macro_f1", repr(round(score, 6)))
        return 0

    if not args.pred or not args.gold:
        raise ParameterError("regression eval needs --pred and --gold")
    preds, golds = _read_pred_dir(_resolve(args.pred), _resolve(args.gold))
    per_target = {args.name: partition_ccc(preds, golds)}
    if args.pred2 or args.gold2:
        if not (args.pred2 and args.gold2):
            raise ParameterError("second target needs both --pred2 and --gold2")
        preds2, golds2 = _read_pred_dir(_resolve(args.pred2), _resolve(args.gold2))
        per_target[args.name2] = partition_ccc(preds2, golds2)
    report = ScoreReport(per_target)
    if args.per_recording:
        for rec in sorted(preds):
            try:
                _info(f"{rec}: ccc {ccc(preds[rec], golds[rec]):.4f}")
            except ParameterError as exc:
                _info(f"{rec}: ccc undefined ({exc})")
    _info(report.table_text())
    for line in report.machine_lines():
        print(line)
    return 0


# ---------------------------------------------------------------------------
# fuse-late


def _stream_names(stream_dirs: list[Path]) -> list[str]:
    """Short unique labels for stream directories (parent-qualified on clashes)."""
    names = []
    for i, d in enumerate(stream_dirs):
        base = d.name or f"stream{i}"
        if sum(1 for s in stream_dirs if (s.name or "") == base) > 1 and d.parent.name:
            base = f"{d.parent.name}_{base}"
        names.append(base)
    seen: dict[str, int] = {}
    unique = []
    for name in names:
        if name in seen:
            seen[name] += 1
            unique.append(f"{name}{seen[name]}")
        else:
            seen[name] = 0
            unique.append(name)
    return unique


def _write_logits_csv(path: Path, rows: dict[str, np.ndarray]) -> None:
    if not rows:
        raise DataError("no logits to write")
    width = len(next(iter(rows.values())))
    header = "segment_id," + ",".join(f"l{i}" for i in range(width))
    lines = [header]
    for seg_id in sorted(rows):
        vec = np.asarray(rows[seg_id], dtype=np.float64)
        lines.append(seg_id + "," + ",".join(repr(float(v)) for v in vec))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _read_logits_csv(path: Path) -> dict[str, np.ndarray]:
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("segment_id,"):
        raise DataError(f"{path}: expected a 'segment_id,l0,...' header")
    out = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split(",")
        out[parts[0]] = np.array([float(v) for v in parts[1:]], dtype=np.float64)
    return out


def _fuse_late_regression(args) -> int:
    if not args.gold or not args.partitions:
        raise ParameterError("regression fusion needs --gold and --partitions")
    stream_dirs = [_resolve(s) for s in args.streams]
    if len(stream_dirs) < 2:
        raise ParameterError("late fusion needs at least two --streams directories")
    gold_dir = _resolve(args.gold)
    partition = _read_split_map(_resolve(args.partitions))

    names = _stream_names(stream_dirs)

    splits: dict[str, tuple[str, ...]] = {}
    for split in dataio.SPLITS:
        recs = [
            r for r in partition.recordings(split)
            if all((d / split / f"{r}.csv").is_file() for d in stream_dirs)
        ]
        if recs:
            splits[split] = tuple(recs)
    if "train" not in splits or "devel" not in splits:
        raise DataError("streams do not cover train and devel recordings")

    streams: dict[str, dict[str, np.ndarray]] = {}
    ts_by_rec: dict[str, np.ndarray] = {}
    for name, d in zip(names, stream_dirs):
        preds = {}
        for split, recs in splits.items():
            for rec in recs:
                ts, vals = dataio.read_prediction_csv(d / split / f"{rec}.csv")
                preds[rec] = vals
                ts_by_rec.setdefault(rec, ts)
        streams[name] = preds

    gold = {}
    for split in ("train", "devel"):
        for rec in splits[split]:
            gpath = gold_dir / f"{rec}.csv"
            if not gpath.is_file():
                raise DataError(f"no gold file for recording {rec!r}: {gpath}")
            _, gvals, _ = dataio.read_gold_csv(gpath)
            gold[rec] = gvals

    spec = None
    if args.window is not None:
        spec = dataio.WindowSpec(window=args.window, hop=args.hop or args.window)
    plan = FusionPlan(
        streams=streams, gold=gold, splits=splits, window_spec=spec,
        seed=args.seed, max_epochs=args.epochs, patience=args.patience,
        batch_size=args.batch,
    )
    _info(f"fusing {len(streams)} streams over {sum(len(v) for v in splits.values())} recordings")
    result = fuse_predictions(plan, task="regression")

    out = _resolve(args.out)
    save_checkpoint(out / "model.json", result.model)
    result.history.write_csv(out / "history.csv")
    for split, recs in result.predictions.items():
        for rec, vals in sorted(recs.items()):
            dataio.write_prediction_csv(out / "preds" / split / f"{rec}.csv", ts_by_rec[rec], vals)
    _emit("devel_ccc", repr(round(result.devel_score, 6)))
    _emit("streams", ",".join(result.stream_order))
    _emit("out", out)
    return 0


def _fuse_late_sent(args) -> int:
    if not args.gold_labels:
        raise ParameterError("sent fusion needs --gold-labels")
    stream_dirs = [_resolve(s) for s in args.streams]
    if len(stream_dirs) < 2:
        raise ParameterError("late fusion needs at least two --streams directories")
    gold_labels = dataio.read_labels_csv(_resolve(args.gold_labels))

    names = _stream_names(stream_dirs)
    splits: dict[str, tuple[str, ...]] = {}
    streams: dict[str, dict[str, np.ndarray]] = {}
    for name, d in zip(names, stream_dirs):
        per_item: dict[str, np.ndarray] = {}
        for split in dataio.SPLITS:
            path = d / f"{split}_logits.csv"
            if not path.is_file():
                continue
            rows = _read_logits_csv(path)
            per_item.update(rows)
            ids = tuple(sorted(rows))
            if split in splits and splits[split] != ids:
                raise DataError(f"streams disagree on {split} segment ids")
            splits[split] = ids
        streams[name] = per_item
    if "train" not in splits or "devel" not in splits:
        raise DataError("streams do not cover train and devel logits")

    gold = {
        seg: int(lab) for seg, lab in gold_labels.items()
        if seg in set(splits.get("train", ())) | set(splits.get("devel", ()))
    }
    plan = FusionPlan(
        streams=streams, gold=gold, splits=splits, seed=args.seed,
        max_epochs=args.epochs, patience=args.patience, batch_size=args.batch,
    )
    _info(f"fusing {len(streams)} logit streams")
    result = fuse_predictions(plan, task="sent")

    out = _resolve(args.out)
    save_checkpoint(out / "model.json", result.model)
    result.history.write_csv(out / "history.csv")
    for split, seg_preds in result.predictions.items():
        dataio.write_labels_csv(
            out / "preds" / f"{split}_labels.csv",
            {seg: int(lab) for seg, lab in seg_preds.items()},
        )
    _emit("devel_f1", repr(round(result.devel_score, 6)))
    _emit("streams", ",".join(result.stream_order))
    _emit("out", out)
    return 0


def cmd_fuse_late(args) -> int:
    if args.task == "sent":
        return _fuse_late_sent(args)
    return _fuse_late_regression(args)


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    parser, subparsers = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    argv = list(argv)

    try:
        config_path = None
        for i, token in enumerate(argv):
            if token == "--config" and i + 1 < len(argv):
                config_path = argv[i + 1]
            elif token.startswith("--config="):
                config_path = token.split("=", 1)[1]
        if config_path is not None:
            overrides = _load_config_file(Path(_resolve(config_path)))
            dests = {a.dest for sp in subparsers for a in sp._actions}
            converted = {}
            for key, text in overrides.items():
                if key not in dests:
                    raise ParameterError(f"unknown config key {key!r}")
                converted[key] = _convert_config_value(text)
            # rewrite the matching subparser defaults so explicit flags still win
            for sp in subparsers:
                own = {a.dest for a in sp._actions}
                hits = {k: v for k, v in converted.items() if k in own}
                if hits:
                    sp.set_defaults(**hits)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
