"""Late fusion: a small LSTM trained on stacked prediction streams.

Regression streams are per-step prediction traces stacked into a
(T, n_streams) input per recording. Sentiment-class streams are per-segment
logit vectors concatenated into one length-1 sequence per segment. Either
way the fusion model trains on the train split, is early-stopped on devel,
and never needs test gold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dataio import WindowSpec, window
from .errors import ParameterError
from .seqmodel import RegressorConfig, SequenceModel, TrainHistory, evaluate, train

__all__ = [
    "REGRESSION_FUSION",
    "SENT_FUSION",
    "FusionPlan",
    "FusionResult",
    "fuse_predictions",
]

# Fusion model shapes are fixed per task family; only the protocol knobs
# (epochs, patience, batch, seed, window) vary.
REGRESSION_FUSION = {
    "hidden_dim": 64,
    "layers": 1,
    "bidirectional": False,
    "learning_rate": 1e-4,
}
SENT_FUSION = {
    "hidden_dim": 32,
    "layers": 2,
    "bidirectional": True,
    "learning_rate": 5e-3,
}


@dataclass(frozen=True)
class FusionPlan:
    """Inputs to one late-fusion run.

    streams: stream name -> item id -> prediction array. Regression items
    are (T,) traces; sentiment items are (n_classes,) logit vectors.
    gold: item id -> target, required for train and devel items only.
    splits: split name -> item ids ("train" and "devel" are required).
    """

    streams: Mapping[str, Mapping[str, np.ndarray]]
    gold: Mapping[str, np.ndarray | int]
    splits: Mapping[str, tuple[str, ...]]
    window_spec: WindowSpec | None = None
    seed: int = 101
    max_epochs: int = 100
    patience: int = 15
    batch_size: int = 32

    def __post_init__(self) -> None:
        if len(self.streams) < 2:
            raise ParameterError("late fusion needs at least two prediction streams")
        for split in ("train", "devel"):
            if not self.splits.get(split):
                raise ParameterError(f"late fusion needs a non-empty {split!r} split")
        items = {i for ids in self.splits.values() for i in ids}
        for name, preds in self.streams.items():
            missing = sorted(items - set(preds))
            if missing:
                raise ParameterError(f"stream {name!r} is missing items: {missing[:5]}")
        for split in ("train", "devel"):
            for item in self.splits[split]:
                if item not in self.gold:
                    raise ParameterError(f"no gold for {split} item {item!r}")


@dataclass
class FusionResult:
    stream_order: tuple[str, ...]
    config: RegressorConfig
    history: TrainHistory
    devel_score: float
    predictions: dict[str, dict] = field(default_factory=dict)
    model: SequenceModel | None = None


def _stack_regression(plan: FusionPlan, order: tuple[str, ...], item: str) -> np.ndarray:
    traces = []
    length = None
    for name in order:
        tr = np.asarray(plan.streams[name][item], dtype=np.float64)
        if tr.ndim != 1:
            raise ParameterError(f"stream {name!r} item {item!r} is not a 1-d trace")
        if length is None:
            length = tr.size
        elif tr.size != length:
            raise ParameterError(
                f"stream lengths disagree for item {item!r}: {length} vs {tr.size}"
            )
        traces.append(tr)
    return np.stack(traces, axis=1)


def _stack_sent(plan: FusionPlan, order: tuple[str, ...], item: str) -> np.ndarray:
    parts = [np.asarray(plan.streams[name][item], dtype=np.float64).ravel() for name in order]
    return np.concatenate(parts)[None, :]


def fuse_predictions(plan: FusionPlan, task: str = "regression") -> FusionResult:
    """Train the fusion model and predict every item in every split."""
    if task not in ("regression", "sent"):
        raise ParameterError(f"unknown fusion task {task!r}")
    order = tuple(plan.streams.keys())

    def stack(item: str) -> np.ndarray:
        if task == "regression":
            return _stack_regression(plan, order, item)
        return _stack_sent(plan, order, item)

    stacked = {
        item: stack(item) for ids in plan.splits.values() for item in ids
    }
    input_dim = next(iter(stacked.values())).shape[1]
    for item, mat in stacked.items():
        if mat.shape[1] != input_dim:
            raise ParameterError(f"inconsistent stacked width for item {item!r}")

    shape = REGRESSION_FUSION if task == "regression" else SENT_FUSION
    config = RegressorConfig(
        input_dim=input_dim,
        head="regression" if task == "regression" else "classification",
        seed=plan.seed,
        max_epochs=plan.max_epochs,
        patience=plan.patience,
        batch_size=plan.batch_size,
        **shape,
    )
    model = SequenceModel(config)

    def gold_vec(item: str):
        if task == "regression":
            g = np.asarray(plan.gold[item], dtype=np.float64)
            if g.size != stacked[item].shape[0]:
                raise ParameterError(f"gold length mismatch for item {item!r}")
            return g
        return int(plan.gold[item])

    train_items = []
    for item in plan.splits["train"]:
        x, y = stacked[item], gold_vec(item)
        if task == "regression" and plan.window_spec is not None:
            xw = window(x, plan.window_spec)
            yw = window(y, plan.window_spec)
            train_items += [(wx, wy) for (_, wx), (_, wy) in zip(xw, yw) if len(wy) >= 2]
        else:
            train_items.append((x, y))
    devel_items = [(stacked[i], gold_vec(i)) for i in plan.splits["devel"]]

    history = train(model, train_items, devel_items)
    devel_score = evaluate(model, devel_items)

    result = FusionResult(
        stream_order=order,
        config=config,
        history=history,
        devel_score=devel_score,
        model=model,
    )
    for split, ids in plan.splits.items():
        out: dict = {}
        for item in ids:
            if task == "regression":
                out[item] = model.predict(stacked[item])
            else:
                out[item] = model.predict_class(stacked[item])
        result.predictions[split] = out
    return result
