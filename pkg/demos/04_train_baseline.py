"""Training the LSTM baseline on synthetic recordings.

A small regression run end to end: generate a few recordings that share
one feature extractor, window the sequences, train an LSTM with the CCC
loss, early-stop on the development score, and evaluate the restored best
model. Everything is plain numpy underneath; the gradients come from
backpropagation through time and are finite-difference checked in the
test suite.

    python3 demos/04_train_baseline.py
"""

from __future__ import annotations

import numpy as np

from affectfuse.core import standardize_values
from affectfuse.dataio import WindowSpec, window
from affectfuse.seqmodel import RegressorConfig, SequenceModel, evaluate, train
from affectfuse.synth import SynthConfig, gen_features, gen_latent

BASE_SEED = 40

# six recordings; the feature extractor (mix_seed) is shared so the devel
# recordings are solvable with what the train recordings teach
recordings = {}
for i in range(6):
    cfg = SynthConfig(seed=BASE_SEED + i, duration_s=120.0, feature_dim=6)
    latent = gen_latent(cfg)
    features = gen_features(cfg, latent, mix_seed=BASE_SEED)
    recordings[f"rec_{i}"] = (features, standardize_values(latent)[0])

spec = WindowSpec(window=40, hop=20)
train_set = []
for rec in ("rec_0", "rec_1", "rec_2", "rec_3"):
    features, target = recordings[rec]
    for (start, chunk), (_, gold) in zip(window(features, spec), window(target, spec)):
        if gold.size >= 2:  # the CCC loss needs at least two steps
            train_set.append((chunk, gold))
devel_set = [recordings[rec] for rec in ("rec_4", "rec_5")]  # full sequences

print("=== data ===")
print(f"4 train recordings -> {len(train_set)} windows of up to {spec.window} steps")
print(f"2 devel recordings scored on their full {devel_set[0][0].shape[0]}-step sequences")

config = RegressorConfig(
    input_dim=6,
    hidden_dim=24,
    layers=1,
    learning_rate=2e-3,
    batch_size=8,
    max_epochs=40,
    patience=10,
    seed=BASE_SEED,
)
model = SequenceModel(config)
print(f"\n=== model ===\n{config.layers}-layer LSTM, hidden {config.hidden_dim}, "
      f"{model.param_count()} parameters, CCC loss")

history = train(model, train_set, devel_set)

print("\n=== training ===")
for epoch, loss, metric in history.rows[:3]:
    print(f"  epoch {epoch:3d}: train loss {loss:.4f}, devel CCC {metric:.4f}")
print("  ...")
for epoch, loss, metric in history.rows[-2:]:
    print(f"  epoch {epoch:3d}: train loss {loss:.4f}, devel CCC {metric:.4f}")
print(f"stopped early: {history.stopped_early}; best epoch {history.best_epoch} "
      f"with devel CCC {history.best_metric():.4f}")

# the best snapshot is restored automatically, so evaluate() reproduces it
print(f"restored model devel CCC: {evaluate(model, devel_set):.4f}")

pred = model.predict(recordings["rec_5"][0])
gold = recordings["rec_5"][1]
print(f"\nrec_5 prediction range [{pred.min():+.2f}, {pred.max():+.2f}] "
      f"vs gold [{gold.min():+.2f}, {gold.max():+.2f}]")
