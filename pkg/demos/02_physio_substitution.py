"""Replacing the least-trusted annotator with skin conductance.

Annotation-only fusion keeps every rater, however little the rater agrees
with the rest. The physiology variant ranks the annotators, drops the one
with the lowest fusion weight, and substitutes a processed electrodermal
activity (EDA) signal as a pseudo-rater: resampled from 1 kHz to the label
rate, Savitzky-Golay smoothed, standardized, then fused like anyone else.

    python3 demos/02_physio_substitution.py
"""

from __future__ import annotations

import numpy as np

from affectfuse.core import AnnotationTrace, RaterSet, standardize_values
from affectfuse.fuse import PhysioConfig, physio_fuse, raaw
from affectfuse.metrics import ccc
from affectfuse.synth import SynthConfig, gen_eda, gen_latent, gen_raters

config = SynthConfig(seed=21, duration_s=90.0, n_raters=3)
latent = gen_latent(config)
raters, _ = gen_raters(config, latent)
eda = gen_eda(config, latent)

# sabotage one rater so the ranking has an obvious loser
bad = np.asarray(raters.traces[1].values).copy()
rng = np.random.default_rng(0)
bad = 0.3 * bad[::-1] + 0.7 * rng.standard_normal(bad.size)
raters = RaterSet(
    recording_id=raters.recording_id,
    traces=(
        raters.traces[0],
        AnnotationTrace("r1", config.rate_hz, bad, raters.kind),
        raters.traces[2],
    ),
)

print("=== annotator ranking ===")
ranking = raaw(raters)
for rater_id, weight in zip(ranking.metadata["rater_ids"], ranking.weights):
    print(f"  {rater_id}: fusion weight {weight:.3f}")

print(f"\nEDA signal: {eda.values.size} samples at {eda.sample_rate_hz:.0f} Hz, "
      f"all non-negative (min {eda.values.min():.2f})")

gold = physio_fuse(raters, eda, PhysioConfig())
meta = gold.metadata
print("\n=== substituted fusion ===")
print(f"  removed annotator: {meta['removed_rater']} (index {meta['removed_index']})")
print(f"  fused set: {', '.join(meta['rater_ids'])}")
print(f"  EDA processing: Savitzky-Golay window {meta['sg_window']} order {meta['sg_polyorder']}, "
      f"resampled to {meta['target_hz']:.0f} Hz")
print("  weights:", ", ".join(f"{r}={w:.3f}" for r, w in zip(meta["rater_ids"], gold.weights)))

target = standardize_values(latent)[0]
print("\nhow the variants track the latent signal:")
print(f"  annotators only     CCC {ccc(ranking.values, target):.4f}")
print(f"  with EDA pseudo-rater CCC {ccc(gold.values, target):.4f}")
