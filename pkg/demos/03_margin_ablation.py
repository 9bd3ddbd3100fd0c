"""
Margin ablation
===============

Without a margin the hinge is satisfied as soon as a pixel is merely
closer to its own query than to the others, and the clusters stay loose.
This sweeps the margin over a few seeds, exactly like ``ciae ablate``.
"""

import numpy as np

from ciae.config import RunConfig, SweepConfig
from ciae.pipeline import run_sweep

base = RunConfig()
base.train.embedding_dim = 8
sweep = SweepConfig(base, "loss.margin", [0.0, 0.05, 0.15, 0.3], seeds=3)

rows = run_sweep(sweep)
for value in sweep.values:
    pqs = [r.pq for v, _, r in rows if v == value]
    print(f"margin {value:.2f}: PQ per seed {np.round(pqs, 3)}  median {np.median(pqs):.3f}")
