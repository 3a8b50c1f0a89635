"""Lorenz-96 with constant boundaries through the configuration runner.

This is the same code path as ``penkf run --config ...``; rows come back
as ``(repeat, step, algorithm, metric, value, diverged)``.  Run with
``python3 demos/05_lorenz96.py``.
"""

import numpy as np

from penkf.runner import ExperimentConfig, collect_rows, rows_to_array

cfg = ExperimentConfig.from_dict({
    "model": {"kind": "lr96", "n": 8, "m": 8},
    "algorithms": ["ukf", "sqrtenkf", "penkf"],
    "ensemble_N": 16,
    "steps": 100,
    "repeats": 5,
    "master_seed": 2,
    "metrics": ["rmse_truth"],
})
rows = collect_rows(cfg)

print("median RMSE against the true state")
print(" step   " + "  ".join(f"{a:>8s}" for a in cfg.algorithms))
arrays = {a: rows_to_array(rows, a, "rmse_truth", cfg.repeats, cfg.steps)
          for a in cfg.algorithms}
for k in (1, 10, 50, 100):
    print(f"{k:5d}   " + "  ".join(f"{np.median(arrays[a][:, k - 1]):8.4f}"
                                    for a in cfg.algorithms))
