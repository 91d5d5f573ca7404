"""Shared helpers for the experiment scripts."""
import time

import numpy as np

from lincoln.trainer import TrainConfig, live_update_run

VARIANTS = {
    "full": {},
    "no_pin": {"disable_pin": True},
    "no_bihe": {"disable_bihe": True},
    "final_only": {"intermediate_layers": "final_only"},
}


def run_variants(make_ds, seeds, names, **cfg):
    """Mean AUROC/AP per variant over dataset seeds; prints one row per variant."""
    print(f"{'variant':<12}{'auroc':>8}{'ap':>8}{'secs':>8}  per-seed auroc")
    out = {}
    for name in names:
        t0, roc, ap = time.perf_counter(), [], []
        for s in seeds:
            rep = live_update_run(make_ds(s), TrainConfig(seed=s, **cfg, **VARIANTS[name]))
            roc.append(rep["mean_auroc"])
            ap.append(rep["mean_ap"])
        out[name] = (float(np.mean(roc)), float(np.mean(ap)))
        print(f"{name:<12}{out[name][0]:8.4f}{out[name][1]:8.4f}{time.perf_counter() - t0:8.1f}  "
              + " ".join(f"{r:.3f}" for r in roc), flush=True)
    return out
