"""AUROC against encoder depth k, with and without intermediate recurrent state."""
import argparse
import time

from lincoln.synthetic import planted_period
from lincoln.trainer import TrainConfig, live_update_run


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--depths", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--negative-ratio", type=int, default=10)
    a = p.parse_args()
    ds = planted_period()
    print(f"{'k':>3}{'mode':>12}{'auroc':>8}{'ap':>8}{'secs':>8}")
    for k in a.depths:
        for mode in ("all", "final_only"):
            t0 = time.perf_counter()
            rep = live_update_run(ds, TrainConfig(k=k, intermediate_layers=mode, runs=a.runs,
                                                  negative_ratio=a.negative_ratio))
            print(f"{k:>3}{mode:>12}{rep['mean_auroc']:8.4f}{rep['mean_ap']:8.4f}"
                  f"{time.perf_counter() - t0:8.1f}", flush=True)


if __name__ == "__main__":
    main()
