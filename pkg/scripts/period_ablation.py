"""PIN and intermediate-layer ablations on the planted-period synthetic."""
import argparse

from _common import run_variants
from lincoln.synthetic import planted_period


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--negative-ratio", type=int, default=10)
    p.add_argument("--period", type=int, default=3)
    p.add_argument("--staggered", action=argparse.BooleanOptionalAction, default=True)
    a = p.parse_args()
    run_variants(lambda s: planted_period(period=a.period, staggered=a.staggered, seed=s),
                 range(a.seeds), ["full", "no_pin", "final_only"],
                 runs=a.runs, negative_ratio=a.negative_ratio)


if __name__ == "__main__":
    main()
