"""Bi-interactional hyperedge encoding ablation on the planted-similarity synthetic."""
import argparse

from _common import run_variants
from lincoln.synthetic import planted_similarity


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--negative-ratio", type=int, default=5)
    p.add_argument("--lineages", type=int, default=20)
    p.add_argument("--p-burst", type=float, default=0.5)
    p.add_argument("--echoes", type=int, default=2)
    a = p.parse_args()
    run_variants(lambda s: planted_similarity(lineages=a.lineages, p_burst=a.p_burst,
                                              echoes=a.echoes, seed=s),
                 range(a.seeds), ["full", "no_bihe"], runs=1, negative_ratio=a.negative_ratio)


if __name__ == "__main__":
    main()
