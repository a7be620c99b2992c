"""Compare quantile and equal-width grouping on a skewed series.

    python scripts/grouping_balance.py --groups 2 4 8
"""

import argparse

from ppgf import synth
from ppgf.data import fit_equal_width_grouping, fit_grouping


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--groups", type=int, nargs="+", default=[2, 4, 8])
    ap.add_argument("--length", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    v = synth.long_tail(length=args.length, seed=args.seed)
    for K in args.groups:
        q = fit_grouping(v, K).counts(v)
        e = fit_equal_width_grouping(v, K).counts(v)
        print(f"K={K}\n  quantile    {q.tolist()}\n  equal-width {e.tolist()}")


if __name__ == "__main__":
    main()
