"""Train the full model and the direct regressor on two_regime series.

    python scripts/two_regime_compare.py --seeds 0 1 2 --epochs 200

Prints test RMSE per seed with the medians, plus the confidence diagnostics
for the full model on the validation split.
"""

import argparse
import time

import numpy as np

from ppgf import synth
from ppgf.data import SeriesFrame
from ppgf.eval import confidence_diagnostics, run_ablation
from ppgf.model import PPGFConfig, infer
from ppgf.pipeline import prepare
from ppgf.train import TrainConfig


def run_seed(seed, epochs, length, relative_head):
    y = synth.two_regime(length=length, seed=seed)
    prep = prepare(SeriesFrame(y, ["value"], 0), L=32, T=1)
    mc = PPGFConfig(L=32, K=2, seed=seed, relative_head=relative_head)
    tc = TrainConfig(max_epochs=epochs, patience=20, seed=seed)
    full, extras = run_ablation("PPGF", prep, mc, tc)
    woc, _ = run_ablation("PPGFw/oC", prep, mc, tc)
    ds = extras["datasets"]["valid"]
    pred = infer(extras["model"], ds.scheme, ds.x)
    diag = confidence_diagnostics(ds.k[:, 0], pred.k_hat[:, 0], pred.k_aux, pred.c_hat[:, 0])
    return full, woc, diag, extras["history"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--length", type=int, default=2000)
    ap.add_argument("--relative-head", choices=("per_class", "shared"), default="per_class")
    args = ap.parse_args()

    full_rmse, woc_rmse = [], []
    for seed in args.seeds:
        t0 = time.perf_counter()
        full, woc, diag, hist = run_seed(seed, args.epochs, args.length, args.relative_head)
        full_rmse.append(full.rmse)
        woc_rmse.append(woc.rmse)
        ratio = min(r.train_L_total for r in hist.records) / hist.initial_train_total
        print(f"seed {seed}: PPGF rmse {full.rmse:.4f} f1 {full.macro_f1:.3f} | "
              f"w/oC rmse {woc.rmse:.4f} | best/initial L_total {ratio:.3f} | "
              f"{time.perf_counter() - t0:.0f}s")
        print(f"    c_hat correct {diag['mean_c_hat_correct']:.3f} "
              f"misclassified {diag['mean_c_hat_incorrect'] or float('nan'):.3f} "
              f"outcomes {diag['outcomes']}")
    print(f"median rmse: PPGF {np.median(full_rmse):.4f}  w/oC {np.median(woc_rmse):.4f}")


if __name__ == "__main__":
    main()
