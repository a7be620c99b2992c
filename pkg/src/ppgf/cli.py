"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import synth
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .data import load_csv, make_windows
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    Divergence,
    PPGFError,
    SchemeMismatch,
)
from .eval import VARIANTS, evaluate, run_ablation, write_autocorr, write_predictions
from .model import build, infer
from .pipeline import prepare
from .train import FULL_GRID, fit, grid_search, grid_size

log = logging.getLogger("ppgf")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _load_config(args):
    rc = RunConfig.from_file(args.config) if args.config else RunConfig()
    rc.apply_overrides(args.set)
    if args.seed is not None:
        rc.set("seed", str(args.seed))
    if args.out is not None:
        rc.set("run.out", args.out)
    return rc


def _out_dir(rc):
    out = Path(rc["run.out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _grouping(rc_or_flags):
    flags = rc_or_flags if isinstance(rc_or_flags, (set, frozenset)) else set(rc_or_flags["ablation"])
    return "equal_width" if "equal_width_grouping" in flags else "quantile"


def _prepare(rc):
    path = rc.data_path()
    if not rc["data.path"]:
        raise ConfigError("data.path is not set")
    frame = load_csv(path, rc["target_column"])
    return prepare(frame, rc.split_plan(), rc["lookback"], rc["horizon"])


def _model_config(rc, prep):
    mean, std = prep.target_stats
    return rc.model_config(D=prep.D, target_mean=mean, target_std=std)


# ------------------------------------------------------------------ commands


def cmd_prepare(rc):
    prep = _prepare(rc)
    out = _out_dir(rc)
    K = rc["groups"]
    scheme = prep.scheme(K, _grouping(rc))
    sets = prep.windows(K, _grouping(rc))
    counts = scheme.counts(prep.train.target)
    summary = {
        "t": prep.frame.t, "D": prep.frame.D, "target": prep.frame.target_name,
        "split_sizes": [prep.train.t, prep.valid.t, prep.test.t],
        "K": K, "grouping": scheme.kind, "boundaries": scheme.boundaries,
        "bin_counts": counts.tolist(),
        "windows": {name: len(ds) for name, ds in sets.items()},
    }
    scheme.save(out / "scheme.json")
    lags = min(rc["autocorr_lags"], prep.frame.t - 1)
    write_autocorr(prep.frame.target, lags, out / "autocorr.csv")
    print(f"series: t={summary['t']} D={summary['D']} target={summary['target']}")
    print("split sizes (train/valid/test): {}/{}/{}".format(*summary["split_sizes"]))
    print(f"grouping: {scheme.kind}, K={K}")
    for k, ((lo, hi), n) in enumerate(zip(scheme.boundaries, counts), start=1):
        print(f"  group {k}: [{lo:.6g}, {hi:.6g}]  train count {n}")
    print("windows: " + ", ".join(f"{k}={v}" for k, v in summary["windows"].items()))
    return summary


def _train_one(rc, prep, out, mcfg=None):
    mcfg = mcfg or _model_config(rc, prep)
    tcfg = rc.train_config()
    tcfg = replace(tcfg, seed=mcfg.seed, lr=mcfg.lr)
    sets = prep.windows(mcfg.K, _grouping(set(mcfg.ablation)))
    model = build(mcfg)
    log.info("model has %d parameters", model.parameter_count())
    best, history = fit(model, sets["train"], sets["valid"], tcfg)
    history.write_csv(out / "history.csv")
    history.write_timing(out / "timing.csv")
    save_checkpoint(best, out / "best.ckpt")
    sets["train"].scheme.save(out / "scheme.json")
    return best, history


def cmd_train(rc, grid=False, jobs=None):
    prep = _prepare(rc)
    out = _out_dir(rc)
    (out / "config.resolved").write_text(rc.resolved_text())
    if not grid:
        _, history = _train_one(rc, prep, out)
        b = history.best
        print(f"trained {len(history.records)} epochs; best epoch {history.best_epoch} "
              f"valid L_total {b.valid_L_total:.6g}"
              + ("" if b.valid_rmse is None else f" valid RMSE {b.valid_rmse:.6g}"))
        return out
    space = rc.grid_space() or FULL_GRID
    print(f"grid search: {grid_size(space)} combinations")
    mcfg = _model_config(rc, prep)
    best, rows = grid_search(space, prep, mcfg, rc.train_config(), budget=rc["grid.budget"],
                             jobs=jobs or rc["jobs"], out_dir=out, grouping=_grouping(rc))
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"leaderboard: {len(rows)} runs, {failed} failed -> {out / 'leaderboard.csv'}")
    if best is None:
        raise Divergence("every grid combination diverged")
    print(f"best combination: {best}")
    chosen = next(r for r in rows if all(r.get(k) == v for k, v in best.items()))
    final = replace(mcfg, K=int(best.get("groups", mcfg.K)), seed=chosen["seed"],
                    lr=float(best.get("lr", mcfg.lr)),
                    **{k: float(best[k]) for k in ("lambda1", "lambda2", "lambda3") if k in best})
    (out / "best_combination.json").write_text(json.dumps(best, sort_keys=True))
    _train_one(rc, prep, out, final)
    return out


def _resolve_scheme(rc, prep, model, scheme_path):
    if scheme_path:
        from .data import GroupingScheme
        scheme = GroupingScheme.load(scheme_path)
    else:
        K = rc["groups"]
        scheme = prep.scheme(K, _grouping(set(model.config.ablation)))
    if model.config.classifier and scheme.K != model.config.K:
        raise SchemeMismatch(f"checkpoint has K={model.config.K} but scheme has K={scheme.K}")
    return scheme


def cmd_evaluate(rc, checkpoint=None, split="test", scheme_path=None):
    prep = _prepare(rc)
    out = _out_dir(rc)
    model = load_checkpoint(checkpoint or out / "best.ckpt")
    scheme = _resolve_scheme(rc, prep, model, scheme_path)
    frame = {"train": prep.train, "valid": prep.valid, "test": prep.test}[split]
    ds = make_windows(frame, scheme, prep.normalizer, model.config.L, model.config.T)
    report, pred = evaluate(model, ds)
    report.write(out)
    write_predictions(ds, pred, out / "predictions.csv")
    print(f"{split}: " + ", ".join(
        f"{name}={getattr(report, name):.6g}" for name in
        ("rmse", "mae", "corr", "macro_precision", "macro_recall", "macro_f1")
        if getattr(report, name) is not None))
    return report


def cmd_predict(rc, checkpoint=None, scheme_path=None):
    """Forecast the T steps that follow the end of the series."""
    prep = _prepare(rc)
    out = _out_dir(rc)
    model = load_checkpoint(checkpoint or out / "best.ckpt")
    scheme = _resolve_scheme(rc, prep, model, scheme_path)
    L = model.config.L
    x = prep.normalizer.apply(prep.frame.values[-L:])[None]
    pred = infer(model, scheme, x)
    rows = []
    for s in range(model.config.T):
        rows.append({
            "step": s + 1,
            "k_hat": None if pred.k_hat is None else int(pred.k_hat[0, s]),
            "y_hat": None if pred.y_hat is None else float(pred.y_hat[0, s]),
            "c_hat": None if pred.c_hat is None else float(pred.c_hat[0, 0]),
        })
    with open(out / "forecast.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["step", "k_hat", "y_hat", "c_hat"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: "" if v is None else v for k, v in r.items()})
    for r in rows:
        print(r)
    return rows


ABLATION_COLUMNS = ("rmse", "mae", "corr", "macro_precision", "macro_recall", "macro_f1")
ABSENT = "--"


def cmd_ablate(rc):
    prep = _prepare(rc)
    out = _out_dir(rc)
    mcfg = _model_config(rc, prep)
    tcfg = rc.train_config()
    table = []
    for variant in VARIANTS:
        report, extras = run_ablation(variant, prep, mcfg, tcfg)
        row = {"variant": variant}
        for col in ABLATION_COLUMNS:
            v = getattr(report, col)
            if v is None:
                # a head the variant lacks, versus a metric that is merely undefined
                absent = not (report.has_classification if col.startswith("macro")
                              else report.has_forecast)
                v = ABSENT if absent else float("nan")
            row[col] = v
        row["boundaries"] = json.dumps(extras["scheme"].boundaries)
        table.append(row)
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["variant", *ABLATION_COLUMNS, "boundaries"],
                           lineterminator="\n")
        w.writeheader()
        for r in table:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    print(f"{'variant':<20}{'RMSE':>10}{'MAE':>10}{'CORR':>8}{'P%':>8}{'R%':>8}{'F1':>8}")
    for r in table:
        cells = []
        for col, width in zip(ABLATION_COLUMNS, (10, 10, 8, 8, 8, 8)):
            v = r[col]
            if v == ABSENT:
                cells.append(f"{ABSENT:>{width}}")
            elif col.startswith("macro"):
                cells.append(f"{100 * v:>{width}.2f}")
            else:
                cells.append(f"{v:>{width}.4g}")
        print(f"{r['variant']:<20}" + "".join(cells))
    return table


def cmd_synth(kind, length, seed, out, params):
    kw = {}
    for pair in params or []:
        if "=" not in pair:
            raise ConfigError(f"--param expects KEY=VALUE, got {pair!r}")
        k, v = pair.split("=", 1)
        kw[k.strip()] = float(v) if any(c in v for c in ".eE") else int(v)
    kw.update(length=length, seed=seed)
    values = synth.generate(kind, **kw)
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    synth.write_csv(path, values, kind, kw)
    print(f"wrote {len(values)} rows of {kind} to {path}")
    return path


# ---------------------------------------------------------------------- main


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file (INI sections)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    common.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    common.add_argument("--out", help="output directory (synth: output file)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="ppgf", description="Pattern-guided time-series forecasting")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("prepare", parents=[common], help="split, group and window a dataset")
    p = sub.add_parser("train", parents=[common], help="train a model (or grid-search)")
    p.add_argument("--grid", action="store_true", help="grid search over [grid] values")
    p.add_argument("--jobs", type=int, help="parallel grid combinations")
    p = sub.add_parser("evaluate", parents=[common], help="score a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--scheme", help="scheme.json to use instead of refitting")
    p = sub.add_parser("predict", parents=[common], help="forecast past the end of the series")
    p.add_argument("--checkpoint")
    p.add_argument("--scheme")
    sub.add_parser("ablate", parents=[common], help="run all ablation variants")
    p = sub.add_parser("synth", parents=[common], help="write a synthetic series")
    p.add_argument("kind", choices=synth.KINDS)
    p.add_argument("--length", type=int, default=2000)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            if not args.out:
                raise ConfigError("synth needs --out PATH")
            cmd_synth(args.kind, args.length, 0 if args.seed is None else args.seed,
                      args.out, args.param)
            return EXIT_OK
        rc = _load_config(args)
        if args.command == "prepare":
            cmd_prepare(rc)
        elif args.command == "train":
            cmd_train(rc, grid=args.grid, jobs=args.jobs)
        elif args.command == "evaluate":
            cmd_evaluate(rc, args.checkpoint, args.split, args.scheme)
        elif args.command == "predict":
            cmd_predict(rc, args.checkpoint, args.scheme)
        elif args.command == "ablate":
            cmd_ablate(rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SchemeMismatch, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Divergence as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except PPGFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
