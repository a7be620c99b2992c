"""Mini-batch training with Adam, early stopping on validation loss, and an
exhaustive grid search over the tuned hyper-parameters."""

from __future__ import annotations

import copy
import csv
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint  # noqa: F401  (re-export)
from .errors import ConfigError, Divergence, NonFiniteError
from .eval import point_rmse
from .model import build, compute_losses, forward, infer
from .nnet import Adam, backward

log = logging.getLogger(__name__)

# searched values for each tunable key; keys are explored in this order
FULL_GRID = {
    "lr": [1e-4, 5e-4, 1e-3, 5e-3],
    "groups": [2, 3, 4, 8],
    "lambda1": [1, 2, 3, 4, 5],
    "lambda2": [1, 2, 3, 4, 5],
    "lambda3": [1, 2, 3, 4, 5],
}
GRID_ORDER = ("lr", "groups", "lambda1", "lambda2", "lambda3")


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 500
    patience: int = 20
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")


@dataclass
class EpochRecord:
    epoch: int
    train_L_conf: float
    train_L_cls: float
    train_L_reg: float
    train_L_total: float
    valid_L_total: float
    valid_rmse: float | None
    wall_time: float


HISTORY_COLUMNS = ("epoch", "train_L_conf", "train_L_cls", "train_L_reg", "train_L_total",
                   "valid_L_total", "valid_rmse")


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int | None = None
    initial_train_total: float | None = None
    stopped_early: bool = False

    @property
    def best(self):
        return None if self.best_epoch is None else self.records[self.best_epoch - 1]

    def write_csv(self, path):
        """One row per epoch. Wall time is left out so reruns compare equal."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HISTORY_COLUMNS)
            for r in self.records:
                w.writerow([_fmt(getattr(r, c)) for c in HISTORY_COLUMNS])

    def write_timing(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("epoch", "wall_time"))
            for r in self.records:
                w.writerow((r.epoch, f"{r.wall_time:.6f}"))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def clone_model(model):
    twin = build(model.config)
    twin.load_state_dict(model.state_dict())
    return twin


def evaluate_losses(model, dataset, batch_size=256):
    """Sample-weighted mean of each loss term over ``dataset``."""
    sums = np.zeros(4)
    for start in range(0, len(dataset), batch_size):
        batch = dataset.subset(slice(start, start + batch_size))
        out = forward(model, batch.x, batch.k, training=True)
        lb = compute_losses(out, batch, model.config)
        sums += len(batch) * np.array([lb.L_conf, lb.L_cls, lb.L_reg, lb.L_total])
    return sums / len(dataset)


def validation_rmse(model, dataset):
    if not model.config.relative and model.config.classifier:
        return None
    pred = infer(model, dataset.scheme, dataset.x)
    return point_rmse(dataset.y.reshape(-1), pred.y_hat.reshape(-1))


def fit(model, train_set, valid_set, config):
    """Train in place and return ``(best_model, history)``.

    The returned model is a copy holding the snapshot with the lowest
    validation L_total; training stops after ``config.patience`` epochs
    without strict improvement.
    """
    if len(train_set) == 0 or len(valid_set) == 0:
        raise ValueError("training and validation sets must be nonempty")
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.parameters(), lr=config.lr)
    history = TrainHistory()
    try:
        history.initial_train_total = float(evaluate_losses(model, train_set)[3])
    except NonFiniteError as exc:
        raise Divergence(f"non-finite loss before training: {exc}", 0, None) from exc

    best_state, best_val, stale = model.state_dict(), np.inf, 0
    n = len(train_set)
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        sums = np.zeros(4)
        for b, start in enumerate(range(0, n, config.batch_size)):
            batch = train_set.subset(order[start:start + config.batch_size])
            try:
                out = forward(model, batch.x, batch.k, training=True)
                lb = compute_losses(out, batch, model.config)
                if not np.isfinite(lb.L_total):
                    raise NonFiniteError("non-finite total loss")
                optimizer.zero_grad()
                backward(lb.total)
                optimizer.step()
            except NonFiniteError as exc:
                raise Divergence(f"diverged at epoch {epoch}, batch {b}: {exc}", epoch, b) from exc
            sums += len(batch) * np.array([lb.L_conf, lb.L_cls, lb.L_reg, lb.L_total])
        train_terms = sums / n
        try:
            val_total = float(evaluate_losses(model, valid_set)[3])
            val_rmse = validation_rmse(model, valid_set)
        except NonFiniteError as exc:
            raise Divergence(f"diverged at epoch {epoch} (validation): {exc}", epoch, None) from exc
        history.records.append(EpochRecord(epoch, *map(float, train_terms), val_total,
                                           val_rmse, time.perf_counter() - t0))
        log.debug("epoch %d train %.5f valid %.5f", epoch, train_terms[3], val_total)
        if val_total < best_val:
            best_val, best_state, stale = val_total, model.state_dict(), 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                history.stopped_early = True
                break

    best = build(model.config)
    best.load_state_dict(best_state)
    return best, history


# ---------------------------------------------------------------- grid search


def grid_combinations(space):
    unknown = set(space) - set(GRID_ORDER)
    if unknown:
        raise ConfigError(f"unknown grid keys {sorted(unknown)}; allowed {GRID_ORDER}")
    keys = [k for k in GRID_ORDER if k in space]
    if not keys or any(len(space[k]) == 0 for k in keys):
        raise ConfigError("grid search space is empty")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(space[k] for k in keys))]


def grid_size(space):
    return int(np.prod([len(v) for v in space.values()])) if space else 0


def _run_combination(index, combo, prepared, model_config, train_config, grouping):
    K = int(combo.get("groups", model_config.K))
    seed = train_config.seed + index
    mcfg = replace(model_config, K=K, seed=seed,
                   **{k: float(combo[k]) for k in ("lambda1", "lambda2", "lambda3") if k in combo})
    tcfg = replace(train_config, seed=seed, lr=float(combo.get("lr", train_config.lr)))
    row = {"index": index, **combo, "seed": seed, "status": "ok", "valid_rmse": None,
           "valid_L_total": None, "best_epoch": None, "epochs": 0}
    try:
        sets = prepared.windows(K, grouping)
        model = build(mcfg)
        _, history = fit(model, sets["train"], sets["valid"], tcfg)
    except Divergence as exc:
        row["status"] = "failed"
        row["error"] = str(exc)
        return row
    best = history.best
    row.update(valid_rmse=best.valid_rmse, valid_L_total=best.valid_L_total,
               best_epoch=history.best_epoch, epochs=len(history.records))
    return row


def grid_search(space, prepared, model_config, train_config, budget=None, jobs=1,
                out_dir=None, grouping="quantile"):
    """Train one model per combination and rank by validation RMSE.

    Combinations are enumerated lexicographically in :data:`GRID_ORDER`; a
    ``budget`` keeps only the first ``budget`` of them. Diverging runs are
    recorded as failed. Returns ``(best_combination, leaderboard_rows)``.
    """
    combos = grid_combinations(space)
    log.info("grid search over %d combinations", len(combos))
    if budget is not None:
        combos = combos[:budget]
    args = [(i, c, prepared, model_config, train_config, grouping) for i, c in enumerate(combos)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda a: _run_combination(*a), args))
    else:
        rows = [_run_combination(*a) for a in args]
    rows.sort(key=lambda r: r["index"])

    ok = [r for r in rows if r["status"] == "ok" and r["valid_rmse"] is not None]
    if not ok:
        ok = [r for r in rows if r["status"] == "ok"]
        key = (lambda r: (r["valid_L_total"], r["index"]))
    else:
        key = (lambda r: (r["valid_rmse"], r["index"]))
    best = copy.deepcopy(combos[min(ok, key=key)["index"]]) if ok else None
    if out_dir is not None:
        write_leaderboard(rows, Path(out_dir) / "leaderboard.csv")
    return best, rows


def write_leaderboard(rows, path):
    cols = ["index", *[k for k in GRID_ORDER if k in rows[0]], "seed", "status",
            "valid_rmse", "valid_L_total", "best_epoch", "epochs"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])
