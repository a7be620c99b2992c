"""Forecast and classification metrics, per-pattern breakdowns, the
autocorrelation diagnostic, confidence diagnostics and the ablation runner.

All forecast metrics are computed on the raw target scale. Classification
metrics are macro averages over all K classes, with 0/0 taken as 0.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConsistencyViolation, ShapeError, ZeroVariance

VARIANTS = {
    "PPGFw/oR": "no_relative",
    "PPGFw/oC": "no_classifier",
    "PPGFw/oConv1d": "no_conv",
    "PPGFw/oTransformer": "no_transformer",
    "PPGFw/oGRN": "no_grn",
    "PPGFw/oGroup": "equal_width_grouping",
    "PPGFw/oConf": "no_confidnet",
    "PPGF": None,
}


# -------------------------------------------------------------------- metrics


def _pair(y_true, y_pred):
    a = np.asarray(y_true, dtype=np.float64).reshape(-1)
    b = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ShapeError("metrics need at least one sample")
    return a, b


def point_rmse(y_true, y_pred):
    a, b = _pair(y_true, y_pred)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def point_mae(y_true, y_pred):
    a, b = _pair(y_true, y_pred)
    return float(np.mean(np.abs(a - b)))


def point_corr(y_true, y_pred):
    a, b = _pair(y_true, y_pred)
    if a.size < 2:
        raise ShapeError("correlation needs at least two samples")
    da, db = a - a.mean(), b - b.mean()
    va, vb = np.sum(da * da), np.sum(db * db)
    if va == 0 or vb == 0:
        raise ZeroVariance("correlation undefined for a constant series")
    return float(np.clip(np.sum(da * db) / np.sqrt(va * vb), -1.0, 1.0))


def point_metrics(y_true, y_pred):
    """(RMSE, MAE, CORR)."""
    return point_rmse(y_true, y_pred), point_mae(y_true, y_pred), point_corr(y_true, y_pred)


def confusion_matrix(k_true, k_pred, K):
    t = np.asarray(k_true).reshape(-1)
    p = np.asarray(k_pred).reshape(-1)
    if t.shape != p.shape:
        raise ShapeError(f"length mismatch: {t.size} vs {p.size}")
    for arr in (t, p):
        if arr.size and (arr.min() < 1 or arr.max() > K):
            raise ValueError(f"class label outside 1..{K}")
    cm = np.zeros((K, K), dtype=np.int64)
    np.add.at(cm, (t - 1, p - 1), 1)
    return cm


def _safe_div(num, den):
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den > 0)


def macro_classification(k_true, k_pred, K):
    """Macro precision, recall and F1 over classes 1..K plus per-class rows."""
    cm = confusion_matrix(k_true, k_pred, K)
    tp = np.diag(cm).astype(np.float64)
    precision = _safe_div(tp, cm.sum(axis=0).astype(np.float64))
    recall = _safe_div(tp, cm.sum(axis=1).astype(np.float64))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    per_class = [
        {"class": k + 1, "support": int(cm[k].sum()), "precision": float(precision[k]),
         "recall": float(recall[k]), "f1": float(f1[k])}
        for k in range(K)
    ]
    return float(precision.mean()), float(recall.mean()), float(f1.mean()), per_class


def per_pattern_report(scheme, y_true, y_pred, k_true, k_pred):
    """Bucket samples by their true group and score each bucket.

    Missing inputs (``y_pred`` or ``k_pred`` None) drop the corresponding
    metrics. CORR is omitted for buckets smaller than 2 or with no variance.
    """
    K = scheme.K
    kt = np.asarray(k_true).reshape(-1)
    yt = None if y_true is None else np.asarray(y_true, dtype=np.float64).reshape(-1)
    yp = None if y_pred is None else np.asarray(y_pred, dtype=np.float64).reshape(-1)
    kp = None if k_pred is None else np.asarray(k_pred).reshape(-1)
    per_class = macro_classification(kt, kp, K)[3] if kp is not None else None
    rows = []
    for k in range(1, K + 1):
        mask = kt == k
        row = {"pattern": k, "interval": list(scheme.boundaries[k - 1]), "count": int(mask.sum())}
        if row["count"] and yp is not None:
            row["rmse"] = point_rmse(yt[mask], yp[mask])
            row["mae"] = point_mae(yt[mask], yp[mask])
            try:
                row["corr"] = point_corr(yt[mask], yp[mask])
            except (ZeroVariance, ShapeError):
                pass
        if row["count"] and per_class is not None:
            row.update({m: per_class[k - 1][m] for m in ("precision", "recall", "f1")})
        rows.append(row)
    return rows


def autocorrelation(series, max_lag):
    """R(τ) for τ = 0..max_lag with the biased (divide by t) estimator."""
    a = np.asarray(series, dtype=np.float64).reshape(-1)
    t = a.size
    if max_lag < 0 or t <= max_lag:
        raise ShapeError(f"series of length {t} too short for max_lag={max_lag}")
    d = a - a.mean()
    c0 = np.dot(d, d) / t
    if c0 <= 0:
        raise ZeroVariance("autocorrelation undefined for a constant series")
    return np.array([np.dot(d[: t - tau], d[tau:]) / t / c0 for tau in range(max_lag + 1)])


# ----------------------------------------------------------------- diagnostics


def check_consistency(scheme, k_hat, dy_hat, y_hat):
    """ŷ must sit at or above its class's lower bound, and inside the class
    interval whenever ΔŶ <= 1. Violations raise; returns the sample count."""
    k = np.asarray(k_hat).reshape(-1)
    dy = np.asarray(dy_hat, dtype=np.float64).reshape(-1)
    y = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    left, right = scheme.lefts[k - 1], scheme.rights[k - 1]
    # an ulp of slack: left + (right - left) need not round back to right
    slack = 4 * np.spacing(np.maximum(np.abs(left), np.abs(right)))
    below = y < left
    above = (dy <= 1) & (y > right + slack)
    if below.any() or above.any():
        bad = int(np.flatnonzero(below | above)[0])
        raise ConsistencyViolation(
            f"sample {bad}: y_hat={y[bad]} outside class {k[bad]} interval "
            f"[{left[bad]}, {right[bad]}] with dy={dy[bad]}")
    return int(k.size)


def confidence_diagnostics(k_true, k_final, k_aux, c_hat):
    """ĉ split by final-classifier correctness, and the four outcomes of
    calibration: the auxiliary (uncalibrated) prediction vs the final one."""
    kt = np.asarray(k_true).reshape(-1)
    kf = np.asarray(k_final).reshape(-1)
    c = np.asarray(c_hat, dtype=np.float64).reshape(-1)
    correct = kf == kt
    out = {
        "mean_c_hat_correct": float(c[correct].mean()) if correct.any() else None,
        "mean_c_hat_incorrect": float(c[~correct].mean()) if (~correct).any() else None,
        "n_correct": int(correct.sum()),
        "n_incorrect": int((~correct).sum()),
    }
    if k_aux is not None:
        ka = np.asarray(k_aux).reshape(-1)
        aux_ok = ka == kt
        out["outcomes"] = {
            "correct_kept": int((aux_ok & correct).sum()),
            "misclassified_not_calibrated": int((~aux_ok & ~correct).sum()),
            "misclassified_calibrated": int((~aux_ok & correct).sum()),
            "correct_falsely_calibrated": int((aux_ok & ~correct).sum()),
        }
    return out


# --------------------------------------------------------------------- report


@dataclass
class EvalReport:
    n_samples: int
    rmse: float | None = None
    mae: float | None = None
    corr: float | None = None
    macro_precision: float | None = None
    macro_recall: float | None = None
    macro_f1: float | None = None
    per_pattern: list = field(default_factory=list)
    confidence: dict | None = None
    consistency_checked: int = 0

    @property
    def has_forecast(self):
        return self.rmse is not None

    @property
    def has_classification(self):
        return self.macro_f1 is not None

    def to_dict(self):
        return asdict(self)

    def write(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(json.dumps(self.to_dict(), indent=2))
        cols = ["pattern", "interval_left", "interval_right", "count", "rmse", "mae", "corr",
                "precision", "recall", "f1"]
        with open(out_dir / "report_per_pattern.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.per_pattern:
                flat = {**r, "interval_left": r["interval"][0], "interval_right": r["interval"][1]}
                w.writerow(["" if flat.get(c) is None else flat.get(c) for c in cols])


def evaluate(model, dataset, batch_size=512):
    """Score ``model`` on ``dataset``; returns ``(EvalReport, Inference)``."""
    from .model import infer

    scheme = dataset.scheme
    pred = infer(model, scheme, dataset.x, batch_size)
    report = EvalReport(n_samples=int(dataset.y.size))
    y_pred = pred.y_hat
    if y_pred is not None:
        report.rmse = point_rmse(dataset.y, y_pred)
        report.mae = point_mae(dataset.y, y_pred)
        try:
            report.corr = point_corr(dataset.y, y_pred)
        except ZeroVariance:
            report.corr = None
    k_pred = pred.k_hat
    if k_pred is not None:
        report.macro_precision, report.macro_recall, report.macro_f1, _ = macro_classification(
            dataset.k, k_pred, scheme.K)
        if pred.dy_hat is not None:
            report.consistency_checked = check_consistency(scheme, k_pred, pred.dy_hat, y_pred)
        if pred.c_hat is not None:
            report.confidence = confidence_diagnostics(
                dataset.k[:, 0], k_pred[:, 0], pred.k_aux, pred.c_hat[:, 0])
    report.per_pattern = per_pattern_report(scheme, dataset.y, y_pred, dataset.k, k_pred)
    return report, pred


def write_predictions(dataset, pred, path):
    N, T = dataset.y.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "step", "y_true", "y_pred", "k_true", "k_pred", "c_hat"])
        for i in range(N):
            for s in range(T):
                w.writerow([
                    i, s + 1, repr(float(dataset.y[i, s])),
                    "" if pred.y_hat is None else repr(float(pred.y_hat[i, s])),
                    int(dataset.k[i, s]),
                    "" if pred.k_hat is None else int(pred.k_hat[i, s]),
                    "" if pred.c_hat is None else repr(float(pred.c_hat[i, 0])),
                ])


def write_autocorr(series, max_lag, path):
    r = autocorrelation(series, max_lag)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lag", "R"])
        for lag, v in enumerate(r):
            w.writerow([lag, repr(float(v))])
    return r


# ------------------------------------------------------------------- ablation


def variant_flag(variant):
    """Accept "PPGFw/oC", "w/oC" or the raw flag name ("no_classifier")."""
    if variant in VARIANTS:
        return VARIANTS[variant]
    if f"PPGF{variant}" in VARIANTS:
        return VARIANTS[f"PPGF{variant}"]
    if variant in VARIANTS.values():
        return variant
    raise ConfigError(f"unknown ablation variant {variant!r}; choose from {list(VARIANTS)}")


def run_ablation(variant, prepared, model_config, train_config):
    """Build, train and evaluate one variant on the test split.

    Returns ``(EvalReport, extras)`` where extras carries the trained model,
    its history and the grouping scheme it used.
    """
    from dataclasses import replace

    from .model import build
    from .train import fit

    flag = variant_flag(variant)
    flags = set(model_config.ablation)
    if flag is not None:
        flags.add(flag)
    grouping = "equal_width" if "equal_width_grouping" in flags else "quantile"
    mean, std = prepared.target_stats
    cfg = replace(model_config, ablation=frozenset(flags), target_mean=mean, target_std=std,
                  D=prepared.D, L=prepared.L, T=prepared.T)
    sets = prepared.windows(cfg.K, grouping)
    model = build(cfg)
    best, history = fit(model, sets["train"], sets["valid"], train_config)
    report, pred = evaluate(best, sets["test"])
    return report, {"model": best, "history": history, "scheme": sets["test"].scheme,
                    "prediction": pred, "datasets": sets}
