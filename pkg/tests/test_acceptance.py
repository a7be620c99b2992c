"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line; the terminal summary repeats them
in order. Run on its own with ``pytest tests/test_acceptance.py -s``.
"""

import csv
import math
import time

import numpy as np
import pytest

from ppgf import synth
from ppgf.checkpoint import from_bytes, load_checkpoint, save_checkpoint, to_bytes
from ppgf.cli import main
from ppgf.data import SeriesFrame, decode_absolute, encode_relative, fit_equal_width_grouping, fit_grouping
from ppgf.errors import BadMagic, TruncatedCheckpoint, ZeroVariance
from ppgf.eval import autocorrelation, confidence_diagnostics, evaluate, macro_classification, point_metrics, run_ablation
from ppgf.model import PPGFConfig, build, compute_losses, forward, infer
from ppgf.nnet import grad_check
from ppgf.pipeline import prepare
from ppgf.train import TrainConfig

SEEDS = (0, 1, 2)


# 1 -------------------------------------------------------------------------


def test_c01_gradient_oracle(verdict):
    cfg = PPGFConfig(L=8, D=2, T=1, K=2, conv_channels=8, model_dim=8, hidden_dim=8, heads=1,
                     ffn_dim=16, output_dim=8, lambda1=1, lambda2=1, lambda3=5,
                     dtype="float64", seed=11)
    model = build(cfg)
    rng = np.random.default_rng(11)
    x = rng.normal(size=(4, 8, 2))
    k = np.array([[1], [2], [2], [1]])
    targets = type("T", (), {"k": k, "dy": rng.uniform(size=(4, 1))})
    base = forward(model, x, k, training=True)
    # stop-gradient quantities are held at their base values for both passes
    frozen = {"c_star": base.c_star, "gate": base.c_hat.data}

    def loss():
        return compute_losses(forward(model, x, k, training=True, frozen=frozen), targets, cfg).total

    t0 = time.perf_counter()
    err = grad_check(loss, model.parameters(), eps=1e-5)
    took = time.perf_counter() - t0
    verdict(1, err < 1e-4 and took < 60,
            f"max rel err {err:.2e} over {model.parameter_count()} params in {took:.1f}s")


# 2 -------------------------------------------------------------------------


def test_c02_grouping_balance(verdict):
    rng = np.random.default_rng(0)
    vals = rng.uniform(size=10_000)
    assert np.unique(vals).size == 10_000
    worst = 0.0
    for K in (2, 3, 4, 8):
        counts = fit_grouping(vals, K).counts(vals)
        worst = max(worst, float(np.max(np.abs(counts - 10_000 / K))))
    tail = rng.lognormal(size=10_000)
    eq = fit_equal_width_grouping(tail, 4).counts(tail)
    qt = fit_grouping(tail, 4).counts(tail)
    eq_ratio = eq.max() / max(eq.min(), 1)
    qt_ratio = qt.max() / qt.min()
    verdict(2, worst <= 1 and eq_ratio > 10 and qt_ratio <= 1.01,
            f"max |count - n/K| {worst:.2f}; equal-width ratio {eq_ratio:.1f}, quantile {qt_ratio:.4f}")


# 3 -------------------------------------------------------------------------


def test_c03_round_trip(verdict):
    rng = np.random.default_rng(1)
    train = rng.normal(size=5000) * 3 + 1
    worst = 0.0
    for K in (2, 3, 4, 8):
        s = fit_grouping(train, K)
        y = rng.uniform(train.min(), train.max(), size=10_000)
        k, dy = encode_relative(s, y)
        worst = max(worst, float(np.max(np.abs(decode_absolute(s, k, dy) - y))))
    verdict(3, worst <= 1e-9, f"max round-trip error {worst:.2e}")


# 4 -------------------------------------------------------------------------


def _brute_point(yt, yp):
    n = len(yt)
    mt, mp = math.fsum(yt) / n, math.fsum(yp) / n
    rmse = math.sqrt(math.fsum((a - b) ** 2 for a, b in zip(yt, yp)) / n)
    mae = math.fsum(abs(a - b) for a, b in zip(yt, yp)) / n
    num = math.fsum((a - mt) * (b - mp) for a, b in zip(yt, yp))
    den = math.sqrt(math.fsum((a - mt) ** 2 for a in yt) * math.fsum((b - mp) ** 2 for b in yp))
    return rmse, mae, num / den


def _brute_macro(kt, kp, K):
    P = R = F = 0.0
    for c in range(1, K + 1):
        tp = sum(a == c and b == c for a, b in zip(kt, kp))
        npred, ntrue = sum(b == c for b in kp), sum(a == c for a in kt)
        p = tp / npred if npred else 0.0
        r = tp / ntrue if ntrue else 0.0
        P, R, F = P + p, R + r, F + (2 * p * r / (p + r) if p + r else 0.0)
    return P / K, R / K, F / K


def test_c04_metrics_oracle(verdict):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        n, K = int(rng.integers(2, 51)), int(rng.integers(2, 9))
        yt, yp = rng.normal(size=n) * 10, rng.normal(size=n) * 10
        kt, kp = rng.integers(1, K + 1, size=n), rng.integers(1, K + 1, size=n)
        got = (*point_metrics(yt, yp), *macro_classification(kt, kp, K)[:3])
        want = (*_brute_point(list(yt), list(yp)), *_brute_macro(list(kt), list(kp), K))
        worst = max(worst, max(abs(a - b) for a, b in zip(got, want)))
    verdict(4, worst <= 1e-12, f"max deviation from brute force {worst:.1e} over 100 instances")


# 5, 6, 7 ------------------------------------------------------------------


@pytest.fixture(scope="module")
def two_regime_runs():
    """PPGF and w/oC trained on two_regime for each seed.

    The seed drives both the generated series and the model/training RNG.
    """
    t0 = time.perf_counter()
    runs = []
    for seed in SEEDS:
        y = synth.two_regime(length=2000, seed=seed)
        prep = prepare(SeriesFrame(y, ["value"], 0), L=32, T=1)
        mc = PPGFConfig(L=32, D=1, T=1, K=2, seed=seed)
        tc = TrainConfig(max_epochs=200, patience=20, seed=seed)
        full, full_x = run_ablation("PPGF", prep, mc, tc)
        woc, _ = run_ablation("PPGFw/oC", prep, mc, tc)
        runs.append({"seed": seed, "full": full, "extras": full_x, "woc": woc})
    return runs, time.perf_counter() - t0


@pytest.mark.slow
def test_c05_end_to_end_learning(verdict, two_regime_runs):
    runs, took = two_regime_runs
    halved = []
    for r in runs:
        h = r["extras"]["history"]
        halved.append(min(rec.train_L_total for rec in h.records) < 0.5 * h.initial_train_total)
    full = [r["full"].rmse for r in runs]
    woc = [r["woc"].rmse for r in runs]
    ok = all(halved) and np.median(full) < np.median(woc) and took < 600
    verdict(5, ok, f"halved {halved}; test RMSE median PPGF {np.median(full):.4f} "
                   f"vs w/oC {np.median(woc):.4f} (per seed {np.round(full, 4).tolist()} "
                   f"vs {np.round(woc, 4).tolist()}); {took:.0f}s")


@pytest.mark.slow
def test_c06_confidence_separation(verdict, two_regime_runs):
    runs, _ = two_regime_runs
    gaps = []
    for r in runs:
        ds = r["extras"]["datasets"]["valid"]
        pred = infer(r["extras"]["model"], ds.scheme, ds.x)
        d = confidence_diagnostics(ds.k[:, 0], pred.k_hat[:, 0], pred.k_aux, pred.c_hat[:, 0])
        if d["mean_c_hat_incorrect"] is None:
            gaps.append(float("nan"))
        else:
            gaps.append(d["mean_c_hat_correct"] - d["mean_c_hat_incorrect"])
    med = float(np.median(gaps))
    verdict(6, med > 0, f"validation mean c_hat (correct - misclassified) per seed "
                        f"{np.round(gaps, 4).tolist()}, median {med:.4f}")


@pytest.mark.slow
def test_c07_consistency(verdict, two_regime_runs):
    runs, _ = two_regime_runs
    checked, bad = 0, 0
    models = [(r["extras"]["model"], r["extras"]["datasets"]) for r in runs]
    # an untrained model with inflated offsets exercises the ΔŶ > 1 branch
    raw = build(PPGFConfig(L=32, K=2, seed=9))
    raw.modules["fc3"]["b"].data[...] = 1.5
    models.append((raw, runs[0]["extras"]["datasets"]))
    for model, sets in models:
        for name in ("train", "valid", "test"):
            report, pred = evaluate(model, sets[name])
            checked += report.consistency_checked
            s = sets[name].scheme
            left, right = s.lefts[pred.k_hat - 1], s.rights[pred.k_hat - 1]
            bad += int(np.sum(pred.y_hat < left))
            inside = pred.dy_hat <= 1
            bad += int(np.sum(pred.y_hat[inside] > right[inside] + 1e-9 * np.abs(right[inside])))
    verdict(7, bad == 0 and checked > 0, f"{checked} inferred samples checked, {bad} violations")


# 8 -------------------------------------------------------------------------


def test_c08_determinism(verdict, tmp_path):
    y = synth.two_regime(length=400, burst_len=20, seed=5)
    data = tmp_path / "s.csv"
    synth.write_csv(data, y, "two_regime", {"seed": 5})
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"[data]\npath = {data}\nlookback = 16\n\n[train]\nmax_epochs = 5\n")
    outs = [tmp_path / "a", tmp_path / "b"]
    codes = [main(["train", "--config", str(cfg), "--seed", "7", "--out", str(o)]) for o in outs]
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()
               for n in ("history.csv", "best.ckpt"))
    verdict(8, codes == [0, 0] and same, f"exit codes {codes}; history.csv and best.ckpt identical: {same}")


# 9 -------------------------------------------------------------------------


def test_c09_checkpoint_integrity(verdict, tmp_path):
    model = build(PPGFConfig(L=16, D=2, K=3, seed=2))
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    x = np.random.default_rng(0).normal(size=(20, 16, 2))
    scheme = fit_grouping(np.arange(30.0), 3)
    a, b = infer(model, scheme, x), infer(back, scheme, x)
    identical = all(getattr(a, f).tobytes() == getattr(b, f).tobytes()
                    for f in ("k_hat", "y_hat", "c_hat", "dy_hat"))
    blob = to_bytes(model)
    rejected = []
    for bad, err in ((b"Q" + blob[1:], BadMagic), (blob[:-1], TruncatedCheckpoint),
                     (blob[: len(blob) // 2], TruncatedCheckpoint)):
        try:
            from_bytes(bad)
            rejected.append(False)
        except err:
            rejected.append(True)
    verdict(9, identical and all(rejected) and back.config == model.config,
            f"round-trip identical: {identical}; corrupt/truncated rejected: {rejected}")


# 10 ------------------------------------------------------------------------


def test_c10_autocorrelation(verdict):
    rng = np.random.default_rng(10)
    r0 = [float(autocorrelation(rng.normal(size=n) * s + m, 5)[0])
          for n, s, m in ((50, 1, 0), (300, 1e-3, 1e3), (1000, 1e4, -7))]
    P = 50
    sine = synth.sine(length=2000, period=P, noise=0.0)
    rP = autocorrelation(sine, P)[P]
    try:
        autocorrelation(np.full(100, 3.0), 5)
        const_err = False
    except ZeroVariance:
        const_err = True
    verdict(10, all(v == 1.0 for v in r0) and rP >= 0.95 and const_err,
            f"R(0) values {r0}; sine R(P={P}) {rP:.4f}; constant series rejected: {const_err}")


# 11 ------------------------------------------------------------------------


def test_c11_ablation_structure(verdict, tmp_path):
    y = synth.two_regime(length=400, burst_len=20, seed=3)
    data = tmp_path / "s.csv"
    synth.write_csv(data, y, "two_regime", {"seed": 3})
    cfg = tmp_path / "abl.cfg"
    cfg.write_text(f"[data]\npath = {data}\nlookback = 16\n\n[train]\nmax_epochs = 3\n")
    out = tmp_path / "abl"
    code = main(["ablate", "--config", str(cfg), "--out", str(out)])
    with open(out / "ablation.csv", newline="") as fh:
        rows = {r["variant"]: r for r in csv.DictReader(fh)}
    forecast, cls = ("rmse", "mae", "corr"), ("macro_precision", "macro_recall", "macro_f1")
    ok = (
        code == 0 and len(rows) == 8
        and all(rows["PPGFw/oR"][c] == "--" for c in forecast)
        and all(rows["PPGFw/oR"][c] != "--" for c in cls)
        and all(rows["PPGFw/oC"][c] == "--" for c in cls)
        and all(rows["PPGFw/oC"][c] != "--" for c in forecast)
        and all(rows[v][c] != "--" for v in rows if v not in ("PPGFw/oR", "PPGFw/oC")
                for c in forecast + cls)
    )
    verdict(11, ok, f"{len(rows)} rows: {', '.join(rows)}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
