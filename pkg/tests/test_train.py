import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppgf import synth
from ppgf.checkpoint import FORMAT_VERSION, MAGIC, from_bytes, load_checkpoint, save_checkpoint, to_bytes
from ppgf.data import SeriesFrame, WindowedDataset
from ppgf.errors import BadMagic, CheckpointError, ConfigError, Divergence, TruncatedCheckpoint, VersionMismatch
from ppgf.model import PPGFConfig, build, infer
from ppgf.pipeline import prepare
from ppgf.train import (
    FULL_GRID,
    TrainConfig,
    evaluate_losses,
    fit,
    grid_combinations,
    grid_search,
    grid_size,
    write_leaderboard,
)

TINY = dict(L=8, D=1, T=1, K=2, conv_channels=4, model_dim=4, hidden_dim=4, heads=1,
            ffn_dim=4, output_dim=4)


@pytest.fixture(scope="module")
def prepared():
    y = synth.sine(length=120, period=12, seed=0)
    return prepare(SeriesFrame(y, ["value"], 0), L=8, T=1)


def tiny(**kw):
    return PPGFConfig(**{**TINY, **kw})


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(patience=0)


def test_zero_lr_leaves_parameters(prepared):
    sets = prepared.windows(2)
    m = build(tiny())
    before = m.state_dict()
    best, hist = fit(m, sets["train"], sets["valid"], TrainConfig(lr=0.0, max_epochs=3, patience=5))
    for name, v in before.items():
        assert v.tobytes() == m.params[name].data.tobytes() == best.params[name].data.tobytes()
    assert len(hist.records) == 3


def test_fit_deterministic(prepared, tmp_path):
    sets = prepared.windows(2)
    cfg = TrainConfig(max_epochs=4, patience=5, seed=3)
    runs = []
    for i in range(2):
        best, hist = fit(build(tiny(seed=3)), sets["train"], sets["valid"], cfg)
        hist.write_csv(tmp_path / f"h{i}.csv")
        runs.append((to_bytes(best), (tmp_path / f"h{i}.csv").read_bytes()))
    assert runs[0] == runs[1]


def test_best_snapshot_is_lowest_validation(prepared):
    sets = prepared.windows(2)
    best, hist = fit(build(tiny()), sets["train"], sets["valid"],
                     TrainConfig(max_epochs=15, patience=3, lr=5e-3))
    vals = [r.valid_L_total for r in hist.records]
    assert hist.best_epoch == int(np.argmin(vals)) + 1
    assert evaluate_losses(best, sets["valid"])[3] == pytest.approx(min(vals), rel=1e-6)
    assert len(hist.records) <= 15


class RecordingSet(WindowedDataset):
    seen = None

    def subset(self, idx):
        if isinstance(idx, np.ndarray) and RecordingSet.seen is not None:
            RecordingSet.seen.append(idx.copy())
        return super().subset(idx)


@settings(max_examples=8, deadline=None)
@given(st.integers(1, 40))
def test_batching_covers_each_sample_once(batch_size):
    y = synth.sine(length=90, period=10, seed=1)
    prep = prepare(SeriesFrame(y, ["value"], 0), L=8, T=1)
    tr = prep.windows(2)["train"]
    rec = RecordingSet(tr.x, tr.y, tr.dy, tr.k, tr.L, tr.T, tr.scheme)
    RecordingSet.seen = []
    fit(build(tiny()), rec, prep.windows(2)["valid"],
        TrainConfig(batch_size=batch_size, max_epochs=1, patience=1))
    batches, RecordingSet.seen = RecordingSet.seen, None
    np.testing.assert_array_equal(np.sort(np.concatenate(batches)), np.arange(len(rec)))
    assert len(batches) == -(-len(rec) // batch_size)
    assert all(len(b) == batch_size for b in batches[:-1])


def test_divergence_raises(prepared):
    sets = prepared.windows(2)
    with pytest.raises(Divergence) as info:
        fit(build(tiny()), sets["train"], sets["valid"], TrainConfig(lr=1e30, max_epochs=3))
    assert info.value.epoch >= 1


@pytest.mark.slow
def test_sinusoid_halves_loss():
    y = synth.sine(length=2000, seed=0)
    prep = prepare(SeriesFrame(y, ["value"], 0), L=32, T=1)
    sets = prep.windows(2)
    _, hist = fit(build(PPGFConfig(L=32, K=2)), sets["train"], sets["valid"],
                  TrainConfig(max_epochs=200, patience=20))
    assert min(r.train_L_total for r in hist.records) < 0.5 * hist.initial_train_total


# -------------------------------------------------------------------- grid


def test_full_grid_size():
    assert grid_size(FULL_GRID) == 2000
    assert len(grid_combinations(FULL_GRID)) == 2000


def test_grid_order_is_lexicographic():
    combos = grid_combinations({"lambda1": [1, 2], "lr": [0.1, 0.2]})
    assert combos == [{"lr": 0.1, "lambda1": 1}, {"lr": 0.1, "lambda1": 2},
                      {"lr": 0.2, "lambda1": 1}, {"lr": 0.2, "lambda1": 2}]
    with pytest.raises(ConfigError):
        grid_combinations({})
    with pytest.raises(ConfigError):
        grid_combinations({"momentum": [0.9]})


def test_grid_single_combination(prepared, tmp_path):
    best, rows = grid_search({"lr": [1e-3]}, prepared, tiny(), TrainConfig(max_epochs=2),
                             out_dir=tmp_path)
    assert best == {"lr": 1e-3}
    assert len(rows) == 1 and rows[0]["status"] == "ok" and rows[0]["seed"] == 0
    lines = (tmp_path / "leaderboard.csv").read_text().splitlines()
    assert len(lines) == 2


@pytest.mark.parametrize("jobs", [1, 2])
def test_grid_diverging_run_fails(prepared, jobs):
    best, rows = grid_search({"lr": [1e-3, 1e30]}, prepared, tiny(),
                             TrainConfig(max_epochs=2), jobs=jobs)
    assert [r["status"] for r in rows] == ["ok", "failed"]
    assert best == {"lr": 1e-3}
    assert [r["seed"] for r in rows] == [0, 1]


def test_grid_budget(prepared):
    _, rows = grid_search({"lr": [1e-3, 2e-3, 3e-3]}, prepared, tiny(),
                          TrainConfig(max_epochs=1), budget=2)
    assert [r["lr"] for r in rows] == [1e-3, 2e-3]


def test_grid_groups_key(prepared, tmp_path):
    best, rows = grid_search({"groups": [2, 3]}, prepared, tiny(), TrainConfig(max_epochs=1))
    write_leaderboard(rows, tmp_path / "lb.csv")
    assert {r["groups"] for r in rows} == {2, 3}
    assert best["groups"] in (2, 3)


# -------------------------------------------------------------- checkpoint


def test_checkpoint_roundtrip(tmp_path, prepared):
    m = build(tiny(seed=4, ablation={"no_grn"}))
    save_checkpoint(m, tmp_path / "m.ckpt")
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert back.config == m.config
    x = prepared.windows(2)["test"].x
    s = prepared.scheme(2)
    a, b = infer(m, s, x), infer(back, s, x)
    assert a.y_hat.tobytes() == b.y_hat.tobytes()
    assert a.k_hat.tobytes() == b.k_hat.tobytes()
    assert (tmp_path / "m.ckpt").read_bytes().startswith(MAGIC)


def test_checkpoint_float64(tmp_path):
    m = build(tiny(dtype="float64"))
    back = from_bytes(to_bytes(m))
    for n, p in m.params.items():
        assert p.data.tobytes() == back.params[n].data.tobytes()


def test_checkpoint_rejections():
    blob = to_bytes(build(tiny()))
    with pytest.raises(BadMagic):
        from_bytes(b"X" + blob[1:])
    with pytest.raises(TruncatedCheckpoint):
        from_bytes(blob[:-3])
    with pytest.raises(TruncatedCheckpoint):
        from_bytes(MAGIC + b'{"format_version": 1')
    with pytest.raises(CheckpointError):
        from_bytes(blob + b"\0")
    bumped = blob.replace(f'"format_version":{FORMAT_VERSION}'.encode(), b'"format_version":99')
    with pytest.raises(VersionMismatch):
        from_bytes(bumped)
