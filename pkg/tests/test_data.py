import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ppgf.data import (
    GroupingScheme,
    SeriesFrame,
    SplitPlan,
    apply,
    assign_group,
    assign_groups,
    decode_absolute,
    encode_relative,
    fit_equal_width_grouping,
    fit_grouping,
    fit_normalizer,
    load_csv,
    make_windows,
    split_chronological,
)
from ppgf.errors import (
    EmptyFile,
    EmptySplit,
    GroupOutOfRange,
    KTooSmall,
    MissingFile,
    NonFiniteValue,
    NonNumericValue,
    SeriesTooShort,
    SplitFractionError,
    TooFewValues,
    UnknownColumn,
    ZeroVariance,
    ZeroWidthInterval,
)


def scheme_of(*pairs):
    b = np.array(pairs, dtype=float)
    return GroupingScheme(b[:, 0], b[:, 1])


def frame_of(values):
    v = np.asarray(values, dtype=float)
    return SeriesFrame(v, [f"c{i}" for i in range(v.reshape(len(v), -1).shape[1])], 0)


# ------------------------------------------------------------------ loading


def test_load_csv_with_timestamps(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("ts,load,temp\n2020-01-01,1.5,20\n2020-01-02,2.5,21\n2020-01-03,3.5,19\n")
    f = load_csv(p, "load")
    assert (f.t, f.D, f.target_col) == (3, 2, 0)
    assert f.timestamps == ["2020-01-01", "2020-01-02", "2020-01-03"]
    np.testing.assert_array_equal(f.target, [1.5, 2.5, 3.5])


def test_load_csv_nan_reports_row(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("a,b\n1,2\n3,NaN\n")
    with pytest.raises(NonFiniteValue) as info:
        load_csv(p, "a")
    assert info.value.row == 1


def test_load_csv_univariate(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("# comment\nvalue\n1\n2\n3\n")
    f = load_csv(p, "value")
    assert f.D == 1 and f.t == 3 and f.timestamps is None


def test_load_csv_errors(tmp_path):
    with pytest.raises(MissingFile):
        load_csv(tmp_path / "nope.csv", "x")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(EmptyFile):
        load_csv(empty, "x")
    p = tmp_path / "s.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(UnknownColumn, match="'zzz'"):
        load_csv(p, "zzz")
    p.write_text("a,b\n1,2\n3,oops\n")
    with pytest.raises(NonNumericValue):
        load_csv(p, "a")


# ------------------------------------------------------------------ splits


@pytest.mark.parametrize("t,sizes", [(10, (6, 2, 2)), (7, (4, 1, 2))])
def test_split_sizes(t, sizes):
    parts = split_chronological(frame_of(np.arange(t)))
    assert tuple(p.t for p in parts) == sizes


def test_split_errors():
    with pytest.raises(EmptySplit):
        split_chronological(frame_of([1.0, 2.0]))
    with pytest.raises(SplitFractionError):
        split_chronological(frame_of(np.arange(20)), SplitPlan(0.5, 0.2, 0.2))


def test_split_explicit_boundaries():
    parts = split_chronological(frame_of(np.arange(10)), SplitPlan(boundaries=(3, 8)))
    assert tuple(p.t for p in parts) == (3, 5, 2)


@given(t=st.integers(5, 400), seed=st.integers(0, 10_000))
def test_split_integrity(t, seed):
    v = np.random.default_rng(seed).normal(size=(t, 2))
    parts = split_chronological(SeriesFrame(v, ["a", "b"], 1))
    joined = np.concatenate([p.values for p in parts])
    assert joined.tobytes() == v.tobytes()
    assert parts[0].t == int(np.floor(t * 0.6 + 1e-9))


# ------------------------------------------------------------- normalizing


def test_normalizer_examples():
    n = fit_normalizer(np.array([[0.0], [2.0]]))
    assert n.mean[0] == 1 and n.std[0] == 1
    np.testing.assert_array_equal(n.apply([[0.0], [2.0]]).ravel(), [-1, 1])
    np.testing.assert_array_equal(n.apply([[3.0]]).ravel(), [2])
    with pytest.raises(ZeroVariance):
        fit_normalizer(np.array([[5.0], [5.0], [5.0]]))


@given(hnp.arrays(np.float64, (20, 3), elements=st.floats(-1e3, 1e3)))
def test_normalizer_roundtrip(v):
    v = v + np.arange(20)[:, None]  # guarantees variance
    n = fit_normalizer(v)
    z = apply(n, SeriesFrame(v, ["a", "b", "c"], 0)).values
    np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(z.std(axis=0), 1, atol=1e-9)
    np.testing.assert_allclose(n.invert(z), v, atol=1e-9 * max(1, np.abs(v).max()))


# ---------------------------------------------------------------- grouping


def test_fit_grouping_hand_example():
    s = fit_grouping(np.arange(1, 11, dtype=float), 2)
    assert s.boundaries == [(1.0, 5.0), (5.0, 10.0)]


def test_fit_grouping_errors():
    with pytest.raises(KTooSmall):
        fit_grouping(np.arange(1, 11), 1)
    with pytest.raises(TooFewValues):
        fit_grouping([1.0], 2)
    with pytest.raises(ZeroWidthInterval):
        fit_grouping([3.0, 3.0, 3.0], 2)


def test_ties_warn_and_skip_zero_width():
    vals = np.array([0.0] * 8 + [1.0, 2.0])
    with pytest.warns(UserWarning, match="zero-width"):
        s = fit_grouping(vals, 4)
    assert np.any(s.widths == 0)
    k = assign_groups(s, vals)
    assert np.all(s.widths[k - 1] > 0)


def test_uniform_counts_k4():
    vals = np.random.default_rng(0).permutation(10_000) + np.random.default_rng(1).random(10_000)
    counts = fit_grouping(vals, 4).counts(vals)
    assert np.all(np.abs(counts - 2500) <= 1)


def test_assign_group_rules():
    s = scheme_of((1, 5), (5, 10))
    assert assign_group(s, 5.0) == 2
    assert assign_group(s, 0.5) == 1
    assert assign_group(s, 10.0) == 2
    assert assign_group(s, 99.0) == 2


def test_encode_decode_examples():
    s = scheme_of((0, 10), (10, 20))
    assert encode_relative(s, 15.0) == (2, 0.5)
    assert encode_relative(s, 0.0) == (1, 0.0)
    assert encode_relative(s, 25.0) == (2, 1.0)
    assert decode_absolute(s, 2, 0.5) == 15
    assert decode_absolute(s, 1, 0.0) == 0
    assert decode_absolute(s, 2, 1.2) == pytest.approx(22)
    with pytest.raises(GroupOutOfRange):
        decode_absolute(s, 3, 0.5)


def test_scheme_json_roundtrip(tmp_path):
    s = fit_grouping(np.random.default_rng(3).normal(size=50), 3)
    s.save(tmp_path / "scheme.json")
    back = GroupingScheme.load(tmp_path / "scheme.json")
    assert back.boundaries == s.boundaries and back.K == 3


distinct = hnp.arrays(np.float64, st.integers(16, 300),
                      elements=st.floats(-1e4, 1e4, allow_nan=False), unique=True)


@settings(max_examples=60)
@given(distinct, st.sampled_from([2, 3, 4, 8]))
def test_bin_balance(vals, K):
    n = vals.size
    counts = fit_grouping(vals, K).counts(vals)
    # brute-force count under the right-open rule
    s = fit_grouping(vals, K)
    brute = np.zeros(K, dtype=int)
    for y in vals:
        for k in range(K):
            if s.lefts[k] <= y < s.rights[k] or (k == K - 1 and y == s.rights[k]):
                brute[k] += 1
                break
    np.testing.assert_array_equal(counts, brute)
    assert counts.min() >= n // K - 1 and counts.max() <= -(-n // K) + 1


@settings(max_examples=60)
@given(distinct, st.sampled_from([2, 3, 4, 8]))
def test_coverage_and_contiguity(vals, K):
    s = fit_grouping(vals, K)
    assert s.lefts[0] == vals.min() and s.rights[-1] == vals.max()
    np.testing.assert_array_equal(s.rights[:-1], s.lefts[1:])
    assert np.all(s.widths >= 0)


@settings(max_examples=60)
@given(distinct, st.sampled_from([2, 3, 4, 8]), st.integers(0, 2**31))
def test_roundtrip_in_range(vals, K, seed):
    s = fit_grouping(vals, K)
    y = np.random.default_rng(seed).uniform(vals.min(), vals.max(), size=64)
    k, dy = encode_relative(s, y)
    assert np.all((dy >= 0) & (dy <= 1))
    np.testing.assert_allclose(decode_absolute(s, k, dy), y, rtol=0, atol=1e-9 * max(1, np.abs(vals).max()))


@settings(max_examples=40)
@given(st.integers(0, 2**31))
def test_leakage_tripwire(seed):
    rng = np.random.default_rng(seed)
    train = rng.normal(size=60)
    test = rng.normal(loc=3.0, size=20)
    a = fit_grouping(train, 4)
    b = fit_grouping(np.concatenate([train, test]), 4)
    assert a.boundaries != b.boundaries


def test_equal_width_counts_skewed():
    vals = np.random.default_rng(0).lognormal(size=5000)
    counts = fit_equal_width_grouping(vals, 4).counts(vals)
    assert counts.max() / max(counts.min(), 1) > 10


def test_equal_width_all_zero_raises():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ZeroWidthInterval):
            fit_equal_width_grouping([2.0, 2.0], 2)


# ----------------------------------------------------------------- windows


def _windows(t, L, T):
    f = frame_of(np.arange(t, dtype=float))
    s = fit_grouping(f.target, 2)
    return make_windows(f, s, fit_normalizer(f), L, T)


@pytest.mark.parametrize("t,L,T,N", [(5, 2, 1, 3), (33, 32, 1, 1), (12, 3, 2, 8)])
def test_window_counts(t, L, T, N):
    assert len(_windows(t, L, T)) == N


def test_window_too_short():
    with pytest.raises(SeriesTooShort):
        _windows(3, 2, 2)


def test_window_contents():
    w = _windows(6, 2, 2)
    np.testing.assert_array_equal(w.y[0], [2, 3])
    np.testing.assert_array_equal(w.y[-1], [4, 5])
    assert w.x.shape == (3, 2, 1)
    # x is the z-scored block right before the targets
    np.testing.assert_allclose(w.x[1, :, 0], (np.array([1, 2]) - 2.5) / np.std(np.arange(6)))
    np.testing.assert_allclose(decode_absolute(w.scheme, w.k, w.dy), w.y, atol=1e-9)
