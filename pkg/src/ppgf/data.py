"""Series ingestion, chronological splits, input scaling, balanced grouping and
sliding-window encoding into (x, y, Δy, k) samples.

Group labels ``k`` are 1-based throughout this module, matching the usual
"group 1 .. group K" reading; the model converts to 0-based indices.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
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


@dataclass
class SeriesFrame:
    values: np.ndarray  # t×D
    column_names: tuple
    target_col: int
    timestamps: list | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        self.column_names = tuple(self.column_names)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ValueError(f"SeriesFrame needs a t×D matrix, got shape {self.values.shape}")
        if len(self.column_names) != self.values.shape[1]:
            raise ValueError("column_names length does not match D")
        if not 0 <= self.target_col < self.values.shape[1]:
            raise ValueError(f"target_col {self.target_col} outside 0..{self.values.shape[1] - 1}")
        if not np.all(np.isfinite(self.values)):
            row = int(np.argwhere(~np.isfinite(self.values))[0, 0])
            raise NonFiniteValue(f"non-finite value at row {row}", row=row)

    @property
    def t(self):
        return self.values.shape[0]

    @property
    def D(self):
        return self.values.shape[1]

    @property
    def target(self):
        return self.values[:, self.target_col]

    @property
    def target_name(self):
        return self.column_names[self.target_col]

    def rows(self, start, stop):
        ts = None if self.timestamps is None else self.timestamps[start:stop]
        return SeriesFrame(self.values[start:stop], self.column_names, self.target_col, ts)


def _parse_float(cell):
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(path, target_col_name):
    """Read a comma-separated series with one header row.

    Lines starting with ``#`` before the header are comments. If the first
    column's first cell is not a number the column is taken as timestamps
    and carried through unparsed.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        raise EmptyFile(f"{path}: empty file")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    if not body:
        raise EmptyFile(f"{path}: header but no data rows")

    has_ts = len(header) > 1 and _parse_float(body[0][0]) is None
    numeric_names = header[1:] if has_ts else header
    if target_col_name not in numeric_names:
        raise UnknownColumn(f"{path}: target column {target_col_name!r} not in {numeric_names}")

    offset = 1 if has_ts else 0
    values = np.empty((len(body), len(numeric_names)))
    timestamps = [] if has_ts else None
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise NonNumericValue(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        if has_ts:
            timestamps.append(row[0])
        for c, cell in enumerate(row[offset:]):
            v = _parse_float(cell)
            if v is None:
                raise NonNumericValue(
                    f"{path}: non-numeric value {cell!r} in column {numeric_names[c]!r} at row {r}"
                )
            if not math.isfinite(v):
                raise NonFiniteValue(f"{path}: non-finite value {cell!r} at row {r}", row=r)
            values[r, c] = v
    return SeriesFrame(values, numeric_names, numeric_names.index(target_col_name), timestamps)


# ---------------------------------------------------------------------- split


@dataclass(frozen=True)
class SplitPlan:
    train_frac: float = 0.6
    valid_frac: float = 0.2
    test_frac: float = 0.2
    boundaries: tuple | None = None  # explicit (train_end, valid_end) row indices

    def cut_points(self, t):
        if self.boundaries is not None:
            a, b = self.boundaries
        else:
            fracs = (self.train_frac, self.valid_frac, self.test_frac)
            if any(not 0 < f < 1 for f in fracs):
                raise SplitFractionError(f"split fractions must lie in (0, 1): {fracs}")
            if abs(sum(fracs) - 1) > 1e-9:
                raise SplitFractionError(f"split fractions sum to {sum(fracs)}, not 1")
            # the small slack keeps e.g. 100 * 0.29 from flooring to 28
            a = math.floor(t * self.train_frac + 1e-9)
            b = math.floor(t * (self.train_frac + self.valid_frac) + 1e-9)
        if not 0 < a < b < t:
            raise EmptySplit(f"t={t} gives split sizes {a}/{b - a}/{t - b}")
        return a, b


def split_chronological(frame, plan=None):
    plan = plan or SplitPlan()
    a, b = plan.cut_points(frame.t)
    return frame.rows(0, a), frame.rows(a, b), frame.rows(b, frame.t)


# ------------------------------------------------------------------ normalize


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, values):
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def invert(self, values):
        return np.asarray(values, dtype=np.float64) * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


def fit_normalizer(train_frame):
    values = train_frame.values if isinstance(train_frame, SeriesFrame) else np.asarray(train_frame)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    bad = np.flatnonzero(~(std > 1e-12 * np.maximum(1.0, np.abs(mean))))
    if bad.size:
        raise ZeroVariance(f"constant input channel(s) {bad.tolist()} in training split")
    return Normalizer(mean, std)


def apply(normalizer, frame):
    """Return a copy of ``frame`` with every channel z-scored."""
    return SeriesFrame(normalizer.apply(frame.values), frame.column_names, frame.target_col,
                       frame.timestamps)


# ------------------------------------------------------------------- grouping


@dataclass(frozen=True)
class GroupingScheme:
    lefts: np.ndarray
    rights: np.ndarray
    kind: str = "quantile"

    @property
    def K(self):
        return len(self.lefts)

    @property
    def boundaries(self):
        return list(zip(self.lefts.tolist(), self.rights.tolist()))

    @property
    def widths(self):
        return self.rights - self.lefts

    def to_dict(self):
        return {"K": self.K, "kind": self.kind, "boundaries": self.boundaries}

    @classmethod
    def from_dict(cls, d):
        b = np.asarray(d["boundaries"], dtype=np.float64).reshape(-1, 2)
        if "K" in d and d["K"] != len(b):
            raise ValueError(f"scheme K={d['K']} but {len(b)} boundaries")
        return cls(b[:, 0].copy(), b[:, 1].copy(), d.get("kind", "quantile"))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def counts(self, values):
        """Training-value population of each group under :func:`assign_group`."""
        k = assign_groups(self, values)
        return np.bincount(k - 1, minlength=self.K)


def _check_grouping_input(values, K):
    if K < 2:
        raise KTooSmall(f"need K >= 2 groups, got {K}")
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size < 2:
        raise TooFewValues(f"need at least 2 values to group, got {values.size}")
    return values


def _validate_scheme(scheme):
    widths = scheme.widths
    if np.all(widths <= 0):
        raise ZeroWidthInterval("every group interval has zero width (constant target?)")
    if np.any(widths <= 0):
        zero = (np.flatnonzero(widths <= 0) + 1).tolist()
        warnings.warn(f"zero-width group interval(s) {zero} from tied values; "
                      "they receive no samples", stacklevel=3)
    return scheme


def fit_grouping(train_target_values, K):
    """Balanced (quantile) grouping of the sorted training targets.

    Group k spans Ã[⌊(t−1)(k−1)/K⌋] .. Ã[⌊(t−1)k/K⌋] with Ã ascending and
    zero-based.
    """
    values = _check_grouping_input(train_target_values, K)
    srt = np.sort(values)
    t = srt.size
    left_idx = [(t - 1) * (k - 1) // K for k in range(1, K + 1)]
    right_idx = [(t - 1) * k // K for k in range(1, K + 1)]
    return _validate_scheme(GroupingScheme(srt[left_idx], srt[right_idx], "quantile"))


def fit_equal_width_grouping(train_target_values, K):
    """Baseline: K equal-width intervals over [min, max]."""
    values = _check_grouping_input(train_target_values, K)
    edges = np.linspace(values.min(), values.max(), K + 1)
    edges[-1] = values.max()
    return _validate_scheme(GroupingScheme(edges[:-1].copy(), edges[1:].copy(), "equal_width"))


def assign_groups(scheme, y_raw):
    """Vectorized :func:`assign_group`; returns 1-based labels."""
    y = np.asarray(y_raw, dtype=np.float64)
    nz = np.flatnonzero(scheme.widths > 0)
    # nonzero-width intervals have strictly increasing lefts, so the last one
    # whose left <= y is the right-open match; clipping gives the clamp rule
    pos = np.searchsorted(scheme.lefts[nz], y, side="right") - 1
    pos = np.clip(pos, 0, nz.size - 1)
    return nz[pos] + 1


def assign_group(scheme, y_raw):
    """Smallest k with left_k <= y < right_k; the last interval is closed and
    out-of-range values clamp to the end groups."""
    return int(assign_groups(scheme, y_raw))


def encode_relative(scheme, y_raw, k=None):
    """Return ``(k, Δy)`` with Δy = (y − left_k) / (right_k − left_k).

    Out-of-range y is clamped so Δy ∈ {0, 1}. Works elementwise on arrays.
    """
    y = np.asarray(y_raw, dtype=np.float64)
    k = assign_groups(scheme, y) if k is None else np.asarray(k)
    left, right = scheme.lefts[k - 1], scheme.rights[k - 1]
    width = right - left
    if np.any(width <= 0):
        raise ZeroWidthInterval("assigned group has a zero-width interval")
    dy = (np.clip(y, left, right) - left) / width
    if y.ndim == 0:
        return int(k), float(dy)
    return k, dy


def decode_absolute(scheme, k, dy):
    """Inverse of :func:`encode_relative`: y = Δy·(right_k − left_k) + left_k.

    Δy is not clamped, so values above 1 extrapolate past the interval.
    """
    k = np.asarray(k)
    if np.any((k < 1) | (k > scheme.K)):
        raise GroupOutOfRange(f"group label outside 1..{scheme.K}")
    dy = np.asarray(dy, dtype=np.float64)
    left = scheme.lefts[k - 1]
    y = dy * (scheme.rights[k - 1] - left) + left
    return float(y) if y.ndim == 0 else y


# -------------------------------------------------------------------- windows


@dataclass
class WindowedDataset:
    x: np.ndarray  # N×L×D normalized inputs
    y: np.ndarray  # N×T raw targets
    dy: np.ndarray  # N×T relative offsets
    k: np.ndarray  # N×T 1-based groups
    L: int
    T: int
    scheme: GroupingScheme = field(repr=False)

    @property
    def K(self):
        return self.scheme.K

    def __len__(self):
        return self.x.shape[0]

    def subset(self, idx):
        return WindowedDataset(self.x[idx], self.y[idx], self.dy[idx], self.k[idx],
                               self.L, self.T, self.scheme)


def make_windows(frame, scheme, normalizer, L, T):
    """Slide a length-L input window over ``frame``; targets are the next T steps."""
    if L < 1 or T < 1:
        raise SeriesTooShort(f"look-back and horizon must be positive (L={L}, T={T})")
    n = frame.t - L - T + 1
    if n < 1:
        raise SeriesTooShort(f"series of length {frame.t} too short for L={L}, T={T}")
    xs = normalizer.apply(frame.values)
    target = frame.target
    idx = np.arange(n)
    x = xs[idx[:, None] + np.arange(L)]
    y = target[idx[:, None] + L + np.arange(T)]
    k, dy = encode_relative(scheme, y)
    return WindowedDataset(x, y, dy, k.reshape(y.shape), L, T, scheme)
