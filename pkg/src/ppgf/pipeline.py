"""Prepared data: one split + normalizer, windowed on demand per grouping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import (
    SplitPlan,
    fit_equal_width_grouping,
    fit_grouping,
    fit_normalizer,
    make_windows,
    split_chronological,
)


@dataclass
class Prepared:
    frame: object
    train: object
    valid: object
    test: object
    normalizer: object
    L: int
    T: int
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def D(self):
        return self.frame.D

    @property
    def target_stats(self):
        y = self.train.target
        return float(np.mean(y)), float(np.std(y))

    def scheme(self, K, grouping="quantile"):
        key = ("scheme", K, grouping)
        if key not in self._cache:
            fit = fit_grouping if grouping == "quantile" else fit_equal_width_grouping
            self._cache[key] = fit(self.train.target, K)
        return self._cache[key]

    def windows(self, K, grouping="quantile"):
        """{"train", "valid", "test"} -> WindowedDataset, grouping fit on train."""
        key = ("windows", K, grouping)
        if key not in self._cache:
            scheme = self.scheme(K, grouping)
            self._cache[key] = {
                name: make_windows(getattr(self, name), scheme, self.normalizer, self.L, self.T)
                for name in ("train", "valid", "test")
            }
        return self._cache[key]


def prepare(frame, split=None, L=32, T=1):
    train, valid, test = split_chronological(frame, split or SplitPlan())
    return Prepared(frame, train, valid, test, fit_normalizer(train), L, T)
