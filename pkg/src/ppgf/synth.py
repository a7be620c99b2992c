"""Seeded synthetic series standing in for real datasets at desk scale.

Every generator returns a 1-D array; :func:`write_csv` stores it as a
single-column CSV whose leading ``#`` comment lines record the generator
and its parameters.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

KINDS = ("sine", "two_regime", "long_tail")


def sine(length=2000, period=50.0, amplitude=1.0, noise=0.05, offset=0.0, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    return offset + amplitude * np.sin(2 * np.pi * t / period) + noise * rng.standard_normal(length)


def _burst_mask(length, burst_frac, burst_len, rng):
    """Exactly round(burst_frac·length) burst points, split into segments."""
    n_burst = int(round(burst_frac * length))
    if n_burst == 0:
        return np.zeros(length, dtype=bool)
    n_seg = max(1, int(round(n_burst / burst_len)))
    n_seg = min(n_seg, n_burst, length - n_burst + 1)
    # segment lengths: n_burst split into n_seg positive parts
    cuts = np.sort(rng.choice(np.arange(1, n_burst), size=n_seg - 1, replace=False)) if n_seg > 1 else []
    seg = np.diff(np.concatenate([[0], cuts, [n_burst]])).astype(int)
    # gaps: interior gaps >= 1 so segments never merge
    n_quiet = length - n_burst
    interior = n_seg - 1
    free = n_quiet - interior
    split = np.sort(rng.integers(0, free + 1, size=n_seg))
    gaps = np.diff(np.concatenate([[0], split, [free]]))
    gaps[1:-1] += 1
    mask = np.zeros(length, dtype=bool)
    pos = 0
    for i in range(n_seg):
        pos += gaps[i]
        mask[pos:pos + seg[i]] = True
        pos += seg[i]
    return mask


def two_regime(length=2000, burst_frac=0.3, burst_len=40, period=24.0, low_level=0.0,
               low_amplitude=1.0, high_level=6.0, high_amplitude=0.5, noise=0.1, seed=0):
    """A steady low-amplitude sine interrupted by high-level burst segments.

    Burst points sit around ``high_level``, quiet points around ``low_level``;
    the regime threshold is their midpoint.
    """
    if not 0 <= burst_frac < 1:
        raise ConfigError("burst_frac must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    mask = _burst_mask(length, burst_frac, burst_len, rng)
    phase = 2 * np.pi * t / period
    low = low_level + low_amplitude * np.sin(phase)
    high = high_level + high_amplitude * np.sin(phase / 3)
    return np.where(mask, high, low) + noise * rng.standard_normal(length)


def regime_threshold(low_level=0.0, high_level=6.0, **_):
    return 0.5 * (low_level + high_level)


def long_tail(length=2000, mu=0.0, sigma=1.0, seed=0):
    """Log-normal draws: a right-skewed, long-tailed marginal."""
    rng = np.random.default_rng(seed)
    return rng.lognormal(mu, sigma, size=length)


def generate(kind, **params):
    gens = {"sine": sine, "two_regime": two_regime, "long_tail": long_tail}
    if kind not in gens:
        raise ConfigError(f"unknown synthetic kind {kind!r}; choose from {KINDS}")
    try:
        return gens[kind](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {kind}: {exc}") from exc


def write_csv(path, values, kind, params, column="value"):
    with open(path, "w", newline="") as fh:
        fh.write(f"# synth kind={kind}\n")
        for k in sorted(params):
            fh.write(f"# {k}={params[k]}\n")
        fh.write(f"{column}\n")
        for v in values:
            fh.write(f"{float(v)!r}\n")
