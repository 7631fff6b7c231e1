"""Log-log rate fits with a bootstrap interval on the slope."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Pairs unsuitable for a log-log fit (too few, or non-positive values)."""


@dataclass(frozen=True)
class RateFitReport:
    pairs: tuple
    slope: float
    intercept: float
    slope_ci: tuple
    C: float
    n_boot: int
    seed: int

    def as_dict(self) -> dict:
        return {"pairs": [list(p) for p in self.pairs], "slope": self.slope, "intercept": self.intercept,
                "slope_ci": list(self.slope_ci), "C": self.C, "n_boot": self.n_boot, "seed": self.seed}


def fit_rate(pairs: Sequence[tuple], seed: int = 0, n_boot: int = 1000, min_pairs: int = 4) -> RateFitReport:
    """Fit ``error ~ C * delta**slope`` by least squares in log-log coordinates.

    The 95% interval comes from ``n_boot`` resamples of the pairs (with
    replacement) drawn from ``numpy.random.default_rng(seed)``; resamples whose
    ``delta`` values all coincide carry no slope and are dropped. This is a
    heuristic for 4-6 point fits, not a calibrated interval.
    """
    pts = tuple((float(a), float(b)) for a, b in pairs)
    if len(pts) < min_pairs:
        raise DataError(f"need at least {min_pairs} pairs, got {len(pts)}")
    bad = [p for p in pts if not (p[0] > 0 and p[1] > 0 and math.isfinite(p[0]) and math.isfinite(p[1]))]
    if bad:
        raise DataError(f"non-positive or non-finite pair {bad[0]} (identical runs?)")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    if np.ptp(x) == 0:
        raise DataError("all delta values coincide")
    slope, intercept = np.polyfit(x, y, 1)

    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(pts), size=(n_boot, len(pts)))
    xs, ys = x[idx], y[idx]
    xm = xs.mean(axis=1, keepdims=True)
    sxx = np.sum((xs - xm) ** 2, axis=1)
    sxy = np.sum((xs - xm) * (ys - ys.mean(axis=1, keepdims=True)), axis=1)
    ok = sxx > 1e-12 * max(1.0, float(np.ptp(x)) ** 2)
    boot = sxy[ok] / sxx[ok]
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return RateFitReport(pts, float(slope), float(intercept), (float(lo), float(hi)),
                         float(math.exp(intercept)), n_boot, seed)
