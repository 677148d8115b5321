"""Synthetic data generators and standardization.

Provides the three two/three-component study mixtures used for the
discount-robustness experiment, the classical 15-density Marron-Wand
benchmark battery, and sample standardization with an invertible record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .rng import RandomSource

_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianMixture:
    """Finite Gaussian mixture with weights summing to one."""

    weights: tuple
    means: tuple
    variances: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        v = np.asarray(self.variances, dtype=float)
        if not (len(self.weights) == len(self.means) == len(self.variances)):
            raise ValueError("component lists must have equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if np.any(v <= 0):
            raise ValueError("variances must be positive")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        for w, m, v in zip(self.weights, self.means, self.variances):
            sd = math.sqrt(v)
            out += w * np.exp(-0.5 * ((x - m) / sd) ** 2) / (sd * _SQRT2PI)
        return out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        for w, m, v in zip(self.weights, self.means, self.variances):
            out += w * ndtr((x - m) / math.sqrt(v))
        return out

    def sample(self, n, rng: RandomSource):
        """n iid draws: categorical component choice, then a Gaussian draw."""
        if n < 1:
            raise ValueError("n must be at least 1")
        w = np.asarray(self.weights)
        comp = rng.categorical_logits(np.broadcast_to(np.log(w), (n, w.size)))
        means = np.asarray(self.means)[comp]
        sds = np.sqrt(np.asarray(self.variances))[comp]
        return rng.normal(means, sds, size=n)

    def mean(self):
        return float(np.dot(self.weights, self.means))

    def variance(self):
        m = self.mean()
        second = np.dot(self.weights, np.asarray(self.variances) + np.asarray(self.means) ** 2)
        return float(second - m * m)


def _mix(weights, means, variances):
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    return GaussianMixture(tuple(w), tuple(float(m) for m in means),
                           tuple(float(v) for v in variances))


def _marron_wand():
    """The 15 benchmark densities with their canonical parameters."""
    mw = {}
    mw[1] = _mix([1], [0], [1])
    mw[2] = _mix([1 / 5, 1 / 5, 3 / 5], [0, 1 / 2, 13 / 12],
                 [1, (2 / 3) ** 2, (5 / 9) ** 2])
    mw[3] = _mix([1 / 8] * 8,
                 [3 * ((2 / 3) ** l - 1) for l in range(8)],
                 [(2 / 3) ** (2 * l) for l in range(8)])
    mw[4] = _mix([2 / 3, 1 / 3], [0, 0], [1, (1 / 10) ** 2])
    mw[5] = _mix([1 / 10, 9 / 10], [0, 0], [1, (1 / 10) ** 2])
    mw[6] = _mix([1 / 2, 1 / 2], [-1, 1], [(2 / 3) ** 2] * 2)
    mw[7] = _mix([1 / 2, 1 / 2], [-3 / 2, 3 / 2], [(1 / 2) ** 2] * 2)
    mw[8] = _mix([3 / 4, 1 / 4], [0, 3 / 2], [1, (1 / 3) ** 2])
    mw[9] = _mix([9 / 20, 9 / 20, 1 / 10], [-6 / 5, 6 / 5, 0],
                 [(3 / 5) ** 2, (3 / 5) ** 2, (1 / 4) ** 2])
    mw[10] = _mix([1 / 2] + [1 / 10] * 5,
                  [0] + [l / 2 - 1 for l in range(5)],
                  [1] + [(1 / 10) ** 2] * 5)
    mw[11] = _mix([49 / 100, 49 / 100] + [1 / 350] * 7,
                  [-1, 1] + [(l - 3) / 2 for l in range(7)],
                  [(2 / 3) ** 2] * 2 + [(1 / 100) ** 2] * 7)
    mw[12] = _mix([1 / 2] + [2 ** (1 - l) / 31 for l in range(-2, 3)],
                  [0] + [l + 1 / 2 for l in range(-2, 3)],
                  [1] + [(2 ** -l / 10) ** 2 for l in range(-2, 3)])
    mw[13] = _mix([46 / 100, 46 / 100] + [1 / 300] * 3 + [7 / 300] * 3,
                  [-1, 1] + [-l / 2 for l in (1, 2, 3)] + [l / 2 for l in (1, 2, 3)],
                  [(2 / 3) ** 2] * 2 + [(1 / 100) ** 2] * 3 + [(7 / 100) ** 2] * 3)
    mw[14] = _mix([2 ** (5 - l) / 63 for l in range(6)],
                  [(65 - 96 * 0.5 ** l) / 21 for l in range(6)],
                  [((32 / 63) / 2 ** l) ** 2 for l in range(6)])
    mw[15] = _mix([2 / 7] * 3 + [1 / 21] * 3,
                  [(12 * l - 15) / 7 for l in range(3)] + [2 * l / 7 for l in (8, 9, 10)],
                  [(2 / 7) ** 2] * 3 + [(1 / 21) ** 2] * 3)
    return mw


_MW = _marron_wand()

# The three-component study density's stated weights (1/2, 1/3, 1/3) sum to
# 7/6; they are renormalized proportionally to (3/7, 2/7, 2/7).
SCENARIOS = {
    "delta_study_1": _mix([1.0], [0.0], [1.0]),
    "delta_study_2": _mix([1 / 2, 1 / 2], [-0.935, 0.935], [1 / 8, 1 / 8]),
    "delta_study_3": _mix([1 / 2, 1 / 3, 1 / 3], [0.0, 1.392, -1.392],
                          [1 / 32, 1 / 32, 1 / 32]),
}
SCENARIOS.update({f"mw_{k:02d}": v for k, v in _MW.items()})


def scenario(name) -> GaussianMixture:
    """Look up a named benchmark mixture."""
    try:
        return SCENARIOS[name]
    except KeyError:
        raise KeyError(
            f"unknown scenario {name!r}; valid names: {', '.join(sorted(SCENARIOS))}"
        ) from None


def sample(mix: GaussianMixture, n, rng: RandomSource):
    return mix.sample(n, rng)


def pdf(mix: GaussianMixture, grid):
    return mix.pdf(grid)


@dataclass(frozen=True)
class StandardizationRecord:
    """Mean subtracted and standard deviation divided out of a sample."""

    m: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError("sd must be positive")

    def inverse(self, x_std):
        """Map standardized values back to original units."""
        return self.m + self.sd * np.asarray(x_std, dtype=float)

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.m) / self.sd


def standardize(data):
    """Center to mean 0 and scale to variance 1 (n-1 denominator).

    Returns the transformed data and the record needed to invert it.
    """
    data = np.asarray(data, dtype=float)
    if data.size < 2:
        raise ValueError("need at least 2 values to standardize")
    m = float(data.mean())
    sd = float(data.std(ddof=1))
    if sd == 0.0:
        raise ValueError("constant data cannot be standardized")
    rec = StandardizationRecord(m, sd)
    return rec.apply(data), rec
