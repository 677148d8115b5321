"""Base measures for kernel locations and scales.

Locations are drawn from a Gaussian base measure truncated to the dyadic
quantile cell of their tree node, so that every scale-s cell carries exactly
2^-s of the base mass and daughter cells partition their parent.  Raw kernel
scales are inverse-gamma and shrink deterministically with depth through the
factor 2^-s.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .rng import RandomSource
from .tree import NodeId, n_nodes
from .weights import MsbHyper, sample_weight_trees, scale_slices


@dataclass(frozen=True)
class PartitionCell:
    """Quantile interval [lo, hi]; half-infinite at the support's extremes."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"cell bounds must satisfy lo < hi, got [{self.lo}, {self.hi}]")

    def contains(self, x):
        return (self.lo <= x) & (x <= self.hi)


@dataclass(frozen=True)
class LocationBase:
    """Gaussian base measure for kernel locations, mean mu0 and variance kappa0."""

    mu0: float = 0.0
    kappa0: float = 1.0

    def __post_init__(self):
        if not self.kappa0 > 0:
            raise ValueError("kappa0 must be positive")

    def quantile(self, p):
        """p-level quantile; maps 0 and 1 to -inf and +inf."""
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            q = self.mu0 + np.sqrt(self.kappa0) * ndtri(p)
        return q

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mu0) / np.sqrt(self.kappa0))

    def measure(self, lo, hi):
        """Base mass of the interval (lo, hi)."""
        return float(self.cdf(hi) - self.cdf(lo))

    def cell(self, node: NodeId) -> PartitionCell:
        """Dyadic quantile cell of ``node``: [q_{(h-1)/2^s}, q_{h/2^s}]."""
        denom = 1 << node.s
        lo = self.quantile((node.h - 1) / denom)
        hi = self.quantile(node.h / denom)
        return PartitionCell(float(lo), float(hi))

    def cell_bounds(self, depth):
        """(lo, hi) arrays over all flat nodes of a dense tree of ``depth``."""
        lo = np.empty(n_nodes(depth))
        hi = np.empty(n_nodes(depth))
        for s, sl in enumerate(scale_slices(depth)):
            edges = self.quantile(np.arange((1 << s) + 1) / (1 << s))
            lo[sl] = edges[:-1]
            hi[sl] = edges[1:]
        return lo, hi

    def sample_location(self, node: NodeId, rng: RandomSource, size=None):
        """Draw from the base measure conditioned to the node's cell."""
        c = self.cell(node)
        try:
            if size is None:
                return rng.truncated_normal(self.mu0, self.kappa0, c.lo, c.hi)
            return rng.truncated_normal(
                np.full(size, self.mu0), self.kappa0, c.lo, c.hi
            )
        except FloatingPointError as exc:
            raise FloatingPointError(
                f"location draw failed at node (s={node.s}, h={node.h}), "
                f"cell [{c.lo:.4g}, {c.hi:.4g}]: {exc}"
            ) from exc


def scale_decay(s):
    """Deterministic per-scale shrink factor 2^-s."""
    return 2.0 ** (-np.asarray(s, dtype=float))


@dataclass(frozen=True)
class ScaleBase:
    """Inverse-gamma base measure for raw kernel scales.

    Parametrized as shape k and scale lam with density proportional to
    x^(-k-1) e^(-lam/x) and mean lam / (k - 1); requires k > 1 so the mean
    is finite.  The per-node kernel scale at depth s is 2^-s times a draw,
    equivalently one draw from an inverse-gamma with scale 2^-s lam.
    """

    k: float
    lam: float

    def __post_init__(self):
        if not self.k > 1:
            raise ValueError("shape k must exceed 1 (finite mean required)")
        if not self.lam > 0:
            raise ValueError("scale lam must be positive")

    def mean(self, s=0):
        return scale_decay(s) * self.lam / (self.k - 1.0)

    def variance(self, s=0):
        if self.k <= 2:
            return np.inf
        return scale_decay(s) ** 2 * self.lam ** 2 / ((self.k - 1.0) ** 2 * (self.k - 2.0))

    def sample_scale(self, s, rng: RandomSource, size=None):
        """Kernel-scale draw(s) at depth ``s``."""
        lam_s = scale_decay(s) * self.lam
        if size is None:
            return float(rng.inverse_gamma(self.k, lam_s))
        return rng.inverse_gamma(np.full(size, self.k), np.broadcast_to(lam_s, size).astype(float))


def sample_location_tree(base: LocationBase, depth, rng: RandomSource, n_draws=1):
    """Locations for every node of a dense tree, row per draw (vectorized)."""
    lo, hi = base.cell_bounds(depth)
    m = np.full((n_draws, lo.size), base.mu0)
    return rng.truncated_normal(m, base.kappa0, lo[None, :], hi[None, :])


def verify_centering(base: LocationBase, hyper: MsbHyper, interval, n_draws,
                     rng: RandomSource):
    """Monte Carlo check that the random location measure is centered on the base.

    Draws ``n_draws`` joint (weights, locations) realizations on the truncated
    tree and returns (estimate, standard error) of the expected mass the random
    measure G = sum pi_{s,h} delta_{mu_{s,h}} assigns to ``interval``; the
    estimate should match the base measure of the interval.
    """
    if n_draws < 100:
        raise ValueError("need at least 100 draws")
    lo, hi = interval
    pi = sample_weight_trees(hyper, n_draws, rng)
    mu = sample_location_tree(base, hyper.max_depth, rng, n_draws)
    inside = (mu > lo) & (mu <= hi)
    g_of_a = (pi * inside).sum(axis=1)
    est = float(g_of_a.mean())
    se = float(g_of_a.std(ddof=1) / np.sqrt(n_draws))
    return est, se
