"""Seeded, spawnable random source with the samplers the model needs.

Everything is built on numpy's PCG64 bit generator, so a given
(seed, stream, call sequence) produces the same draws on every platform.
Beta variates are generated from two log-gamma draws, which stays accurate
when one or both shape parameters are far below one (the stick-breaking
updates routinely request shapes like 0.05).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit, ndtr, ndtri

# Standardized bound beyond which the inverse-CDF loses precision and the
# exponential-tilt rejection sampler takes over.
TAIL_CUTOFF = 5.0

_OPEN_LO = np.nextafter(0.0, 1.0)
_OPEN_HI = np.nextafter(1.0, 0.0)


class RandomSource:
    """A seeded PCG64 stream, spawnable into independent child streams.

    Parameters
    ----------
    seed : int
        Root seed.
    spawn_key : tuple of int
        Stream index path; ``RandomSource(s, (i,))`` is the i-th child
        stream of ``RandomSource(s)`` and statistically independent of it.
    """

    def __init__(self, seed, spawn_key=()):
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        self._seq = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    def spawn(self, index):
        """Independent child stream identified by ``index``."""
        return RandomSource(self.seed, self.spawn_key + (int(index),))

    def raw(self, n):
        """Raw 64-bit bit-generator output (golden-vector testing only)."""
        return RandomSource(self.seed, self.spawn_key).generator.bit_generator.random_raw(n)

    # ------------------------------------------------------------------
    # elementary draws
    # ------------------------------------------------------------------

    def uniform(self, size=None):
        return self.generator.random(size)

    def normal(self, mean=0.0, sd=1.0, size=None):
        return mean + sd * self.generator.standard_normal(size)

    def log_gamma(self, shape):
        """log of a Gamma(shape, 1) draw, elementwise over ``shape``.

        For shape < 1 the draw is boosted through Gamma(shape+1): if
        G ~ Gamma(a+1) and U ~ Unif(0,1] then G * U^(1/a) ~ Gamma(a), and
        taking logs first avoids the underflow to zero that makes direct
        small-shape draws unusable inside ratios.
        """
        shape = np.asarray(shape, dtype=float)
        if np.any(shape <= 0):
            raise ValueError("gamma shape must be positive")
        scalar = shape.ndim == 0
        shape = np.atleast_1d(shape)
        out = np.empty(shape.shape)
        small = shape < 1.0
        if np.any(small):
            a = shape[small]
            g = self.generator.standard_gamma(a + 1.0)
            u = 1.0 - self.generator.random(a.shape)  # (0, 1]
            out[small] = np.log(g) + np.log(u) / a
        if np.any(~small):
            out[~small] = np.log(self.generator.standard_gamma(shape[~small]))
        return out[0] if scalar else out

    def gamma(self, shape, scale=1.0):
        """Gamma(shape, scale) draw; exact down to very small shapes."""
        return np.exp(self.log_gamma(shape)) * scale

    def beta(self, a, b):
        """Beta(a, b) draw(s); a and b broadcast elementwise.

        Computed as sigmoid(log X - log Y) with X ~ Gamma(a), Y ~ Gamma(b),
        then nudged into the open interval (0, 1) so downstream products
        never see an exact 0 or 1 produced by rounding.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.any(a <= 0) or np.any(b <= 0):
            raise ValueError("beta parameters must be positive")
        shape = np.broadcast_shapes(a.shape, b.shape)
        la = self.log_gamma(np.broadcast_to(a, shape))
        lb = self.log_gamma(np.broadcast_to(b, shape))
        return np.clip(expit(la - lb), _OPEN_LO, _OPEN_HI)

    def inverse_gamma(self, shape, scale):
        """Inverse-gamma draw with density proportional to x^(-shape-1) e^(-scale/x).

        Equivalently 1/X ~ Gamma(shape, rate=scale), so the mean is
        scale / (shape - 1) for shape > 1.
        """
        shape = np.asarray(shape, dtype=float)
        scale = np.asarray(scale, dtype=float)
        if np.any(shape <= 0) or np.any(scale <= 0):
            raise ValueError("inverse-gamma parameters must be positive")
        return scale * np.exp(-self.log_gamma(shape))

    # ------------------------------------------------------------------
    # truncated normal
    # ------------------------------------------------------------------

    def truncated_normal(self, mean, variance, lo, hi, max_rejects=100000):
        """Normal(mean, variance) conditioned on (lo, hi), elementwise.

        Central cells use the inverse CDF on a uniform restricted to the
        cell's probability range (mirrored into the lower half where ndtr
        is accurate).  Cells lying entirely beyond TAIL_CUTOFF standard
        deviations use a one-sided exponential-tilt rejection sampler.
        """
        mean = np.asarray(mean, dtype=float)
        variance = np.asarray(variance, dtype=float)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.any(variance <= 0):
            raise ValueError("variance must be positive")
        shape = np.broadcast_shapes(mean.shape, variance.shape, lo.shape, hi.shape)
        scalar = shape == ()
        sd = np.sqrt(np.broadcast_to(variance, shape)).ravel()
        m = np.broadcast_to(mean, shape).astype(float).ravel()
        lo_full = np.broadcast_to(lo, shape).astype(float).ravel()
        hi_full = np.broadcast_to(hi, shape).astype(float).ravel()
        a = (lo_full - m) / sd
        b = (hi_full - m) / sd
        if np.any(~(a < b)):
            raise ValueError("empty truncation interval (need lo < hi)")

        z = np.empty(a.shape)
        upper_tail = a > TAIL_CUTOFF
        lower_tail = b < -TAIL_CUTOFF
        central = ~(upper_tail | lower_tail)

        if np.any(central):
            ac, bc = a[central], b[central]
            # mirror cells sitting in the upper half so ndtr/ndtri operate
            # near 0 where they keep full precision; a doubly infinite cell
            # (plain normal) needs no mirroring
            with np.errstate(invalid="ignore"):
                flip = ac + bc > 0
            ac2 = np.where(flip, -bc, ac)
            bc2 = np.where(flip, -ac, bc)
            pa = ndtr(ac2)
            pb = ndtr(bc2)
            u = self.generator.random(ac2.shape)
            p = pa + u * (pb - pa)
            bad = p <= 0
            if np.any(bad):
                # entire cell rounds to zero probability yet was not routed
                # to the tail sampler: numerically degenerate input
                raise FloatingPointError("truncated normal cell has vanishing probability")
            zc = ndtri(p)
            zc = np.where(flip, -zc, zc)
            z[central] = np.clip(zc, np.nextafter(ac, bc), np.nextafter(bc, ac))

        for idx in np.flatnonzero(upper_tail):
            z[idx] = self._tail_reject(a[idx], b[idx], max_rejects)
        for idx in np.flatnonzero(lower_tail):
            z[idx] = -self._tail_reject(-b[idx], -a[idx], max_rejects)

        out = m + sd * z
        # keep draws strictly inside the original bounds
        out = np.minimum(np.maximum(out, np.nextafter(lo_full, np.inf)),
                         np.nextafter(hi_full, -np.inf))
        if scalar:
            return float(out[0])
        return out.reshape(shape)

    def _tail_reject(self, a, b, max_rejects):
        """Exponential-tilt rejection for a standardized cell [a, b], a > 0."""
        lam = 0.5 * (a + math.sqrt(a * a + 4.0))
        for _ in range(max_rejects):
            u1 = self.generator.random()
            x = a - math.log1p(-u1) / lam
            if x > b:
                continue
            u2 = self.generator.random()
            if math.log(u2) <= -0.5 * (x - lam) ** 2:
                return x
        raise FloatingPointError(
            f"tail rejection failed after {max_rejects} proposals on cell [{a}, {b}]"
        )

    # ------------------------------------------------------------------
    # categorical draws
    # ------------------------------------------------------------------

    def categorical_logits(self, logits):
        """One index per row of ``logits`` (2-d), drawn proportionally to
        exp(logits) with per-row max subtraction; -inf marks excluded cells."""
        logits = np.asarray(logits, dtype=float)
        rowmax = np.max(logits, axis=1, keepdims=True)
        if np.any(~np.isfinite(rowmax)):
            raise ValueError("a row has no admissible category")
        w = np.exp(logits - rowmax)
        c = np.cumsum(w, axis=1)
        r = self.generator.random(logits.shape[0]) * c[:, -1]
        return (c < r[:, None]).sum(axis=1)
