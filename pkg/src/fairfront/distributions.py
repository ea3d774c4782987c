"""Exact empirical-distribution machinery.

Weighted discrete distributions on the real line: right- and left-continuous
CDFs, generalized inverses, exact one-dimensional transport costs via the
monotone (quantile) coupling, and the Kolmogorov-Smirnov distance.

Every integral here is evaluated exactly on a merged breakpoint grid, where
the integrand is piecewise constant; nothing is sampled.  That makes these
functions usable as oracles for the stochastic estimators elsewhere in the
package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Atoms closer than this are merged into one; weight sums must match 1 at
#: the same tolerance.
MERGE_TOL = 1e-12

_LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class CostFunction:
    """Cost ``c(a, b)`` comparing two probabilities.

    ``abs`` and ``square`` are difference costs ``c(a, b) = h(a - b)`` with
    ``h(z) = |z|`` and ``h(z) = z**2``; both are Lipschitz on [-1, 1].
    ``abs-log-ratio`` is ``|log a - log b|`` with arguments clamped below at
    1e-12 (the log is singular at zero).
    """

    kind: str

    _KINDS = ("abs", "square", "abs-log-ratio")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}; expected one of {self._KINDS}")

    @property
    def is_h_form(self) -> bool:
        return self.kind in ("abs", "square")

    def h(self, z):
        """Difference form ``h(z)``; only defined for abs and square."""
        z = np.asarray(z, dtype=float)
        if self.kind == "abs":
            return np.abs(z)
        if self.kind == "square":
            return z * z
        raise ValueError("abs-log-ratio has no difference form h(z)")

    def h_prime(self, z):
        """Pointwise derivative of ``h`` (sign convention: h'(0)=0 for abs)."""
        z = np.asarray(z, dtype=float)
        if self.kind == "abs":
            return np.sign(z)
        if self.kind == "square":
            return 2.0 * z
        raise ValueError("abs-log-ratio has no difference form h(z)")

    def value(self, a, b):
        """Evaluate ``c(a, b)`` elementwise."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.kind == "abs-log-ratio":
            return np.abs(np.log(np.maximum(a, _LOG_CLAMP)) - np.log(np.maximum(b, _LOG_CLAMP)))
        return self.h(a - b)


ABS = CostFunction("abs")
SQUARE = CostFunction("square")
ABS_LOG_RATIO = CostFunction("abs-log-ratio")


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Weighted atoms on the real line in canonical (sorted, merged) form.

    ``values`` are strictly increasing after merging atoms that coincide
    within ``MERGE_TOL``; ``weights`` are nonnegative and sum to one.  The
    CDF is right-continuous and reaches exactly 1 at the largest atom.
    """

    values: np.ndarray
    weights: np.ndarray
    cum_weights: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("empty distribution")
        if values.shape != weights.shape:
            raise ValueError("values and weights must have the same shape")
        if not np.all(np.isfinite(values)) or not np.all(np.isfinite(weights)):
            raise ValueError("non-finite atom or weight")
        if np.any(np.diff(values) <= 0):
            raise ValueError("values must be strictly increasing; use from_samples")
        if np.any(weights < 0):
            raise ValueError("negative weight")
        total = weights.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total}, not 1")
        cum = np.cumsum(weights)
        cum[-1] = 1.0  # pin the top against accumulation drift
        for name, arr in (("values", values), ("weights", weights), ("cum_weights", cum)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_samples(cls, values, weights=None) -> "EmpiricalDistribution":
        """Build from raw samples: sort, merge near-equal atoms, normalize."""
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("empty distribution")
        if weights is None:
            weights = np.full(values.shape, 1.0 / values.size)
        else:
            weights = np.asarray(weights, dtype=float).ravel()
            if weights.shape != values.shape:
                raise ValueError("values and weights must have the same shape")
            if np.any(weights < 0):
                raise ValueError("negative weight")
            total = weights.sum()
            if total <= 0:
                raise ValueError("weights sum to zero")
            weights = weights / total
        order = np.argsort(values, kind="stable")
        v, w = values[order], weights[order]
        # merge runs of atoms within MERGE_TOL of their predecessor
        keep = np.empty(v.size, dtype=bool)
        keep[0] = True
        keep[1:] = np.diff(v) > MERGE_TOL
        idx = np.cumsum(keep) - 1
        mv = v[keep]
        mw = np.zeros(mv.size)
        np.add.at(mw, idx, w)
        return cls(mv, mw)

    @property
    def size(self) -> int:
        return self.values.size

    def cdf(self, t):
        """Right-continuous CDF, ``P(Z <= t)``; accepts scalars or arrays."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.values, t, side="right")
        padded = np.concatenate(([0.0], self.cum_weights))
        out = padded[idx]
        return float(out) if t.ndim == 0 else out

    def left_cdf(self, t):
        """Left limit of the CDF, ``P(Z < t)``."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.values, t, side="left")
        padded = np.concatenate(([0.0], self.cum_weights))
        out = padded[idx]
        return float(out) if t.ndim == 0 else out

    def quantile(self, p):
        """Generalized inverse ``inf{x : p <= F(x)}`` for ``p`` in (0, 1].

        Left-continuous and nondecreasing in ``p``.
        """
        p = np.asarray(p, dtype=float)
        if np.any(p <= 0) or np.any(p > 1):
            raise ValueError("quantile level must lie in (0, 1]")
        idx = np.searchsorted(self.cum_weights, p, side="left")
        out = self.values[np.minimum(idx, self.size - 1)]
        return float(out) if p.ndim == 0 else out

    def quantile_right(self, p):
        """Right-continuous realization of the quantile on (0, 1)."""
        p = np.asarray(p, dtype=float)
        if np.any(p <= 0) or np.any(p >= 1):
            raise ValueError("right-continuous quantile level must lie in (0, 1)")
        idx = np.searchsorted(self.cum_weights, p, side="right")
        out = self.values[np.minimum(idx, self.size - 1)]
        return float(out) if p.ndim == 0 else out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Inverse-CDF sampling of ``n`` draws."""
        u = rng.random(n)
        return self.quantile(np.clip(u, np.finfo(float).tiny, 1.0))


def empirical_cdf(dist: EmpiricalDistribution, t) -> float:
    return dist.cdf(t)


def left_cdf(dist: EmpiricalDistribution, t) -> float:
    return dist.left_cdf(t)


def quantile(dist: EmpiricalDistribution, p) -> float:
    return dist.quantile(p)


def _merged_levels(d0: EmpiricalDistribution, d1: EmpiricalDistribution):
    """Union of both cumulative-weight grids; quantiles are constant between
    consecutive levels, so integrals over p reduce to finite sums."""
    ps = np.union1d(d0.cum_weights, d1.cum_weights)
    widths = np.diff(np.concatenate(([0.0], ps)))
    return ps, widths


def wasserstein1(d0: EmpiricalDistribution, d1: EmpiricalDistribution) -> float:
    """W1 distance: the integral of the absolute quantile gap over (0, 1].

    Computed exactly on the merged breakpoint grid of both weight vectors.
    """
    ps, widths = _merged_levels(d0, d1)
    gap = d0.quantile(ps) - d1.quantile(ps)
    return float(np.sum(widths * np.abs(gap)))


def transport_cost(d0: EmpiricalDistribution, d1: EmpiricalDistribution, h: CostFunction) -> float:
    """Minimal transport cost for a convex difference cost ``h``.

    The monotone (quantile) coupling is optimal in one dimension, so the cost
    is the exact integral of ``h`` over the quantile gap.
    """
    if not h.is_h_form:
        raise ValueError("transport cost requires an abs or square cost")
    ps, widths = _merged_levels(d0, d1)
    gap = d0.quantile(ps) - d1.quantile(ps)
    return float(np.sum(widths * h.h(gap)))


def ks_distance(d0: EmpiricalDistribution, d1: EmpiricalDistribution) -> float:
    """Kolmogorov-Smirnov distance: sup over breakpoints of |F0 - F1|."""
    grid = np.union1d(d0.values, d1.values)
    return float(np.max(np.abs(d0.cdf(grid) - d1.cdf(grid))))
