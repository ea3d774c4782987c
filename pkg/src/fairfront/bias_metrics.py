"""Exact bias metrics on grouped model scores.

Cost-function bias at a single threshold and aggregated over a threshold
measure, the atom-aware distribution-invariant bias, and the weighted
multi-attribute extension.  These are the non-relaxed reference metrics:
evaluation here is exact (breakpoint-grid integration), so the stochastic
estimators can be validated against them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import (
    ABS,
    CostFunction,
    EmpiricalDistribution,
    wasserstein1,
)

_PATH_AGREEMENT_TOL = 1e-10


@dataclass(frozen=True)
class GroupedScores:
    """Per-group score samples with group probabilities.

    Group 0 is the majority / non-protected group.  Every group must be
    nonempty and the probabilities must sum to one.
    """

    scores_by_group: tuple
    group_probs: np.ndarray

    def __post_init__(self):
        groups = tuple(np.asarray(s, dtype=float).ravel() for s in self.scores_by_group)
        probs = np.asarray(self.group_probs, dtype=float).ravel()
        if len(groups) < 2:
            raise ValueError("need at least two groups")
        if len(groups) != probs.size:
            raise ValueError("one probability per group required")
        if any(g.size == 0 for g in groups):
            raise ValueError("every group must be nonempty")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("group probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "scores_by_group", groups)
        probs.setflags(write=False)
        object.__setattr__(self, "group_probs", probs)

    @classmethod
    def from_labels(cls, scores, groups) -> "GroupedScores":
        """Split a flat score vector by integer group labels 0..K-1."""
        scores = np.asarray(scores, dtype=float).ravel()
        groups = np.asarray(groups).ravel()
        labels = np.unique(groups)
        if labels.size < 2:
            raise ValueError("need at least two groups")
        if not np.array_equal(labels, np.arange(labels.size)):
            raise ValueError("group labels must be 0..K-1; remap first")
        per = tuple(scores[groups == k] for k in labels)
        probs = np.array([g.size for g in per], dtype=float) / scores.size
        return cls(per, probs)

    @property
    def n_groups(self) -> int:
        return len(self.scores_by_group)

    def distribution(self, k: int) -> EmpiricalDistribution:
        return EmpiricalDistribution.from_samples(self.scores_by_group[k])

    def pooled(self) -> EmpiricalDistribution:
        """Probability-weighted mixture of the group score distributions."""
        values = np.concatenate(self.scores_by_group)
        weights = np.concatenate(
            [np.full(g.size, p / g.size) for g, p in zip(self.scores_by_group, self.group_probs)]
        )
        return EmpiricalDistribution.from_samples(values, weights)


@dataclass(frozen=True)
class ThresholdMeasure:
    """Distribution of classification thresholds.

    ``uniform01``     Lebesgue measure on [0, 1].
    ``empirical``     an explicit atomic distribution of thresholds.
    ``pooled-scores`` the mixture distribution of the pooled model scores,
                      resolved against the grouped scores at evaluation time.
    """

    kind: str
    dist: EmpiricalDistribution = None

    def __post_init__(self):
        if self.kind not in ("uniform01", "empirical", "pooled-scores"):
            raise ValueError(f"unknown threshold measure kind {self.kind!r}")
        if self.kind == "empirical" and self.dist is None:
            raise ValueError("empirical threshold measure needs a distribution")

    @classmethod
    def uniform01(cls) -> "ThresholdMeasure":
        return cls("uniform01")

    @classmethod
    def empirical(cls, dist: EmpiricalDistribution) -> "ThresholdMeasure":
        return cls("empirical", dist)

    @classmethod
    def pooled_scores(cls) -> "ThresholdMeasure":
        return cls("pooled-scores")

    def resolve(self, g: GroupedScores) -> EmpiricalDistribution:
        """Atomic realization of the measure (None for uniform01)."""
        if self.kind == "uniform01":
            return None
        if self.kind == "empirical":
            return self.dist
        return g.pooled()


def _require_two_groups(g: GroupedScores):
    if g.n_groups != 2:
        raise ValueError(f"metric defined for two groups, got {g.n_groups}")


def classifier_bias(g: GroupedScores, t: float, c: CostFunction = ABS) -> float:
    """Cost between group acceptance rates at threshold ``t``.

    A record is accepted when its score exceeds ``t``, so the rates are
    ``1 - F_k(t)``.
    """
    _require_two_groups(g)
    r0 = 1.0 - g.distribution(0).cdf(t)
    r1 = 1.0 - g.distribution(1).cdf(t)
    return float(c.value(r0, r1))


def cost_bias(g: GroupedScores, c: CostFunction, mu: ThresholdMeasure) -> float:
    """Exact threshold-averaged bias ``int c(F0(t), F1(t)) mu(dt)``.

    For uniform01 the integral is taken piecewise over the union of the score
    breakpoints inside [0, 1]; for atomic measures it is the weighted sum
    over the atoms.
    """
    _require_two_groups(g)
    d0, d1 = g.distribution(0), g.distribution(1)
    atoms = mu.resolve(g)
    if atoms is not None:
        vals = c.value(d0.cdf(atoms.values), d1.cdf(atoms.values))
        return float(np.sum(atoms.weights * vals))
    breaks = np.union1d(d0.values, d1.values)
    breaks = breaks[(breaks > 0.0) & (breaks < 1.0)]
    grid = np.concatenate(([0.0], breaks, [1.0]))
    left = grid[:-1]
    seg = np.diff(grid)
    vals = c.value(d0.cdf(left), d1.cdf(left))
    return float(np.sum(seg * vals))


def _transformed_group_w1(g: GroupedScores, pooled: EmpiricalDistribution, left: bool = True) -> float:
    """W1 between the group scores pushed through the pooled CDF.

    ``left=True`` uses the left-continuous realization of the pooled CDF,
    which is the transform that stays consistent with threshold averaging
    when the pooled distribution has atoms.
    """
    transform = pooled.left_cdf if left else pooled.cdf
    t0 = EmpiricalDistribution.from_samples(transform(g.scores_by_group[0]))
    t1 = EmpiricalDistribution.from_samples(transform(g.scores_by_group[1]))
    return wasserstein1(t0, t1)


def invariant_bias(g: GroupedScores, pooled: EmpiricalDistribution) -> float:
    """Distribution-invariant bias, exact for atomic score distributions.

    Computed two ways and cross-checked: (a) the threshold average of
    |F0 - F1| against the pooled score distribution, and (b) the W1 distance
    between the groups after the left-continuous pooled-CDF transform.  The
    two must agree to 1e-10; the transform path is returned.
    """
    _require_two_groups(g)
    d0, d1 = g.distribution(0), g.distribution(1)
    threshold_path = float(
        np.sum(pooled.weights * np.abs(d0.cdf(pooled.values) - d1.cdf(pooled.values)))
    )
    transform_path = _transformed_group_w1(g, pooled, left=True)
    if abs(threshold_path - transform_path) > _PATH_AGREEMENT_TOL:
        raise AssertionError(
            "invariant-bias computation paths disagree: "
            f"threshold average {threshold_path!r} vs transform {transform_path!r}"
        )
    return transform_path


def multi_attribute_bias(
    g: GroupedScores,
    weights,
    pairwise: str = "w1",
    cost: CostFunction = None,
    mu: ThresholdMeasure = None,
) -> float:
    """Weighted sum of pairwise biases of each protected group against group 0.

    ``pairwise`` selects the two-group metric: ``"w1"`` or ``"cost"`` (which
    needs ``cost`` and ``mu``).  ``weights`` has one entry per protected
    group, i.e. length K-1.
    """
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.size != g.n_groups - 1:
        raise ValueError(f"expected {g.n_groups - 1} weights, got {weights.size}")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    if pairwise not in ("w1", "cost"):
        raise ValueError(f"unknown pairwise metric {pairwise!r}")
    if pairwise == "cost" and (cost is None or mu is None):
        raise ValueError("pairwise='cost' requires cost and mu")
    total = 0.0
    p = g.group_probs
    for k in range(1, g.n_groups):
        pair_probs = np.array([p[0], p[k]])
        pair_probs = pair_probs / pair_probs.sum() if pair_probs.sum() > 0 else np.array([0.5, 0.5])
        pair = GroupedScores((g.scores_by_group[0], g.scores_by_group[k]), pair_probs)
        if pairwise == "w1":
            value = wasserstein1(pair.distribution(0), pair.distribution(1))
        else:
            value = cost_bias(pair, cost, mu)
        total += weights[k - 1] * value
    return float(total)
