"""Comparison post-processors: random-search predictor rescaling and the
explainable optimal-transport projection.

Rescaling compresses selected numeric predictors toward an anchor point and
scores each sampled transformation under the exact penalized objective.  The
transport route first replaces each group's score distribution with the
probability-weighted quantile mixture of all groups (which needs the group
label), then projects the label away by regressing the repaired score on the
features alone through a weighted duplicated dataset, and finally exposes a
one-parameter interpolation family between the base and projected models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._util import cross_entropy
from .bias_metrics import GroupedScores
from .distributions import wasserstein1
from .gbdt import Ensemble, GBDTParams, train

RESCALE_A_BOUNDS = (0.0, 3.0)
ANCHOR_EXTENSION = 0.05
DEFAULT_THETA_GRID = 15


def rescale_transform(x, a: float, x_star: float):
    """Linear compression ``a * (x - x_star) + x_star`` toward the anchor."""
    return a * (np.asarray(x, dtype=float) - x_star) + x_star


@dataclass
class RescaleCandidate:
    a: np.ndarray          # per selected feature
    x_star: np.ndarray
    train_ce: float = None
    train_w1: float = None

    def apply(self, X, selected) -> np.ndarray:
        out = np.array(X, dtype=float, copy=True)
        for k, j in enumerate(selected):
            out[:, j] = rescale_transform(out[:, j], self.a[k], self.x_star[k])
        return out


@dataclass
class RescaleSearchResult:
    candidates: list
    selected_features: list
    best_per_omega: dict = field(default_factory=dict)  # omega -> candidate index


def random_search_rescaling(
    model: Ensemble,
    X,
    y,
    groups,
    selected_features,
    omegas,
    n_iter: int,
    seed: int = 0,
    a_bounds=RESCALE_A_BOUNDS,
) -> RescaleSearchResult:
    """Uniform random search over per-feature (a, x*) transformations.

    Candidate 0 is always the identity.  Anchors are drawn around each
    feature's mean, extended by 5% of the distance to the observed min and
    max.  Every candidate is scored with the exact train cross-entropy and
    W1 bias; ``best_per_omega`` minimizes ``ce + omega * w1``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    groups = np.asarray(groups).ravel()
    selected = list(selected_features)
    rng = np.random.default_rng(seed)
    k = len(selected)

    candidates = [RescaleCandidate(np.ones(k), np.zeros(k))] if k else [RescaleCandidate(np.ones(0), np.zeros(0))]
    if k:
        mean = X[:, selected].mean(axis=0)
        lo = X[:, selected].min(axis=0)
        hi = X[:, selected].max(axis=0)
        anchor_lo = mean - ANCHOR_EXTENSION * (mean - lo)
        anchor_hi = mean + ANCHOR_EXTENSION * (hi - mean)
        candidates[0] = RescaleCandidate(np.ones(k), mean.copy())
        for _ in range(int(n_iter)):
            a = rng.uniform(a_bounds[0], a_bounds[1], k)
            x_star = rng.uniform(anchor_lo, anchor_hi)
            candidates.append(RescaleCandidate(a, x_star))

    for cand in candidates:
        probs = model.predict_proba(cand.apply(X, selected))
        cand.train_ce = cross_entropy(probs, y)
        gs = GroupedScores.from_labels(probs, groups)
        cand.train_w1 = wasserstein1(gs.distribution(0), gs.distribution(1))

    result = RescaleSearchResult(candidates, selected)
    for omega in np.asarray(omegas, dtype=float).ravel():
        scores = [c.train_ce + omega * c.train_w1 for c in candidates]
        result.best_per_omega[float(omega)] = int(np.argmin(scores))
    return result


def ot_repair(g: GroupedScores) -> list:
    """Replace each record's score by the probability-weighted quantile
    mixture evaluated at its within-group CDF level.

    Returns per-group arrays of repaired scores (group-aware: the map used
    depends on the group label).
    """
    dists = [g.distribution(k) for k in range(g.n_groups)]
    repaired = []
    for k, scores in enumerate(g.scores_by_group):
        levels = dists[k].cdf(scores)
        levels = np.clip(levels, np.finfo(float).tiny, 1.0)
        mixed = np.zeros_like(scores, dtype=float)
        for p, d in zip(g.group_probs, dists):
            mixed += p * d.quantile(levels)
        repaired.append(mixed)
    return repaired


def repair_scores_by_label(scores, groups) -> np.ndarray:
    """ot_repair on a flat score vector, scattered back to record order."""
    scores = np.asarray(scores, dtype=float).ravel()
    groups = np.asarray(groups).ravel()
    g = GroupedScores.from_labels(scores, groups)
    repaired_groups = ot_repair(g)
    out = np.empty_like(scores)
    for k, rep in enumerate(repaired_groups):
        out[groups == k] = rep
    return out


@dataclass
class OtProjection:
    projected_model: Ensemble
    thetas: np.ndarray
    repaired_train: np.ndarray

    def interpolated_probs(self, base_probs, X, theta: float) -> np.ndarray:
        """Probability-space blend (1 - theta) * base + theta * projected."""
        return (1.0 - theta) * np.asarray(base_probs, dtype=float) + theta * self.projected_model.predict_proba(X)

    def candidates(self, base_probs, X):
        return [(float(t), self.interpolated_probs(base_probs, X, t)) for t in self.thetas]


def ot_projection(
    base: Ensemble,
    X,
    groups,
    params: GBDTParams = None,
    thetas=None,
    valid=None,
) -> OtProjection:
    """Demographically blind projection of the repaired scores.

    Trains the weight-capable boosted trees on the duplicated dataset
    (X, 0, 1 - repaired) concatenated with (X, 1, repaired), which regresses
    the repaired probability on the features alone; the one-parameter family
    interpolates probabilities between the base and projected models.
    """
    X = np.asarray(X, dtype=float)
    groups = np.asarray(groups).ravel()
    # fitting a smooth conditional expectation: deeper trees, small leaves
    params = params or GBDTParams(depth=5, rounds=400, learning_rate=0.1, min_leaf=8.0, early_stop_rounds=0)
    if thetas is None:
        thetas = np.linspace(0.0, 1.0, DEFAULT_THETA_GRID)
    base_probs = base.predict_proba(X)
    repaired = repair_scores_by_label(base_probs, groups)
    weights = np.concatenate([1.0 - repaired, repaired])
    if weights[: X.shape[0]].sum() <= 0 or weights[X.shape[0] :].sum() <= 0:
        raise ValueError("degenerate repair weights: one label copy carries no mass")
    stacked_X = np.vstack([X, X])
    stacked_y = np.concatenate([np.zeros(X.shape[0]), np.ones(X.shape[0])])
    projected = train(stacked_X, stacked_y, sample_weight=weights, params=params, valid=valid)
    return OtProjection(projected, np.asarray(thetas, dtype=float), repaired)
