"""Differentiable bias estimators with analytic theta-gradients.

Each estimator approximates a threshold-averaged bias metric of the grouped
link-space scores of a linear family, and returns both the value and its
exact gradient with respect to the family parameter.  Variants:

threshold-mc              Monte Carlo thresholds drawn from uniform(0, 1).
threshold-discrete        uniform grid on [0, 1], rectangle rule.
threshold-discrete-trapezoid
                          same grid with trapezoid end weights.
energy                    V-statistic of the pairwise absolute gaps, equal to
                          twice the squared Cramer distance of the groups.
invariant-mc              thresholds are themselves model scores drawn from a
                          held-out pool, making the metric invariant to
                          monotone score transforms.
invariant-kde-discrete    grid thresholds weighted by a Gaussian KDE of the
                          pooled score density.
invariant-energy-relaxed  energy statistic of scores pushed through a relaxed
                          pooled CDF built from the held-out pool.

Gradients flow through every occurrence of the model score inside the
relaxation, including pooled scores reused as thresholds; only the random
selection of threshold/pool samples is frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .distributions import CostFunction, EmpiricalDistribution
from .linear_family import LinearFamily
from .relaxation import RelaxationFamily

_VARIANTS = (
    "threshold-mc",
    "threshold-discrete",
    "threshold-discrete-trapezoid",
    "energy",
    "invariant-mc",
    "invariant-kde-discrete",
    "invariant-energy-relaxed",
)
_ENERGY_VARIANTS = ("energy", "invariant-energy-relaxed")


@dataclass(frozen=True)
class BiasEstimatorSpec:
    """Fully determines a differentiable bias value and gradient.

    ``thresholds`` is either a count T (int) or a grid step (float in (0,1)).
    ``unbiased`` subtracts the within-group variance terms from squared-cost
    threshold estimators so each term estimates h(B_s(t)) without the
    sampling-variance inflation; it requires at least two records per group
    and can make small values dip below zero.
    """

    variant: str = "threshold-discrete-trapezoid"
    relaxation: RelaxationFamily = RelaxationFamily("logistic", 20.0)
    cost: CostFunction = CostFunction("square")
    thresholds: float = 1.0 / 129.0
    kde_bandwidth: float = None
    rng_seed: int = 0
    unbiased: bool = False

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown estimator variant {self.variant!r}")
        if not self.cost.is_h_form:
            raise ValueError("estimators require a difference cost (abs or square)")
        if self.variant in _ENERGY_VARIANTS and self.cost.kind != "square":
            raise ValueError("energy variants require the square cost")
        t, dt = self.grid_shape()
        if t < 2:
            raise ValueError("need at least two thresholds")
        if not 0.0 < dt < 1.0:
            raise ValueError("grid step must lie in (0, 1)")
        if self.kde_bandwidth is not None and not self.kde_bandwidth > 0:
            raise ValueError("kde bandwidth must be positive")

    def grid_shape(self):
        """Threshold scheme as ``(count, step)``."""
        if isinstance(self.thresholds, (int, np.integer)):
            count = int(self.thresholds)
            return count, 1.0 / count
        step = float(self.thresholds)
        return int(round(1.0 / step)), step

    def with_seed(self, seed: int) -> "BiasEstimatorSpec":
        return replace(self, rng_seed=seed)


@dataclass(frozen=True)
class EstimatorBatch:
    """Row indices of a group-indexed record sample.

    ``pool`` feeds the invariant variants (threshold scores, KDE centers or
    relaxed pooled CDF); it should be sampled independently of the group
    rows.
    """

    group0: np.ndarray
    group1: np.ndarray
    pool: np.ndarray = None

    def __post_init__(self):
        for name in ("group0", "group1", "pool"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=np.intp).ravel()
            object.__setattr__(self, name, arr)
        if self.group0.size == 0 or self.group1.size == 0:
            raise ValueError("both groups must be nonempty in the batch")

    @classmethod
    def full(cls, groups) -> "EstimatorBatch":
        """All rows, grouped by the 0/1 labels; pool = every row."""
        groups = np.asarray(groups).ravel()
        return cls(
            np.flatnonzero(groups == 0),
            np.flatnonzero(groups == 1),
            np.arange(groups.size),
        )


def b_hat(family: LinearFamily, theta, group_index_sets, t: float, relaxation: RelaxationFamily):
    """Relaxed CDF-gap statistic at one threshold, on raw family scores.

    Value is ``mean_{group 1} r_s(f - t) - mean_{group 0} r_s(f - t)`` with
    ``f = f_*(x) - theta . w(x)``; always in [-1, 1].  The gradient is exact:
    the means of ``r_s'(f - t) * (-w_j)``.
    """
    idx0, idx1 = (np.asarray(ix, dtype=np.intp).ravel() for ix in group_index_sets)
    if idx0.size == 0 or idx1.size == 0:
        raise ValueError("both groups must be nonempty in the batch")
    theta = np.asarray(theta, dtype=float)
    parts = []
    for idx in (idx0, idx1):
        W = family.encoder_matrix[idx]
        f = family.base_scores[idx] - W @ theta
        z = f - t
        parts.append((relaxation.r(z).mean(), -(relaxation.r_prime(z)[:, None] * W).mean(axis=0)))
    (m0, g0), (m1, g1) = parts
    return float(m1 - m0), g1 - g0


def _group_curves(relaxation, u, du, thresholds, need_grad=True):
    """Relaxation values/derivatives of one group against many thresholds.

    Returns ``(R, mean_r, grad_mean, P)`` where R and P are (T, m) matrices of
    r_s and r_s' at ``u_i - t_j``, ``mean_r`` is the row mean of R, and
    ``grad_mean`` its theta-gradient (T, d).  Without ``need_grad`` the two
    gradient pieces are None.
    """
    Z = u[None, :] - thresholds[:, None]
    if not need_grad:
        R = relaxation.r(Z)
        return R, R.mean(axis=1), None, None
    R, P = relaxation.r_and_prime(Z)
    mean_r = R.mean(axis=1)
    grad_mean = (P @ du) / u.size
    return R, mean_r, grad_mean, P


def _unbiased_variance(R):
    """Per-threshold unbiased variance of the group's relaxation mean:
    Bessel-corrected sample variance of r_s(u_i - t), divided by m."""
    m = R.shape[1]
    if m < 2:
        raise ValueError("unbiased square correction needs at least two records per group")
    centered = R - R.mean(axis=1, keepdims=True)
    return (centered * centered).sum(axis=1) / (m - 1) / m


def _variance_correction(R, P, du):
    """The unbiased variance term and its analytic theta-gradient."""
    m = R.shape[1]
    centered = R - R.mean(axis=1, keepdims=True)
    v = (centered * centered).sum(axis=1) / (m - 1) / m
    dv = (2.0 / (m * (m - 1))) * ((centered * P) @ du)
    return v, dv


def _threshold_average(spec, family, theta, batch, thresholds, weights, extra_db=None, need_grad=True):
    """Weighted sum of h(B_hat(t)) with the exact gradient.

    ``extra_db`` adds a per-threshold gradient term to dB (used when the
    thresholds are themselves model scores).
    """
    u0, du0 = _scores_maybe_grad(family, theta, batch.group0, need_grad)
    u1, du1 = _scores_maybe_grad(family, theta, batch.group1, need_grad)
    rel = spec.relaxation
    R0, m0, g0, P0 = _group_curves(rel, u0, du0, thresholds, need_grad)
    R1, m1, g1, P1 = _group_curves(rel, u1, du1, thresholds, need_grad)
    B = m1 - m0
    hvals = spec.cost.h(B)
    value = float(weights @ hvals)
    correct = spec.unbiased and spec.cost.kind == "square"
    if correct:
        value -= float(weights @ (_unbiased_variance(R0) + _unbiased_variance(R1)))
    if not need_grad:
        return value, None
    dB = g1 - g0
    if extra_db is not None:
        dB = dB + extra_db(P0, P1)
    dh = spec.cost.h_prime(B)
    grad = (weights * dh) @ dB
    if correct:
        _, dv0 = _variance_correction(R0, P0, du0)
        _, dv1 = _variance_correction(R1, P1, du1)
        grad = grad - weights @ (dv0 + dv1)
    return value, grad


def _energy_vstat(S0, dS0, S1, dS1, need_grad=True):
    """Energy V-statistic of two transformed samples with its gradient.

    ``2 mean|S0_i - S1_j| - mean|S0 - S0'| - mean|S1 - S1'|``; diagonals are
    included, which makes the statistic equal to twice the exact integral of
    the squared gap of the empirical CDFs (and hence nonnegative).
    """
    m0, m1 = S0.size, S1.size
    diff01 = S0[:, None] - S1[None, :]
    value = 2.0 * np.abs(diff01).mean()
    grad = None
    if need_grad:
        sgn01 = np.sign(diff01)
        grad = (2.0 / (m0 * m1)) * (sgn01.sum(axis=1) @ dS0 - sgn01.sum(axis=0) @ dS1)
    for S, dS in ((S0, dS0), (S1, dS1)):
        d = S[:, None] - S[None, :]
        value -= np.abs(d).mean()
        if need_grad:
            grad -= (2.0 / (S.size * S.size)) * (np.sign(d).sum(axis=1) @ dS)
    return float(value), grad


def _uniform_cdf_transform(u, du):
    """Push scores through the uniform(0, 1) CDF: clip to [0, 1]."""
    inside = ((u > 0.0) & (u < 1.0)).astype(float)
    return np.clip(u, 0.0, 1.0), du * inside[:, None]


def _silverman_bandwidth(samples) -> float:
    sd = float(np.std(samples, ddof=1)) if samples.size > 1 else 0.0
    bw = 1.06 * sd * samples.size ** (-0.2)
    return max(bw, 1e-9)


def _require_pool(spec, batch):
    if batch.pool is None or batch.pool.size == 0:
        raise ValueError(f"{spec.variant} needs a pool sample in the batch")


def _scores_maybe_grad(family, theta, rows, need_grad):
    if need_grad:
        return family.scores_and_grad(theta, rows)
    return family.scores(theta, rows), None


def bias_value_and_grad(
    spec: BiasEstimatorSpec,
    family: LinearFamily,
    theta,
    batch: EstimatorBatch,
    rng: np.random.Generator = None,
    need_grad: bool = True,
):
    """Evaluate the selected bias estimator and its exact theta-gradient.

    Grid and Monte Carlo thresholds live on [0, 1], so families with a
    logistic link are thresholded in probability space.  ``rng`` overrides
    the spec seed for Monte Carlo threshold draws.  With ``need_grad=False``
    the gradient slot is None (snapshot scoring skips the heavy matmuls).
    """
    theta = np.asarray(theta, dtype=float)
    T, dt = spec.grid_shape()

    if spec.variant == "threshold-mc":
        gen = rng if rng is not None else np.random.default_rng(spec.rng_seed)
        thresholds = gen.random(T)
        weights = np.full(T, 1.0 / T)
        return _threshold_average(spec, family, theta, batch, thresholds, weights, need_grad=need_grad)

    if spec.variant == "threshold-discrete":
        thresholds = dt * np.arange(1, T + 1)
        weights = np.full(T, dt)
        return _threshold_average(spec, family, theta, batch, thresholds, weights, need_grad=need_grad)

    if spec.variant == "threshold-discrete-trapezoid":
        thresholds = dt * np.arange(0, T + 1)
        weights = np.full(T + 1, dt)
        weights[0] = weights[-1] = dt / 2.0
        return _threshold_average(spec, family, theta, batch, thresholds, weights, need_grad=need_grad)

    if spec.variant == "energy":
        u0, du0 = _scores_maybe_grad(family, theta, batch.group0, need_grad)
        u1, du1 = _scores_maybe_grad(family, theta, batch.group1, need_grad)
        if need_grad:
            S0, dS0 = _uniform_cdf_transform(u0, du0)
            S1, dS1 = _uniform_cdf_transform(u1, du1)
        else:
            S0, dS0 = np.clip(u0, 0.0, 1.0), None
            S1, dS1 = np.clip(u1, 0.0, 1.0), None
        return _energy_vstat(S0, dS0, S1, dS1, need_grad=need_grad)

    _require_pool(spec, batch)
    up, dup = _scores_maybe_grad(family, theta, batch.pool, need_grad)

    if spec.variant == "invariant-mc":
        weights = np.full(up.size, 1.0 / up.size)

        def threshold_grad(P0, P1):
            # thresholds are scores: d r_s(u_i - u_pool_j) picks up -du_pool_j
            a = P1.mean(axis=1) - P0.mean(axis=1)
            return -a[:, None] * dup

        return _threshold_average(
            spec, family, theta, batch, up, weights, extra_db=threshold_grad, need_grad=need_grad
        )

    if spec.variant == "invariant-kde-discrete":
        thresholds = dt * np.arange(1, T + 1)
        bw = spec.kde_bandwidth if spec.kde_bandwidth is not None else _silverman_bandwidth(up)
        z = (thresholds[:, None] - up[None, :]) / bw
        kern = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
        rho = kern.mean(axis=1) / bw
        u0, du0 = _scores_maybe_grad(family, theta, batch.group0, need_grad)
        u1, du1 = _scores_maybe_grad(family, theta, batch.group1, need_grad)
        rel = spec.relaxation
        _, m0, g0, _ = _group_curves(rel, u0, du0, thresholds, need_grad)
        _, m1, g1, _ = _group_curves(rel, u1, du1, thresholds, need_grad)
        B = m1 - m0
        hvals = spec.cost.h(B)
        value = float(dt * (hvals @ rho))
        if not need_grad:
            return value, None
        # d rho(t_j)/d theta: kernel derivative through the pooled scores
        drho = ((kern * z) @ dup) / (up.size * bw * bw)
        dh = spec.cost.h_prime(B)
        grad = dt * ((rho * dh) @ (g1 - g0) + hvals @ drho)
        return value, grad

    # invariant-energy-relaxed: transform all group scores through the relaxed
    # pooled CDF estimated from the pool sample, then take the V-statistic.
    rel = spec.relaxation
    out = []
    for rows in (batch.group0, batch.group1):
        u, du = _scores_maybe_grad(family, theta, rows, need_grad)
        Z = up[None, :] - u[:, None]          # (m, P)
        if need_grad:
            R, P = rel.r_and_prime(Z)
            S = 1.0 - R.mean(axis=1)
            # dS_i = -(1/P) sum_l r'(up_l - u_i) (dup_l - du_i)
            dS = -(P @ dup) / up.size + P.mean(axis=1)[:, None] * du
        else:
            S = 1.0 - rel.r(Z).mean(axis=1)
            dS = None
        out.append((S, dS))
    (S0, dS0), (S1, dS1) = out
    return _energy_vstat(S0, dS0, S1, dS1, need_grad=need_grad)


# ---------------------------------------------------------------------------
# Rate probe: empirical mean-squared-error ladders against the exact relaxed
# bias of a known atomic population.  Uses the ramp relaxation, for which
# both the estimator (via prefix sums) and the population integral (piecewise
# linear segments) evaluate exactly without dense threshold-by-score grids.
# ---------------------------------------------------------------------------


def _ramp_prefix(dist: EmpiricalDistribution):
    w = np.concatenate(([0.0], np.cumsum(dist.weights)))
    wv = np.concatenate(([0.0], np.cumsum(dist.weights * dist.values)))
    return w, wv


def _ramp_mean(values, w_prefix, wv_prefix, t, s):
    """mean/weighted-mean of ramp r_s(z - t) for sorted atoms, vector t."""
    t = np.asarray(t, dtype=float)
    hi = np.searchsorted(values, t + 1.0 / s, side="left")
    lo = np.searchsorted(values, t, side="right")
    full = w_prefix[-1] - w_prefix[hi]
    win_w = w_prefix[hi] - w_prefix[lo]
    win_wv = wv_prefix[hi] - wv_prefix[lo]
    return full + s * (win_wv - t * win_w)


def relaxed_gap_curve(pop0: EmpiricalDistribution, pop1: EmpiricalDistribution, s: float):
    """Population relaxed CDF gap B_s(t) as a fast callable (ramp family)."""
    w0, wv0 = _ramp_prefix(pop0)
    w1, wv1 = _ramp_prefix(pop1)

    def gap(t):
        return _ramp_mean(pop1.values, w1, wv1, t, s) - _ramp_mean(pop0.values, w0, wv0, t, s)

    return gap


def exact_relaxed_bias_uniform(
    pop0: EmpiricalDistribution,
    pop1: EmpiricalDistribution,
    s: float,
    cost: CostFunction,
) -> float:
    """Exact integral over [0, 1] of h(B_s(t)) for the ramp relaxation.

    B_s is piecewise linear with breakpoints at every atom z and at z - 1/s,
    so the integral reduces to closed forms per segment: exact Simpson for
    the square cost, root-splitting for the absolute cost.
    """
    if not cost.is_h_form:
        raise ValueError("requires an abs or square cost")
    gap = relaxed_gap_curve(pop0, pop1, s)
    atoms = np.concatenate((pop0.values, pop1.values))
    bps = np.concatenate((atoms, atoms - 1.0 / s, [0.0, 1.0]))
    bps = np.unique(np.clip(bps, 0.0, 1.0))
    a, b = bps[:-1], bps[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    Ba, Bb = gap(a), gap(b)
    seg = b - a
    if cost.kind == "square":
        Bm = gap((a + b) / 2.0)
        return float(np.sum(seg / 6.0 * (Ba * Ba + 4.0 * Bm * Bm + Bb * Bb)))
    same_sign = Ba * Bb >= 0.0
    trap = seg * (np.abs(Ba) + np.abs(Bb)) / 2.0
    denom = np.abs(Ba) + np.abs(Bb)
    denom = np.where(denom == 0.0, 1.0, denom)
    t_cross = a + seg * np.abs(Ba) / denom
    split = (np.abs(Ba) * (t_cross - a) + np.abs(Bb) * (b - t_cross)) / 2.0
    return float(np.sum(np.where(same_sign, trap, split)))


def discrete_grid_value(pop0, pop1, s: float, cost: CostFunction, T: int) -> float:
    """Population rectangle-rule value on the uniform grid (no sampling)."""
    gap = relaxed_gap_curve(pop0, pop1, s)
    grid = (np.arange(T) + 1.0) / T
    return float(np.mean(cost.h(gap(grid))))


def estimator_rate_probe(
    spec: BiasEstimatorSpec,
    pop0: EmpiricalDistribution,
    pop1: EmpiricalDistribution,
    t_ladder,
    n_reps: int = 200,
    seed: int = 0,
    coupling: float = 1.0,
):
    """Empirical MSE ladder for the Monte Carlo and grid threshold estimators.

    For each threshold count T in the ladder the per-group sample size m is
    coupled to T the way the convergence analysis prescribes: m = T/c for the
    Monte Carlo variant and m = (T / (c (1+s)))**2 for the grid variant.
    Ground truth is the exact relaxed bias of the atomic populations.
    Returns one row dict (m, T, s, mse) per ladder entry.
    """
    if spec.variant not in ("threshold-mc", "threshold-discrete"):
        raise ValueError("rate probe covers threshold-mc and threshold-discrete")
    if spec.relaxation.kind != "ramp":
        raise ValueError("rate probe uses the ramp relaxation")
    for pop in (pop0, pop1):
        if pop.values[0] < 0.0 or pop.values[-1] > 1.0:
            raise ValueError("populations must be supported in [0, 1]")
    s = spec.relaxation.scale
    truth = exact_relaxed_bias_uniform(pop0, pop1, s, spec.cost)
    rng = np.random.default_rng(seed)
    rows = []
    for T in t_ladder:
        T = int(T)
        if spec.variant == "threshold-mc":
            m = max(2, int(round(T / coupling)))
        else:
            m = max(2, int(round((T / (coupling * (1.0 + s))) ** 2)))
        errs = np.empty(n_reps)
        uniform = np.full(m, 1.0 / m)
        for rep in range(n_reps):
            z0 = np.sort(pop0.sample(rng, m))
            z1 = np.sort(pop1.sample(rng, m))
            w0 = np.concatenate(([0.0], np.cumsum(uniform)))
            wv0 = np.concatenate(([0.0], np.cumsum(uniform * z0)))
            w1 = np.concatenate(([0.0], np.cumsum(uniform)))
            wv1 = np.concatenate(([0.0], np.cumsum(uniform * z1)))
            if spec.variant == "threshold-mc":
                ts = rng.random(T)
            else:
                ts = (np.arange(T) + 1.0) / T
            bhat = _ramp_mean(z1, w1, wv1, ts, s) - _ramp_mean(z0, w0, wv0, ts, s)
            errs[rep] = np.mean(spec.cost.h(bhat)) - truth
        rows.append({"m": m, "T": T, "s": s, "mse": float(np.mean(errs * errs))})
    return rows


def fit_loglog_slope(rows, x_key="T", y_key="mse") -> float:
    """Least-squares slope of log(y) against log(x) over the probe rows."""
    x = np.log([row[x_key] for row in rows])
    y = np.log([row[y_key] for row in rows])
    return float(np.polyfit(x, y, 1)[0])


def grid_bias_ladder(
    s_values,
    T: int,
    cost: CostFunction,
    n_dists: int = 40,
    n_atoms: int = 6,
    seed: int = 0,
):
    """Mean deterministic grid error over random atomic populations, per scale.

    Isolates the discretization bias term of the grid estimator: no sampling,
    the populations themselves are evaluated on the grid and compared with
    the exact relaxed bias.  Averaging over distributions removes the
    aliasing between atoms and grid points that makes single-draw errors
    oscillate in s.
    """
    rng = np.random.default_rng(seed)
    pops = []
    for _ in range(n_dists):
        pops.append(
            (
                EmpiricalDistribution.from_samples(rng.uniform(0.05, 0.95, n_atoms)),
                EmpiricalDistribution.from_samples(rng.uniform(0.05, 0.95, n_atoms)),
            )
        )
    out = []
    for s in s_values:
        errs = [
            abs(discrete_grid_value(p0, p1, s, cost, T) - exact_relaxed_bias_uniform(p0, p1, s, cost))
            for p0, p1 in pops
        ]
        out.append({"s": float(s), "T": T, "mean_abs_bias": float(np.mean(errs))})
    return out
