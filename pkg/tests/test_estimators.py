import numpy as np
import pytest
from scipy.integrate import quad

from fairfront.bias_metrics import GroupedScores, ThresholdMeasure, cost_bias
from fairfront.distributions import ABS, SQUARE, EmpiricalDistribution
from fairfront.estimators import (
    grid_bias_ladder,
    BiasEstimatorSpec,
    EstimatorBatch,
    b_hat,
    bias_value_and_grad,
    discrete_grid_value,
    estimator_rate_probe,
    exact_relaxed_bias_uniform,
    fit_loglog_slope,
    relaxed_gap_curve,
)
from fairfront.linear_family import LinearFamily
from fairfront.relaxation import logistic, ramp

UNIFORM = ThresholdMeasure.uniform01()


def identity_family(scores, n_extra=0, rng=None):
    """Family whose base scores are the given values, identity link."""
    scores = np.asarray(scores, dtype=float)
    cols = [np.ones_like(scores)]
    if n_extra:
        cols.extend(rng.normal(size=scores.size) for _ in range(n_extra))
    return LinearFamily(scores, np.column_stack(cols), link="identity")


def batch_of(n0, n1, pool=None):
    return EstimatorBatch(np.arange(n0), np.arange(n0, n0 + n1), pool)


class TestBHat:
    def test_identical_groups_zero(self):
        fam = identity_family([0.3, 0.7, 0.3, 0.7])
        value, grad = b_hat(fam, [0.2], ([0, 1], [2, 3]), 0.5, ramp(3.0))
        assert value == 0.0
        assert np.allclose(grad, 0.0)

    def test_single_points(self):
        fam = identity_family([0.0, 1.0])
        value, _ = b_hat(fam, [0.0], ([0], [1]), 0.5, ramp(1.0))
        assert value == pytest.approx(0.5)

    def test_value_bounded(self):
        rng = np.random.default_rng(0)
        fam = identity_family(rng.normal(size=30), n_extra=2, rng=rng)
        for t in (-1.0, 0.0, 0.7):
            value, _ = b_hat(fam, rng.normal(size=3), (np.arange(15), np.arange(15, 30)), t, logistic(8.0))
            assert -1.0 <= value <= 1.0

    def test_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(5)
        fam = identity_family(rng.normal(size=40), n_extra=3, rng=rng)
        groups = (np.arange(20), np.arange(20, 40))
        for _ in range(5):
            theta = rng.normal(size=4)
            _, grad = b_hat(fam, theta, groups, 0.3, logistic(4.0))
            h = 1e-5
            fd = np.zeros(4)
            for j in range(4):
                e = np.zeros(4)
                e[j] = h
                up, _ = b_hat(fam, theta + e, groups, 0.3, logistic(4.0))
                dn, _ = b_hat(fam, theta - e, groups, 0.3, logistic(4.0))
                fd[j] = (up - dn) / (2 * h)
            assert np.linalg.norm(grad - fd) <= 1e-6 * max(np.linalg.norm(fd), 1e-12)

    def test_empty_group_rejected(self):
        fam = identity_family([0.0, 1.0])
        with pytest.raises(ValueError):
            b_hat(fam, [0.0], ([], [1]), 0.5, ramp(1.0))


class TestSpecValidation:
    def test_variant_checked(self):
        with pytest.raises(ValueError):
            BiasEstimatorSpec(variant="exact")

    def test_energy_needs_square(self):
        with pytest.raises(ValueError):
            BiasEstimatorSpec(variant="energy", cost=ABS)

    def test_threshold_scheme(self):
        assert BiasEstimatorSpec(thresholds=129).grid_shape() == (129, pytest.approx(1 / 129))
        assert BiasEstimatorSpec(thresholds=1 / 64).grid_shape() == (64, pytest.approx(1 / 64))
        with pytest.raises(ValueError):
            BiasEstimatorSpec(thresholds=1)

    def test_degenerate_relaxation_rejected(self):
        with pytest.raises(ValueError):
            BiasEstimatorSpec(relaxation=logistic(-2.0))


def _all_variant_specs(seed=0):
    rel = logistic(6.0)
    return [
        BiasEstimatorSpec("threshold-mc", rel, SQUARE, 64, rng_seed=seed),
        BiasEstimatorSpec("threshold-discrete", rel, SQUARE, 64),
        BiasEstimatorSpec("threshold-discrete-trapezoid", rel, SQUARE, 64),
        BiasEstimatorSpec("energy", rel, SQUARE, 64),
        BiasEstimatorSpec("invariant-mc", rel, SQUARE, 64),
        BiasEstimatorSpec("invariant-kde-discrete", rel, SQUARE, 64, kde_bandwidth=0.15),
        BiasEstimatorSpec("invariant-energy-relaxed", rel, SQUARE, 64),
    ]


class TestEstimatorValues:
    def test_identical_groups_are_zero(self):
        rng = np.random.default_rng(3)
        scores = rng.uniform(0.2, 0.8, 12)
        fam = identity_family(np.concatenate([scores, scores, scores[:6]]))
        batch = EstimatorBatch(np.arange(12), np.arange(12, 24), np.arange(24, 30))
        theta = np.array([0.05])
        for spec in _all_variant_specs():
            value, grad = bias_value_and_grad(spec, fam, theta, batch)
            if spec.variant == "threshold-mc":
                assert value == 0.0
            else:
                assert abs(value) <= 1e-12
            assert np.all(np.abs(grad) <= 1e-12)

    def test_energy_point_masses(self):
        fam = identity_family([0.0, 1.0])
        spec = BiasEstimatorSpec("energy", logistic(5.0), SQUARE, 16)
        value, _ = bias_value_and_grad(spec, fam, [0.0], batch_of(1, 1))
        assert value == pytest.approx(2.0)

    def test_energy_nonnegative(self):
        rng = np.random.default_rng(11)
        fam = identity_family(rng.uniform(0, 1, 40))
        spec = BiasEstimatorSpec("energy", logistic(5.0), SQUARE, 16)
        for _ in range(10):
            value, _ = bias_value_and_grad(spec, fam, [rng.normal() * 0.1], batch_of(20, 20))
            assert value >= 0.0

    def test_energy_identity_with_exact_integral(self):
        # V-statistic equals twice the exact integral of (F0 - F1)^2
        rng = np.random.default_rng(19)
        for _ in range(10):
            s0 = rng.uniform(0, 1, rng.integers(3, 9))
            s1 = rng.uniform(0, 1, rng.integers(3, 9))
            fam = identity_family(np.concatenate([s0, s1]))
            spec = BiasEstimatorSpec("energy", logistic(5.0), SQUARE, 16)
            value, _ = bias_value_and_grad(spec, fam, [0.0], batch_of(s0.size, s1.size))
            oracle = 2.0 * cost_bias(GroupedScores((s0, s1), [0.5, 0.5]), SQUARE, UNIFORM)
            assert value == pytest.approx(oracle, abs=1e-10)

    def test_discrete_matches_exact_oracle(self):
        rng = np.random.default_rng(23)
        spec = BiasEstimatorSpec("threshold-discrete", ramp(200.0), SQUARE, 1 / 1024)
        for _ in range(10):
            s0 = rng.uniform(0, 1, 8)
            s1 = rng.uniform(0, 1, 8)
            fam = identity_family(np.concatenate([s0, s1]))
            value, _ = bias_value_and_grad(spec, fam, [0.0], batch_of(8, 8))
            oracle = cost_bias(GroupedScores((s0, s1), [0.5, 0.5]), SQUARE, UNIFORM)
            assert value == pytest.approx(oracle, abs=1e-2)

    def test_relaxed_bias_limit_error_halves(self):
        # (s, step) = (10^k, 10^-(k+1)) drives the grid value to the exact
        # metric, error at least halving per rung
        rng = np.random.default_rng(29)
        s0 = rng.uniform(0, 1, 8)
        s1 = rng.uniform(0, 1, 8)
        fam = identity_family(np.concatenate([s0, s1]))
        oracle = cost_bias(GroupedScores((s0, s1), [0.5, 0.5]), ABS, UNIFORM)
        errs = []
        for k in (1, 2, 3):
            spec = BiasEstimatorSpec("threshold-discrete", ramp(10.0**k), ABS, 10.0 ** -(k + 1))
            value, _ = bias_value_and_grad(spec, fam, [0.0], batch_of(8, 8))
            errs.append(abs(value - oracle))
        # halving per rung, down to the floating-point noise floor
        assert errs[1] <= max(errs[0] / 2, 1e-12)
        assert errs[2] <= max(errs[1] / 2, 1e-12)

    def test_mc_is_seed_reproducible(self):
        rng = np.random.default_rng(31)
        fam = identity_family(rng.uniform(0, 1, 20))
        spec = BiasEstimatorSpec("threshold-mc", logistic(6.0), SQUARE, 64, rng_seed=7)
        v1, g1 = bias_value_and_grad(spec, fam, [0.1], batch_of(10, 10))
        v2, g2 = bias_value_and_grad(spec, fam, [0.1], batch_of(10, 10))
        assert v1 == v2 and np.array_equal(g1, g2)

    def test_value_only_path_matches_full_path(self):
        rng = np.random.default_rng(37)
        n = 120
        fam = LinearFamily(
            rng.normal(size=n),
            np.column_stack([np.ones(n)] + [rng.normal(size=n) for _ in range(3)]),
        )
        rows = rng.permutation(n)
        batch = EstimatorBatch(rows[:40], rows[40:80], rows[80:])
        theta = rng.normal(0, 0.3, 4)
        for spec in _all_variant_specs(seed=1) + [
            BiasEstimatorSpec("threshold-discrete", logistic(6.0), SQUARE, 64, unbiased=True)
        ]:
            full_value, grad = bias_value_and_grad(spec, fam, theta, batch)
            lean_value, no_grad = bias_value_and_grad(spec, fam, theta, batch, need_grad=False)
            assert no_grad is None
            assert lean_value == full_value
            assert grad is not None

    def test_pool_required_for_invariant_variants(self):
        fam = identity_family([0.2, 0.8])
        spec = BiasEstimatorSpec("invariant-mc", logistic(6.0), SQUARE, 16)
        with pytest.raises(ValueError):
            bias_value_and_grad(spec, fam, [0.0], batch_of(1, 1))

    def test_unbiased_correction_shrinks_toward_population_value(self):
        # population: two fixed atomic laws; small samples overshoot h(B)
        # by the sampling variance, the corrected estimator does not
        rng = np.random.default_rng(41)
        pop0 = EmpiricalDistribution.from_samples(rng.uniform(0, 1, 6))
        pop1 = EmpiricalDistribution.from_samples(rng.uniform(0, 1, 6))
        truth = exact_relaxed_bias_uniform(pop0, pop1, 50.0, SQUARE)
        spec_raw = BiasEstimatorSpec("threshold-discrete", ramp(50.0), SQUARE, 128)
        spec_unb = BiasEstimatorSpec("threshold-discrete", ramp(50.0), SQUARE, 128, unbiased=True)
        m = 24
        raw_err = unb_err = 0.0
        for _ in range(400):
            z0 = pop0.sample(rng, m)
            z1 = pop1.sample(rng, m)
            fam = identity_family(np.concatenate([z0, z1]))
            raw_err += bias_value_and_grad(spec_raw, fam, [0.0], batch_of(m, m))[0] - truth
            unb_err += bias_value_and_grad(spec_unb, fam, [0.0], batch_of(m, m))[0] - truth
        assert abs(unb_err / 400) < abs(raw_err / 400)


class TestExactRelaxedOracle:
    def test_matches_adaptive_quadrature(self):
        rng = np.random.default_rng(43)
        for cost in (ABS, SQUARE):
            for _ in range(5):
                pop0 = EmpiricalDistribution.from_samples(rng.uniform(0, 1, 5))
                pop1 = EmpiricalDistribution.from_samples(rng.uniform(0, 1, 5))
                s = 30.0
                gap = relaxed_gap_curve(pop0, pop1, s)
                kinks = np.concatenate(
                    [pop0.values, pop1.values, pop0.values - 1 / s, pop1.values - 1 / s]
                )
                kinks = np.unique(np.clip(kinks, 0.0, 1.0))
                ref, _ = quad(
                    lambda t: cost.h(gap(np.array([t])))[0], 0, 1, points=list(kinks), limit=500
                )
                mine = exact_relaxed_bias_uniform(pop0, pop1, s, cost)
                assert mine == pytest.approx(ref, abs=1e-9)

    def test_grid_value_consistent_with_generic_estimator(self):
        rng = np.random.default_rng(47)
        z0 = rng.uniform(0, 1, 7)
        z1 = rng.uniform(0, 1, 7)
        pop0 = EmpiricalDistribution.from_samples(z0)
        pop1 = EmpiricalDistribution.from_samples(z1)
        fam = identity_family(np.concatenate([z0, z1]))
        spec = BiasEstimatorSpec("threshold-discrete", ramp(25.0), SQUARE, 64)
        generic, _ = bias_value_and_grad(spec, fam, [0.0], batch_of(7, 7))
        fast = discrete_grid_value(pop0, pop1, 25.0, SQUARE, 64)
        assert generic == pytest.approx(fast, abs=1e-12)


class TestRateProbe:
    def test_mc_slope_near_minus_one(self):
        rng = np.random.default_rng(53)
        pop0 = EmpiricalDistribution.from_samples(rng.uniform(0.05, 0.95, 6))
        pop1 = EmpiricalDistribution.from_samples(rng.uniform(0.05, 0.95, 6))
        spec = BiasEstimatorSpec("threshold-mc", ramp(40.0), SQUARE, 64)
        rows = estimator_rate_probe(spec, pop0, pop1, [2**k for k in range(6, 11)], n_reps=100, seed=1)
        slope = fit_loglog_slope(rows)
        assert -1.3 <= slope <= -0.7

    def test_discrete_slope_near_minus_two(self):
        rng = np.random.default_rng(59)
        pop0 = EmpiricalDistribution.from_samples(rng.uniform(0.05, 0.95, 6))
        pop1 = EmpiricalDistribution.from_samples(rng.uniform(0.05, 0.95, 6))
        spec = BiasEstimatorSpec("threshold-discrete", ramp(10.0), SQUARE, 64)
        rows = estimator_rate_probe(
            spec, pop0, pop1, [2**k for k in range(6, 11)], n_reps=100, seed=2, coupling=0.4
        )
        slope = fit_loglog_slope(rows)
        assert -2.4 <= slope <= -1.6

    def test_grid_bias_grows_with_scale(self):
        # the discretization bias term, averaged over random populations to
        # remove atom/grid aliasing, grows monotonically as s doubles
        T = 64
        rows = grid_bias_ladder([T / 4, T / 2, T], T, SQUARE, n_dists=40, seed=0)
        biases = [row["mean_abs_bias"] for row in rows]
        assert biases[0] < biases[1] < biases[2]
