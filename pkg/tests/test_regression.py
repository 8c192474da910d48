"""Tests for the covariate regression layer: the operational-time transform,
conditional likelihood, the coefficient search and the alternating fit."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import kstest

from matlife.em import StructureSpec, loglik as ph_loglik, CensoredSample
from matlife.exceptions import InvalidInputError, ScoreOverflowError
from matlife.phasetype import IPHModel, PHRepresentation
from matlife.regression import (
    PIFitConfig,
    PIModel,
    RegressionSample,
    fit_pi,
    maximize_regression,
    pi_loglik,
    transform,
)

from helpers import random_representation


def two_group_sample(n_per_group, rng, beta=np.log(2.0), theta1=1.5, theta2=1.0):
    """Weibull-clock lifetimes in two covariate groups with light censoring."""
    pi = np.array([0.25, 0.5, 0.25])
    t = np.diag([-10.0, -1.0, -0.1])
    rows = []
    for group, thet in ((0.0, theta1), (1.0, theta2)):
        factor = np.exp(group * beta)
        model = PIModel(PHRepresentation(pi, t), "weibull",
                        [beta], [np.log(theta1), np.log(theta2 / theta1)])
        cond = model.conditional_model([group])
        y = cond.sample(n_per_group, rng=rng)
        c = rng.exponential(10.0, size=n_per_group)
        rows.append((np.minimum(y, c), (y <= c).astype(int),
                     np.full(n_per_group, group)))
    y = np.concatenate([r[0] for r in rows])
    delta = np.concatenate([r[1] for r in rows])
    x = np.concatenate([r[2] for r in rows])[:, None]
    return RegressionSample(y, delta, x, np.ones(y.size))


class TestSample:
    def test_coerce_rows(self):
        s = RegressionSample.coerce([(1.0, 1, (0.5, 2.0)), (2.0, 0, (1.0, 0.0), 2.0)])
        assert s.n == 2 and s.d == 2
        assert_allclose(s.weight, [1.0, 2.0])

    def test_zero_covariates_allowed(self):
        s = RegressionSample([1.0, 2.0], [1, 1], np.empty((2, 0)), [1.0, 1.0])
        assert s.d == 0

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            RegressionSample([0.0], [1], [[1.0]], [1.0])
        with pytest.raises(InvalidInputError):
            RegressionSample([1.0], [3], [[1.0]], [1.0])
        with pytest.raises(InvalidInputError):
            RegressionSample([1.0], [1], [[np.nan]], [1.0])
        with pytest.raises(InvalidInputError):
            RegressionSample([1.0, 2.0], [1, 1], [[1.0]], [1.0, 1.0])

    def test_canonical_sorts(self):
        s = RegressionSample([2.0, 1.0, 2.0], [1, 1, 0], [[1.0], [0.0], [2.0]],
                             [1.0, 1.0, 1.0])
        c = s.canonical()
        assert_allclose(c.y, [1.0, 2.0, 2.0])
        assert_allclose(c.delta, [1, 0, 1])


class TestModel:
    def test_identity_family_has_no_gamma(self):
        rep = PHRepresentation([1.0], [[-1.0]])
        with pytest.raises(InvalidInputError):
            PIModel(rep, "identity", [0.5], [0.1])
        with pytest.raises(InvalidInputError):
            PIModel(rep, "weibull", [0.5], None)
        with pytest.raises(InvalidInputError):
            PIModel(rep, "weibull", [0.5], [0.1, 0.2, 0.3])
        with pytest.raises(InvalidInputError):
            PIModel(rep, "exotic", [0.5], [0.1])

    def test_conditional_survival_closed_form(self):
        # one latent state: S(y | x) = exp(-lam * e^{x beta} * y^theta(x))
        lam, beta = 0.7, 0.4
        gamma = np.array([0.2, -0.3])
        model = PIModel(PHRepresentation([1.0], [[-lam]]), "weibull", [beta], gamma)
        for x in (0.0, 1.0, 2.5):
            theta = np.exp(gamma[0] + gamma[1] * x)
            y = np.array([0.3, 1.0, 2.2])
            want = np.exp(-lam * np.exp(beta * x) * y**theta)
            got = np.array([model.predict([x], yi).survival for yi in y])
            assert_allclose(got, want, rtol=1e-12)

    def test_shared_shape_when_gamma_is_intercept_only(self):
        rep = PHRepresentation([1.0], [[-1.0]])
        model = PIModel(rep, "weibull", [0.5, -0.2], [np.log(2.0)])
        theta = model.shape_param(np.array([[1.0, 3.0], [0.0, 0.0]]))
        assert_allclose(theta, [2.0, 2.0], rtol=1e-12)

    def test_score_overflow(self):
        rep = PHRepresentation([1.0], [[-1.0]])
        model = PIModel(rep, "weibull", [400.0], [0.0])
        with pytest.raises(ScoreOverflowError) as info:
            model.rate_factor(np.array([[1.0], [2.0]]))
        assert info.value.index == 1

    def test_transform_maps_to_common_distribution(self):
        # transformed draws from every covariate row follow the base
        # phase-type law, checked with a KS test at the 1% level
        rng = np.random.default_rng(19)
        rep = PHRepresentation([0.25, 0.5, 0.25], np.diag([-10.0, -1.0, -0.1]))
        model = PIModel(rep, "weibull", [np.log(2.0)], [np.log(1.5), -np.log(1.5)])
        base = IPHModel(rep)
        draws, xs = [], []
        for x in (0.0, 1.0):
            cond = model.conditional_model([x])
            y = cond.sample(50_000, rng=rng)
            draws.append(y)
            xs.append(np.full(y.size, x))
        z = transform(model, np.concatenate(draws), np.concatenate(xs)[:, None])
        stat = kstest(z, lambda v: 1.0 - base.evaluate(v).survival)
        assert stat.pvalue > 0.01


class TestLoglik:
    def test_matches_per_row_evaluation(self):
        rng = np.random.default_rng(2)
        rep = random_representation(rng, 3)
        model = PIModel(rep, "gompertz", [0.3, -0.5], [0.1, 0.2, -0.1])
        n = 40
        x = rng.normal(size=(n, 2))
        y = rng.uniform(0.05, 2.0, n)
        delta = rng.integers(0, 2, n)
        w = rng.uniform(0.5, 2.0, n)
        sample = RegressionSample(y, delta, x, w)
        slow = 0.0
        for i in range(n):
            ev = model.predict(x[i], y[i])
            slow += w[i] * (np.log(ev.density) if delta[i] else np.log(ev.survival))
        assert_allclose(pi_loglik(model, sample), slow, rtol=1e-10)

    def test_identity_no_covariates_reduces_to_ph(self):
        rng = np.random.default_rng(3)
        rep = random_representation(rng, 2)
        y = rng.uniform(0.1, 3.0, 25)
        delta = rng.integers(0, 2, 25)
        sample = RegressionSample(y, delta, np.empty((25, 0)), np.ones(25))
        model = PIModel(rep, "identity", [])
        assert_allclose(pi_loglik(model, sample),
                        ph_loglik(rep, CensoredSample(y, delta, np.ones(25))),
                        rtol=1e-13)


class TestMaximize:
    def test_never_worse_than_start(self):
        rng = np.random.default_rng(8)
        sample = two_group_sample(150, rng)
        rep = PHRepresentation([0.25, 0.5, 0.25], np.diag([-10.0, -1.0, -0.1]))
        start_beta, start_gamma = np.array([0.0]), np.array([0.0, 0.0])
        start_ll = pi_loglik(PIModel(rep, "weibull", start_beta, start_gamma), sample)
        beta, gamma = maximize_regression(rep, "weibull", sample,
                                          start_beta, start_gamma)
        end_ll = pi_loglik(PIModel(rep, "weibull", beta, gamma), sample)
        assert end_ll >= start_ll - 1e-6 * abs(start_ll)
        assert end_ll > start_ll + 1.0  # the data carry real signal

    def test_bad_start_raises(self):
        rng = np.random.default_rng(12)
        sample = two_group_sample(50, rng)
        rep = PHRepresentation([1.0], [[-1.0]])
        with pytest.raises(InvalidInputError):
            maximize_regression(rep, "weibull", sample, [900.0], [0.0])

    def test_empty_coefficients_pass_through(self):
        rng = np.random.default_rng(13)
        rep = random_representation(rng, 2)
        y = rng.uniform(0.1, 2.0, 20)
        sample = RegressionSample(y, np.ones(20, dtype=int), np.empty((20, 0)),
                                  np.ones(20))
        beta, gamma = maximize_regression(rep, "identity", sample, [], None)
        assert beta.size == 0 and gamma is None


class TestFit:
    def test_trace_monotone_within_slack(self):
        rng = np.random.default_rng(5)
        sample = two_group_sample(120, rng)
        res = fit_pi(sample, StructureSpec("general", 2), family="weibull",
                     config=PIFitConfig(max_outer=25, tol=1e-9, patience=3,
                                        nm_budget=150),
                     rng=np.random.default_rng(0))
        diffs = np.diff(res.loglik_trace)
        scale = abs(res.loglik_trace[-1])
        assert np.all(diffs >= -1e-6 * max(1.0, scale))

    def test_row_order_invariance_is_exact(self):
        rng = np.random.default_rng(6)
        sample = two_group_sample(60, rng)
        perm = np.random.default_rng(1).permutation(sample.n)
        shuffled = RegressionSample(sample.y[perm], sample.delta[perm],
                                    sample.x[perm], sample.weight[perm])
        init = PHRepresentation([0.6, 0.4], [[-2.0, 0.5], [0.3, -1.0]])
        cfg = PIFitConfig(max_outer=8, nm_budget=100)
        a = fit_pi(sample, StructureSpec("general", 2), config=cfg, init=init)
        b = fit_pi(shuffled, StructureSpec("general", 2), config=cfg, init=init)
        assert_allclose(a.loglik_trace, b.loglik_trace, atol=0)
        assert_allclose(a.model.beta, b.model.beta, atol=0)
        assert_allclose(a.model.rep.T, b.model.rep.T, atol=0)

    def test_reported_model_scores_original_data(self):
        # coefficients come back on the raw covariate scale; the reported
        # model must reproduce the final internal log-likelihood
        rng = np.random.default_rng(7)
        sample = two_group_sample(80, rng)
        shifted = RegressionSample(sample.y, sample.delta,
                                   5.0 + 3.0 * sample.x, sample.weight)
        res = fit_pi(shifted, StructureSpec("general", 2),
                     config=PIFitConfig(max_outer=10, nm_budget=100),
                     rng=np.random.default_rng(2))
        assert res.model.standardization is not None
        assert_allclose(pi_loglik(res.model, shifted.canonical()),
                        res.loglik_trace[-1], rtol=1e-8)

    def test_shape_covariate_switch_controls_gamma_length(self):
        rng = np.random.default_rng(9)
        sample = two_group_sample(40, rng)
        cfg_shared = PIFitConfig(max_outer=3, nm_budget=50)
        cfg_full = PIFitConfig(max_outer=3, nm_budget=50, shape_covariates=True)
        shared = fit_pi(sample, StructureSpec("coxian", 1), config=cfg_shared,
                        rng=np.random.default_rng(0))
        full = fit_pi(sample, StructureSpec("coxian", 1), config=cfg_full,
                      rng=np.random.default_rng(0))
        assert shared.model.gamma.size == 1
        assert full.model.gamma.size == 2
        assert shared.n_parameters == 1 + 1 + 1
        assert full.n_parameters == 1 + 1 + 2

    def test_identity_family_rejects_shape_covariates(self):
        rng = np.random.default_rng(10)
        sample = two_group_sample(20, rng)
        with pytest.raises(InvalidInputError):
            fit_pi(sample, StructureSpec("coxian", 1), family="identity",
                   config=PIFitConfig(shape_covariates=True))

    def test_no_covariate_weibull_recovery(self):
        # with no covariates the fit reduces to a parametric estimate of the
        # shared clock shape; truth is theta = 1.5, rate 1
        rng = np.random.default_rng(14)
        z = rng.exponential(1.0, size=3000)
        y = z ** (1.0 / 1.5)
        sample = RegressionSample(y, np.ones(y.size, dtype=int),
                                  np.empty((y.size, 0)), np.ones(y.size))
        res = fit_pi(sample, StructureSpec("coxian", 1),
                     config=PIFitConfig(max_outer=60, tol=1e-8),
                     rng=np.random.default_rng(3))
        theta_hat = float(np.exp(res.model.gamma[0]))
        rate_hat = -float(res.model.rep.T[0, 0])
        assert abs(theta_hat - 1.5) < 0.1
        assert abs(rate_hat - 1.0) < 0.1

    def test_init_order_mismatch(self):
        rng = np.random.default_rng(15)
        sample = two_group_sample(10, rng)
        with pytest.raises(InvalidInputError):
            fit_pi(sample, StructureSpec("general", 3),
                   init=PHRepresentation([1.0], [[-1.0]]))
