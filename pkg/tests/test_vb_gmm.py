import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import multivariate_normal

from bayes_evidence.datagen import EASY_GMM, HARD_GMM, GmmGenSpec, generate_gmm
from bayes_evidence.models import Dataset, gmm_unpack
from bayes_evidence.stats import RngHandle, digamma, gammaln
from bayes_evidence.vb_gmm import VbGmmPrior, vb_gmm_bound, vb_gmm_fit, vb_gmm_init
from bayes_evidence.vb_linear import ConvergenceWarning


def _single(seed=0, n=60, mu=1.5, sd=0.8):
    return Dataset(np.random.default_rng(seed).normal(mu, sd, n))


def _s1_fixed_point(y, prior, iters=500):
    """Scalar mean-field updates for one component, coded from scratch."""
    n, sy = y.size, y.sum()
    c = prior.c0 + 0.5 * n
    e_beta = 1.0 / y.var()
    for _ in range(iters):
        tau = prior.tau0 + n * e_beta
        m = (prior.tau0 * prior.m0 + e_beta * sy) / tau
        b = prior.b0 + 0.5 * (np.sum((y - m) ** 2) + n / tau)
        e_beta = c / b
    return m, tau, b, c


def _s1_log_evidence(y, prior):
    """ln p(D) for one component: mu integrated exactly given beta, beta by quadrature on ln beta."""
    n = y.size

    def log_joint(t):
        beta = math.exp(t)
        cov = np.eye(n) / beta + np.ones((n, n)) / prior.tau0
        log_prior = prior.c0 * math.log(prior.b0) - gammaln(prior.c0) + prior.c0 * t - prior.b0 * beta
        return multivariate_normal(np.full(n, prior.m0), cov).logpdf(y) + log_prior

    grid = np.linspace(-10, 10, 801)
    vals = np.array([log_joint(t) for t in grid])
    peak = vals.max()
    t0 = grid[vals.argmax()]
    val, _ = integrate.quad(lambda t: math.exp(log_joint(t) - peak), t0 - 6, t0 + 6, points=[t0], limit=200)
    return peak + math.log(val)


class TestSingleComponent:
    def test_matches_scalar_fixed_point(self):
        data = _single()
        prior = VbGmmPrior().resolve(data)
        state, _ = vb_gmm_fit(data, 1, prior, tol=1e-12)
        m, tau, b, c = _s1_fixed_point(data.ordinates, prior)
        assert state.m[0] == pytest.approx(m, rel=1e-8)
        assert state.tau[0] == pytest.approx(tau, rel=1e-8)
        assert state.b[0] == pytest.approx(b, rel=1e-8)
        assert state.c[0] == pytest.approx(c, rel=1e-12)
        np.testing.assert_array_equal(state.resp, 1.0)
        assert state.weights[0] == 1.0

    @pytest.mark.parametrize("prior", [VbGmmPrior(), VbGmmPrior(m0=0.0, tau0=0.5, b0=2.0, c0=3.0)])
    def test_bound_below_quadrature_evidence(self, prior):
        data = _single(n=40)
        prior = prior.resolve(data)
        _, bound = vb_gmm_fit(data, 1, prior, tol=1e-12)
        ref = _s1_log_evidence(data.ordinates, prior)
        assert bound <= ref + 1e-6
        assert ref - bound < 0.5

    def test_sigma_and_mean_recovered(self):
        data = _single(n=5000)
        state, _ = vb_gmm_fit(data, 1)
        assert state.means[0] == pytest.approx(1.5, abs=3 * 0.8 / math.sqrt(5000))
        assert state.sigmas[0] == pytest.approx(0.8, rel=0.03)


class TestBound:
    def test_extra_component_on_single_gaussian(self):
        data = _single(n=200)
        _, b1 = vb_gmm_fit(data, 1)
        _, b2 = vb_gmm_fit(data, 2, rng=0)
        assert b2 <= b1 + math.log(2) + 0.1

    @pytest.mark.parametrize("spec", [EASY_GMM, HARD_GMM])
    def test_trace_monotone(self, spec):
        data = generate_gmm(spec)
        for s in range(1, 7):
            state, _ = vb_gmm_fit(data, s, rng=1, restarts=2)
            assert np.all(np.diff(state.bound_trace) >= -1e-9)

    def test_bound_matches_trace(self):
        data = generate_gmm(EASY_GMM)
        state, bound = vb_gmm_fit(data, 3, rng=0)
        assert bound == state.bound_trace[-1]
        # the last recorded bound belongs to the returned parameters and responsibilities
        assert vb_gmm_bound(state, data, VbGmmPrior()) == pytest.approx(bound, rel=1e-12)

    def test_relabelling_invariance(self):
        data = generate_gmm(EASY_GMM)
        state, bound = vb_gmm_fit(data, 3, rng=0)
        for order in ([2, 0, 1], [1, 2, 0], [2, 1, 0]):
            assert vb_gmm_bound(state.permuted(order), data, VbGmmPrior()) == pytest.approx(bound, rel=1e-13)

    def test_dirichlet_term_oracle(self):
        # only the Dirichlet KL depends on lambda0, so the bound difference between
        # two priors must equal the difference of the closed-form KL terms
        data = _single(n=30)
        state, _ = vb_gmm_fit(data, 2, rng=0)
        lam0 = 1.0
        lam = state.lam
        kl = (
            gammaln(lam.sum()) - gammaln(lam).sum() - gammaln(2 * lam0) + 2 * gammaln(lam0)
            + np.sum((lam - lam0) * (digamma(lam) - digamma(lam.sum())))
        )
        alt = VbGmmPrior(lambda0=2.0)
        lam_alt = 2.0
        kl_alt = (
            gammaln(lam.sum()) - gammaln(lam).sum() - gammaln(2 * lam_alt) + 2 * gammaln(lam_alt)
            + np.sum((lam - lam_alt) * (digamma(lam) - digamma(lam.sum())))
        )
        diff = vb_gmm_bound(state, data, VbGmmPrior()) - vb_gmm_bound(state, data, alt)
        assert diff == pytest.approx(kl_alt - kl, abs=1e-10)


class TestFit:
    def test_responsibility_rows(self):
        data = generate_gmm(HARD_GMM)
        state, _ = vb_gmm_fit(data, 4, rng=3)
        np.testing.assert_allclose(state.resp.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(state.resp >= 0)
        assert state.weights.sum() == pytest.approx(1.0)

    def test_sorted_by_mean(self):
        state, _ = vb_gmm_fit(generate_gmm(EASY_GMM), 4, rng=2)
        assert np.all(np.diff(state.means) >= 0)
        mu, sigma, pi = gmm_unpack(state.theta)
        np.testing.assert_array_equal(mu, state.means)
        np.testing.assert_allclose(sigma, np.sqrt(state.b / state.c))
        np.testing.assert_allclose(pi, state.lam / state.lam.sum())

    @pytest.mark.parametrize("spec", [EASY_GMM, HARD_GMM])
    def test_recovery(self, spec):
        # reported VB fits: easy means (-0.94, 1.02, 2.98), sigmas (0.42, 0.33, 0.68),
        # weights 0.299:0.353:0.347; hard means (-0.96, 0.04, 1.06), weights 0.326:0.342:0.332.
        # Weights are compared with the label fractions actually drawn for this data set.
        state, _ = vb_gmm_fit(generate_gmm(spec), 3, rng=0)
        labels = RngHandle(spec.seed).generator.choice(3, size=spec.n_points, p=np.array(spec.weights))
        drawn = np.bincount(labels, minlength=3) / spec.n_points
        np.testing.assert_allclose(state.means, spec.means, atol=0.15)
        np.testing.assert_allclose(state.sigmas, spec.sigmas, atol=0.12)
        np.testing.assert_allclose(state.weights, drawn, atol=0.05)

    def test_seed_stability(self):
        data = generate_gmm(EASY_GMM)
        _, a = vb_gmm_fit(data, 3, rng=0)
        _, b = vb_gmm_fit(data, 3, rng=1)
        assert abs(a - b) < 0.5

    def test_deterministic(self):
        data = generate_gmm(EASY_GMM)
        a, _ = vb_gmm_fit(data, 3, rng=5)
        b, _ = vb_gmm_fit(data, 3, rng=5)
        np.testing.assert_array_equal(a.m, b.m)
        assert a.bound_trace == b.bound_trace

    def test_easy_sweep_peaks_at_three(self):
        data = generate_gmm(EASY_GMM)
        bounds = [vb_gmm_fit(data, s, rng=7)[1] for s in range(1, 7)]
        assert 1 + int(np.argmax(bounds)) == 3

    def test_well_separated(self):
        data = generate_gmm(GmmGenSpec((-20, 0, 20), (1, 1, 1), (0.2, 0.3, 0.5), n_points=400, seed=1))
        state, _ = vb_gmm_fit(data, 3)
        np.testing.assert_allclose(state.means, [-20, 0, 20], atol=0.3)
        np.testing.assert_allclose(state.weights, [0.2, 0.3, 0.5], atol=0.06)

    def test_non_convergence_warns(self):
        with pytest.warns(ConvergenceWarning):
            state, _ = vb_gmm_fit(generate_gmm(HARD_GMM), 3, max_iter=2, restarts=1)
        assert not state.converged

    def test_errors(self):
        data = Dataset([0.0, 1.0, 2.0])
        with pytest.raises(ValueError):
            vb_gmm_fit(data, 0)
        with pytest.raises(ValueError):
            vb_gmm_fit(data, 4)
        with pytest.raises(ValueError):
            vb_gmm_fit(data, 2, tol=0.0)
        with pytest.raises(ValueError):
            VbGmmPrior(tau0=0.0)
        with pytest.raises(ValueError):
            vb_gmm_init(data, 0)

    def test_invalid_state(self):
        data = generate_gmm(EASY_GMM)
        state, _ = vb_gmm_fit(data, 2, rng=0)
        state.b[0] = -1.0
        with pytest.raises(ValueError, match="b must be > 0"):
            vb_gmm_bound(state, data, VbGmmPrior())
