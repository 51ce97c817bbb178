import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import kstest, norm

from bayes_evidence.datagen import EASY_GMM, generate_gmm
from bayes_evidence.models import Dataset, GmmModel, PolynomialModel, PriorBox, make_transform
from bayes_evidence.nested import (
    ExplorationError,
    LivePoint,
    MaxIterationsError,
    NsConfig,
    adapt_step_sizes,
    explore,
    posterior_samples,
    run_nested,
    shrinkage_log_t,
    write_trace,
)
from bayes_evidence.stats import RngHandle


class ConstantModel:
    def __init__(self, c=0.37, dim=1):
        self.log_c = math.log(c)
        self.box = PriorBox(np.zeros(dim), np.ones(dim))

    def log_likelihood(self, theta):
        return self.log_c


class GaussianMeanModel:
    """Known-sigma Gaussian data, uniform prior on the mean over [-half, half]."""

    def __init__(self, y, sigma=1.0, half=5.0):
        self.y = np.asarray(y, dtype=float)
        self.sigma = sigma
        self.half = half
        self.box = PriorBox([-half], [half])
        self.param_names = ("mu",)

    def log_likelihood(self, theta):
        r = self.y - theta[0]
        return float(-0.5 * self.y.size * math.log(2 * math.pi * self.sigma**2) - 0.5 * r @ r / self.sigma**2)

    def analytic(self):
        n, ybar = self.y.size, self.y.mean()
        s = self.sigma / math.sqrt(n)
        rss = float(np.sum((self.y - ybar) ** 2))
        log_c = -0.5 * n * math.log(2 * math.pi * self.sigma**2) - 0.5 * rss / self.sigma**2
        mass = norm.cdf((self.half - ybar) / s) - norm.cdf((-self.half - ybar) / s)
        log_z = log_c + math.log(math.sqrt(2 * math.pi) * s * mass / (2 * self.half))
        return log_z, ybar, s


class DecayingModel:
    """Every call returns a lower value than the last: no replacement can ever succeed."""

    def __init__(self):
        self.calls = 0
        self.box = PriorBox([0.0], [1.0])

    def log_likelihood(self, theta):
        self.calls += 1
        return -float(self.calls)


def _toy_data(seed=0, n=10):
    return RngHandle(seed).generator.normal(1.3, 1.0, n)


class TestShrinkage:
    def test_values(self):
        assert shrinkage_log_t(36) == pytest.approx(-0.027399, abs=1e-6)
        assert shrinkage_log_t(1) == math.log(0.5)

    def test_error(self):
        with pytest.raises(ValueError):
            shrinkage_log_t(0)

    def test_monte_carlo_largest_uniform(self):
        # E[ln max of N uniforms] = -1/N; ln(N/(N+1)) agrees to O(1/N^2)
        n = 36
        g = np.random.default_rng(0)
        draws = np.concatenate([np.log(g.random((100_000, n)).max(axis=1)) for _ in range(10)])
        se = draws.std() / math.sqrt(draws.size)
        assert abs(draws.mean() + 1 / n) < 4 * se
        assert abs(shrinkage_log_t(n) + 1 / n) < 1 / n**2


class TestAdaptation:
    def test_grow_and_shrink(self):
        s = np.array([0.1, 0.2])
        adapt_step_sizes(s, accepted=15, rejected=5, target=0.5)
        np.testing.assert_allclose(s, np.array([0.1, 0.2]) * math.exp(1 / 15))
        s = np.array([0.1, 0.2])
        adapt_step_sizes(s, accepted=5, rejected=15, target=0.5)
        np.testing.assert_allclose(s, np.array([0.1, 0.2]) * math.exp(-1 / 15))

    def test_all_reject_shrinks(self):
        box = PriorBox([0.0, 0.0], [1.0, 1.0])
        start = LivePoint(np.array([0.5, 0.5]), np.array([0.5, 0.5]), 0.0)
        steps = np.array([0.2, 0.3])
        rng = RngHandle(0)
        for _ in range(5):
            before = steps.copy()
            _, accepted = explore(start, math.inf, steps, rng, lambda t: 0.0, make_transform(box), n_steps=20)
            assert accepted == 0
            assert np.all(steps < before)


class TestExplore:
    @pytest.mark.parametrize("mode", ["axis", "covariance", "difference"])
    def test_prior_walk_is_uniform(self, mode):
        box = PriorBox([0.0, 0.0], [1.0, 1.0])
        transform = make_transform(box)
        rng = RngHandle(1)
        g = rng.generator
        shape = np.linalg.cholesky(np.array([[1 / 12, 0.05], [0.05, 1 / 12]])) if mode != "axis" else None
        out = []
        for _ in range(3000):
            u0 = g.random(2)
            start = LivePoint(u0, transform(u0), 0.0, 0.5)
            kw = {}
            if mode == "difference":
                kw = dict(population=g.random((20, 2)), de_fraction=0.5)
            steps = np.full(2, 0.3 if mode == "axis" else 1.0)
            new, _ = explore(start, -math.inf, steps, rng, lambda t: 0.0, transform, n_steps=10, shape=shape, **kw)
            out.append(new.u)
        out = np.array(out)
        for j in range(2):
            assert kstest(out[:, j], "uniform").pvalue > 0.01

    def test_always_above_constraint(self):
        data = Dataset(_toy_data(2))
        model = GaussianMeanModel(data.ordinates)
        transform = make_transform(model.box)
        rng = RngHandle(3)
        for k in range(200):
            u0 = rng.generator.random(1)
            ll = model.log_likelihood(transform(u0))
            start = LivePoint(u0, transform(u0), ll, 0.5)
            new, _ = explore(start, ll - 1e-9, np.array([0.05]), rng, model.log_likelihood, transform, n_steps=20)
            assert new.log_like > ll - 1e-9
            assert new.log_like == pytest.approx(model.log_likelihood(new.theta))

    @pytest.mark.parametrize("family", ["poly", "gmm"])
    def test_compiled_walk_matches_python(self, family):
        if family == "poly":
            x = np.linspace(-2, 2, 40)
            model = PolynomialModel(Dataset(x**3 + RngHandle(0).generator.normal(0, 2, 40), x), 4)
        else:
            model = GmmModel(generate_gmm(EASY_GMM), 3)
        d = model.n_params
        transform = make_transform(model.box)
        g = np.random.default_rng(5)
        pop = g.random((30, d))
        shape = np.linalg.cholesky(np.cov(pop, rowvar=False))
        lls = [model.log_likelihood(transform(u)) for u in pop]
        start_idx = int(np.argmax(lls))
        start = LivePoint(pop[start_idx], transform(pop[start_idx]), lls[start_idx], 0.3)
        floor = float(np.median(lls))
        for seed in range(5):
            outs = []
            for compiled in (None, (model.box, model.kernel)):
                steps = np.full(d, 0.5)
                new, acc = explore(
                    start, floor, steps, RngHandle(seed), model.log_likelihood, transform,
                    n_steps=40, label_min=0.1, shape=shape, compiled=compiled,
                    population=pop, de_fraction=0.5,
                )
                outs.append((new, acc, steps))
            (a, na, sa), (b, nb, sb) = outs
            assert na == nb
            np.testing.assert_array_equal(a.u, b.u)
            np.testing.assert_array_equal(sa, sb)
            assert a.log_like == pytest.approx(b.log_like, rel=1e-13)


class TestRunNested:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_constant_likelihood(self, seed):
        est = run_nested(ConstantModel(0.37, dim=2), cfg=NsConfig(n_live=20, seed=seed))
        assert abs(est.log_z - math.log(0.37)) < 1e-6
        assert abs(est.info_h) < 1e-6
        w = posterior_samples(est).weights
        assert w.sum() == pytest.approx(1.0, abs=1e-10)
        # uniform prior mass per dead point shrinks geometrically: weights follow the widths
        assert w[: est.n_iterations].max() / w[: est.n_iterations].min() < 1.1 * math.exp(
            -est.n_iterations * shrinkage_log_t(20)
        )

    def test_trace_invariants(self):
        model = GaussianMeanModel(_toy_data(1))
        est = run_nested(model, cfg=NsConfig(n_live=50, seed=4))
        k = np.arange(1, est.n_iterations + 1)
        np.testing.assert_allclose(est.log_prior_mass, k * shrinkage_log_t(50), rtol=1e-12)
        assert np.all(np.diff(est.log_prior_mass) < 0)
        assert np.all(np.diff(est.log_z_trace) >= 0)
        assert np.all(est.replacement_log_like > est.log_l0)
        assert np.all(np.diff(est.log_l0) >= 0)
        assert est.log_z_uncertainty == pytest.approx(math.sqrt(est.info_h / 50))
        assert est.info_h > 0
        # stopping rule held at the end
        assert est.n_iterations > 2 * 50 * est.info_h

    def test_conjugate_toy_single(self):
        model = GaussianMeanModel(_toy_data(0))
        ref, ybar, s = model.analytic()
        quad, _ = integrate.quad(lambda m: math.exp(model.log_likelihood([m]) - ref), -5, 5, points=[ybar])
        assert math.log(quad / 10) == pytest.approx(0.0, abs=1e-8)
        est = run_nested(model, cfg=NsConfig(n_live=100, seed=0))
        assert abs(est.log_z - ref) < 3 * est.log_z_uncertainty
        post = posterior_samples(est)
        assert abs(post.mean[0] - ybar) < 3 * s
        assert post.std[0] == pytest.approx(s, rel=0.2)

    @pytest.mark.slow
    def test_conjugate_toy_coverage(self):
        model = GaussianMeanModel(_toy_data(0))
        ref, _, _ = model.analytic()
        hits = 0
        for seed in range(100):
            est = run_nested(model, cfg=NsConfig(n_live=100, seed=seed))
            hits += abs(est.log_z - ref) < 3 * est.log_z_uncertainty
        assert hits >= 99

    def test_deterministic_per_seed(self):
        model = GaussianMeanModel(_toy_data(0))
        a = run_nested(model, cfg=NsConfig(n_live=20, seed=9))
        b = run_nested(model, cfg=NsConfig(n_live=20, seed=9))
        assert a.log_z == b.log_z
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_axis_proposal(self):
        model = GaussianMeanModel(_toy_data(0))
        ref, _, _ = model.analytic()
        est = run_nested(model, cfg=NsConfig(n_live=100, proposal="axis", seed=1))
        assert abs(est.log_z - ref) < 3 * est.log_z_uncertainty + 0.1

    def test_max_iterations(self):
        model = GaussianMeanModel(_toy_data(0))
        with pytest.raises(MaxIterationsError) as info:
            run_nested(model, cfg=NsConfig(n_live=20, max_iterations=5))
        part = info.value.partial
        assert part.n_iterations == 5
        assert part.samples.shape == (25, 1)
        assert np.isfinite(part.log_z)

    def test_exploration_failure(self):
        with pytest.raises(ExplorationError) as info:
            run_nested(DecayingModel(), cfg=NsConfig(n_live=5, retry_budget=2))
        assert info.value.log_l_min == -5.0

    def test_non_finite_likelihood(self):
        class Bad(ConstantModel):
            def log_likelihood(self, theta):
                return -math.inf

        with pytest.raises(ValueError, match="not finite"):
            run_nested(Bad(), cfg=NsConfig(n_live=5))

    def test_config_validation(self):
        for kw in (
            dict(n_live=1),
            dict(steps_per_replacement=0),
            dict(target_acceptance=1.0),
            dict(de_fraction=1.0),
            dict(proposal="ellipsoid"),
            dict(initial_step_sizes=(0.1, 0.0)),
        ):
            with pytest.raises(ValueError):
                NsConfig(**kw)

    def test_steps_scale_with_dimension(self):
        cfg = NsConfig()
        assert cfg.steps_for(1) == 25
        assert cfg.steps_for(8) == 200
        assert NsConfig(steps_per_replacement=7).steps_for(8) == 7

    def test_write_trace(self, tmp_path):
        est = run_nested(GaussianMeanModel(_toy_data(0)), cfg=NsConfig(n_live=10, seed=0))
        write_trace(est, tmp_path / "t.tsv")
        lines = (tmp_path / "t.tsv").read_text().splitlines()
        assert lines[0] == "k\tlog_prior_mass\tlog_l0\tlog_z"
        assert len(lines) == est.n_iterations + 1
        last = lines[-1].split("\t")
        assert int(last[0]) == est.n_iterations
        assert float(last[3]) == est.log_z_trace[-1]

    def test_empty_trace(self):
        est = run_nested(ConstantModel(), cfg=NsConfig(n_live=5))
        est.samples = np.empty((0, 1))
        with pytest.raises(ValueError, match="empty"):
            posterior_samples(est)


@pytest.mark.slow
class TestMixtureRecovery:
    def test_easy_set_means(self):
        # reported posterior means on the easy set: (-0.97, 1.02, 2.95)
        model = GmmModel(generate_gmm(EASY_GMM), 3)
        est = run_nested(model, cfg=NsConfig(n_live=50, seed=0))
        mu = posterior_samples(est, model.canonicalize).mean[:3]
        np.testing.assert_allclose(mu, [-0.97, 1.02, 2.95], atol=0.15)
