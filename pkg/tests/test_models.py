import math

import mpmath
import numpy as np
import pytest
from scipy import integrate
from scipy import stats as sps

from nsp.domain import Domain, MarkedPoint
from nsp.models import (
    BackgroundModel,
    DocumentMarks,
    DocumentModel,
    DocumentModelConfig,
    GaussianModel,
    GaussianModelConfig,
    NeuronMarks,
    SequenceModel,
    SequenceModelConfig,
    default_warp_grid,
)
from nsp.models.base import background_log_density, resample_background_rate, sample_background_points
from nsp.models.gaussian import mvn_logpdf, sample_invwishart


def _npdf(x, m, sd):
    return np.exp(-0.5 * ((np.asarray(x) - m) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))


def _ig_pdf(s2, a, b):
    if s2 <= 0:
        return 0.0
    return math.exp(a * math.log(b) - math.lgamma(a) - (a + 1) * math.log(s2) - b / s2)


def random_points(model, n, seed):
    gen = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        m, th = model.sample_prior_params(gen)
        out.append(model.sample_point(m, th, gen))
    return out


def cluster_points(model, n, seed):
    gen = np.random.default_rng(seed)
    m, th = model.sample_prior_params(gen)
    return model.sample_points(m, th, n, gen)


@pytest.fixture(params=["gaussian", "gaussian_niw", "sequence", "document"])
def any_model(request, gaussian, sequence_model, document_model, square):
    if request.param == "gaussian":
        return gaussian
    if request.param == "gaussian_niw":
        return GaussianModel(GaussianModelConfig.matched_to_domain(square, 6.0, np.eye(2) * 0.01), square)
    return sequence_model if request.param == "sequence" else document_model


class TestContract:
    def test_marginal_is_chain_of_predictives(self, any_model):
        pts = cluster_points(any_model, 6, 0)
        obs = [any_model.prepare(p) for p in pts]
        stats = any_model.stats_of(obs)
        assert any_model.log_marginal(stats) == pytest.approx(any_model.log_marginal_chain(obs), rel=1e-9)

    def test_marginal_order_invariant(self, any_model):
        obs = [any_model.prepare(p) for p in cluster_points(any_model, 5, 1)]
        a = any_model.log_marginal_chain(obs)
        b = any_model.log_marginal_chain(obs[::-1])
        assert a == pytest.approx(b, rel=1e-9)

    def test_add_remove_roundtrip(self, any_model):
        obs = [any_model.prepare(p) for p in cluster_points(any_model, 4, 2)]
        s = any_model.stats_of(obs)
        s2 = any_model.stats_remove(any_model.stats_add(s, obs[0]), obs[0])
        assert any_model.log_marginal(s2) == pytest.approx(any_model.log_marginal(s), rel=1e-10)
        empty = any_model.stats_of([])
        one = any_model.stats_remove(any_model.stats_of(obs[:1]), obs[0])
        assert any_model.log_marginal(one) == any_model.log_marginal(empty) == 0.0

    def test_remove_from_empty(self, any_model):
        with pytest.raises(ValueError):
            any_model.stats_remove(any_model.empty_stats(), any_model.prepare(cluster_points(any_model, 1, 0)[0]))

    def test_predictive_many(self, any_model):
        pts = [any_model.prepare(p) for p in cluster_points(any_model, 7, 3)]
        stats = [any_model.stats_of(pts[:2]), any_model.stats_of(pts[2:5])]
        many = any_model.log_predictive_many(stats, pts[6])
        single = [any_model.log_predictive(s, pts[6]) for s in stats]
        np.testing.assert_allclose(many, single, rtol=1e-10)
        assert any_model.log_marginal_new(pts[6]) == pytest.approx(
            any_model.log_predictive(any_model.empty_stats(), pts[6]), rel=1e-10)

    def test_points_inside_window(self, any_model):
        for p in cluster_points(any_model, 30, 4):
            assert any_model.domain.contains(p.x)

    def test_posterior_params(self, any_model):
        obs = [any_model.prepare(p) for p in cluster_points(any_model, 5, 5)]
        m, th = any_model.sample_posterior_params(any_model.stats_of(obs), np.random.default_rng(0))
        assert np.all(np.isfinite(m))
        assert np.isfinite(any_model.log_emission(obs[0], m, th))
        roundtrip = any_model.theta_from_json(any_model.theta_to_json(th))
        assert any_model.log_emission(obs[0], m, roundtrip) == pytest.approx(any_model.log_emission(obs[0], m, th))

    def test_box_mass_whole_line(self, any_model):
        m, th = any_model.sample_prior_params(np.random.default_rng(6))
        lo = [-1e6] * any_model.domain.dim
        hi = [1e6] * any_model.domain.dim
        assert any_model.box_mass(m, th, lo, hi) == pytest.approx(1.0, abs=1e-6)


class TestGaussian:
    def test_uniform_singleton_is_window_density(self, gaussian):
        assert gaussian.log_marginal_new(gaussian.prepare(MarkedPoint([0.3, 0.4]))) == pytest.approx(0.0)
        dom = Domain([0, 0], [2, 3])
        g = GaussianModel(GaussianModelConfig(5.0, np.eye(2)), dom)
        assert g.log_marginal_new(g.prepare(MarkedPoint([1, 1]))) == pytest.approx(-math.log(6.0))

    def test_uniform_marginal_against_quadrature_1d(self):
        dom = Domain([0.0], [10.0])
        g = GaussianModel(GaussianModelConfig(4.0, [[0.5]]), dom)
        xs = [4.0, 4.5, 5.2]
        stats = g.stats_of([g.prepare(MarkedPoint([x])) for x in xs])

        def inner(s2):
            f = lambda mu: np.prod(_npdf(xs, mu, math.sqrt(s2))) / 10.0
            return _ig_pdf(s2, 2.0, 0.25) * integrate.quad(
                f, 0.0, 10.0, points=[np.mean(xs)], epsabs=0, epsrel=1e-11)[0]

        v, _ = integrate.quad(inner, 0.0, 60.0, points=[0.1, 0.5, 2.0], limit=200, epsabs=0, epsrel=1e-10)
        assert g.log_marginal(stats) == pytest.approx(math.log(v), rel=1e-6)

    def test_niw_marginal_against_quadrature_1d(self):
        dom = Domain([0.0], [10.0])
        g = GaussianModel(GaussianModelConfig(4.0, [[0.5]], niw_kappa=0.2, location="niw"), dom)
        xs = [4.0, 6.5, 5.2]
        stats = g.stats_of([g.prepare(MarkedPoint([x])) for x in xs])

        def inner(s2):
            sd = math.sqrt(s2)
            f = lambda mu: _npdf(mu, 5.0, sd / math.sqrt(0.2)) * np.prod(_npdf(xs, mu, sd))
            return _ig_pdf(s2, 2.0, 0.25) * integrate.quad(
                f, 5.0 - 40 * sd, 5.0 + 40 * sd, points=[5.0], limit=200, epsabs=0, epsrel=1e-11)[0]

        v, _ = integrate.quad(inner, 0.0, 60.0, points=[0.1, 0.5, 2.0], limit=200, epsabs=0, epsrel=1e-10)
        assert g.log_marginal(stats) == pytest.approx(math.log(v), rel=1e-6)

    def test_invwishart_moments(self):
        gen = np.random.default_rng(0)
        psi = np.array([[0.5, 0.1], [0.1, 0.3]])
        dof = 7.0
        draws = np.array([sample_invwishart(gen, dof, psi) for _ in range(20000)])
        np.testing.assert_allclose(draws.mean(0), psi / (dof - 3), rtol=0.03, atol=2e-3)

    def test_mvn_logpdf(self):
        cov = np.array([[0.3, 0.1], [0.1, 0.2]])
        x, m = np.array([0.2, -0.1]), np.array([0.0, 0.1])
        assert mvn_logpdf(x, m, cov) == pytest.approx(sps.multivariate_normal(m, cov).logpdf(x))

    def test_box_mass_monte_carlo(self, gaussian):
        m, th = np.array([0.5, 0.5]), {"cov": np.array([[0.02, 0.005], [0.005, 0.01]])}
        xs = np.random.default_rng(0).multivariate_normal(m, th["cov"], size=200000)
        inside = np.mean(np.all((xs >= [0.4, 0.3]) & (xs <= [0.7, 0.55]), axis=1))
        assert gaussian.box_mass(m, th, [0.4, 0.3], [0.7, 0.55]) == pytest.approx(inside, abs=0.005)

    def test_untruncated_can_leave(self, gaussian):
        m, th = np.array([0.0, 0.0]), {"cov": np.eye(2) * 0.04}
        pts = gaussian.sample_points(m, th, 200, np.random.default_rng(0), truncate=False)
        assert any(not gaussian.domain.contains(p.x) for p in pts)

    @pytest.mark.parametrize("kw", [dict(iw_dof=0.5, iw_scale=np.eye(2)),
                                    dict(iw_dof=5.0, iw_scale=[[1.0, 2.0], [2.0, 1.0]]),
                                    dict(iw_dof=5.0, iw_scale=np.eye(2), location="flat")])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            GaussianModelConfig(**kw)

    def test_rejects_marks(self, gaussian):
        with pytest.raises(ValueError):
            gaussian.prepare(MarkedPoint([0.1, 0.1], {"neuron": 1}))


class TestDocument:
    def test_word_predictive_against_gamma_poisson_quadrature(self, document_model):
        # one word's predictive count against integration over its Poisson rate
        m = document_model
        cfg = m.config
        gen = np.random.default_rng(1)
        mpmath.mp.dps = 30
        for trial in range(10):
            n = int(gen.integers(0, 6))
            tot = int(gen.integers(0, 15))
            c = int(gen.integers(0, 6))
            a, b = cfg.word_shape + tot, cfg.word_rate + n

            def integrand(phi):
                return (mpmath.exp(-phi) * phi ** c / mpmath.factorial(c)
                        * b ** a * phi ** (a - 1) * mpmath.exp(-b * phi) / mpmath.gamma(a))

            ref = mpmath.log(mpmath.quad(integrand, [0, 1, 10, mpmath.inf]))
            obs = m.prepare(MarkedPoint([10.0], {"author": 0, "words": {2: c}}))
            stats = m.empty_stats()
            # build stats with the requested n and word-2 total
            for j in range(n):
                words = {2: tot} if j == 0 and tot else {}
                stats = m.stats_add(stats, m.prepare(MarkedPoint([10.0], {"author": 0, "words": words})))
            if n == 0:
                tot, a = 0, cfg.word_shape
                ref = mpmath.log(mpmath.quad(
                    lambda phi: mpmath.exp(-phi) * phi ** c / mpmath.factorial(c)
                    * b ** a * phi ** (a - 1) * mpmath.exp(-b * phi) / mpmath.gamma(a), [0, 1, 10, mpmath.inf]))
            # other words contribute their zero-count terms
            others = (m.V - 1) * cfg.word_shape * math.log(b / (b + 1.0))
            got = m._log_words_pred(stats, obs) - others
            assert got == pytest.approx(float(ref), rel=1e-8)

    def test_predictive_normalizes_over_counts(self, document_model):
        # a 1-word vocabulary: summing the predictive over counts gives 1
        dom = Domain.interval(5.0)
        m = DocumentModel(DocumentModelConfig(1, 1, 0.5, word_shape=0.7, word_rate=0.4), dom)
        s = m.stats_of([m.prepare(MarkedPoint([2.0], {"author": 0, "words": {0: 3}}))])
        tot = sum(math.exp(m._log_words_pred(s, m.prepare(MarkedPoint([2.0], {"author": 0, "words": {0: c}}))))
                  for c in range(400))
        assert tot == pytest.approx(1.0, abs=1e-10)

    def test_bad_marks(self, document_model):
        for mark in (None, {"author": 7}, {"author": 0, "words": {99: 1}}):
            with pytest.raises(ValueError):
                document_model.prepare(MarkedPoint([1.0], mark))

    def test_background_marks(self, document_model):
        bm = document_model.default_background_marks()
        gen = np.random.default_rng(0)
        obs = [document_model.prepare(MarkedPoint([1.0], bm.sample(gen))) for _ in range(20)]
        assert all(np.isfinite(bm.log_density(o)) for o in obs)
        new = bm.resample(obs, gen)
        assert isinstance(new, DocumentMarks)
        assert new.group_mass(None) == 1.0
        assert 0 < new.group_mass((0, 1)) < 1


class TestSequence:
    def test_single_warp_equals_unwarped(self):
        dom = Domain.interval(10.0)
        cfg = SequenceModelConfig.random(5, 2, np.random.default_rng(3))
        a = SequenceModel(cfg, dom)
        b = SequenceModel(SequenceModelConfig.random(5, 2, np.random.default_rng(3), warp_values=[1.0]), dom)
        obs = [a.prepare(p) for p in cluster_points(a, 6, 0)]
        sa, sb = a.stats_of(obs), b.stats_of(obs)
        assert a.log_marginal(sa) == b.log_marginal(sb)
        np.testing.assert_array_equal(a.log_predictive_many([sa], obs[0]), b.log_predictive_many([sb], obs[0]))

    def test_warp_grid(self):
        g = default_warp_grid(5, 1.5)
        assert g.size == 5 and g[0] == pytest.approx(1 / 1.5) and g[-1] == pytest.approx(1.5)
        assert g[2] == pytest.approx(1.0)
        np.testing.assert_array_equal(default_warp_grid(1), [1.0])

    def test_marginal_against_enumeration(self, sequence_model):
        # brute force over (type, warp) and numerical integration over the anchor time
        m = sequence_model
        obs = [m.prepare(p) for p in cluster_points(m, 3, 9)]
        cfg = m.config
        lo, hi = m.domain.lower[0], m.domain.upper[0]
        total = 0.0
        for s in range(m.S):
            for f in range(m.F):
                def lik(t):
                    out = 1.0
                    for x, y in obs:
                        mean = t + cfg.offsets[y, s] * m.tau[f]
                        sd = cfg.widths[y, s] * math.sqrt(m.tau[f])
                        out *= cfg.neuron_probs[s, y] * sps.norm.pdf(x, mean, sd)
                    return out
                val, _ = integrate.quad(lik, -50, 60, points=[x for x, _ in obs], limit=400, epsabs=0, epsrel=1e-11)
                total += cfg.type_probs[s] / m.F * val / (hi - lo)
        assert m.log_marginal(m.stats_of(obs)) == pytest.approx(math.log(total), rel=1e-7)

    def test_resample_globals_shapes(self, sequence_model):
        m = sequence_model
        gen = np.random.default_rng(0)
        pts = cluster_points(m, 8, 1)
        obs = [m.prepare(p) for p in pts]
        mm, th = m.sample_posterior_params(m.stats_of(obs), gen)
        new = m.resample_globals([(mm, th, obs)], [], gen)
        assert new.config.neuron_probs.shape == m.config.neuron_probs.shape
        np.testing.assert_allclose(new.config.neuron_probs.sum(1), 1.0)
        assert np.all(new.config.widths > 0)
        again = m.with_globals(new.globals_json())
        np.testing.assert_allclose(again.config.offsets, new.config.offsets)

    def test_neuron_marks(self):
        nm = NeuronMarks(np.array([0.25, 0.75]))
        assert nm.log_density((0.0, 1)) == pytest.approx(math.log(0.75))
        assert nm.group_mass((0,)) == pytest.approx(0.25)
        with pytest.raises(ValueError):
            NeuronMarks(np.array([0.5, 0.6]))

    def test_bad_mark(self, sequence_model):
        with pytest.raises(ValueError):
            sequence_model.prepare(MarkedPoint([1.0], {"neuron": 99}))


class TestBackground:
    def test_density_and_rate(self):
        bg = BackgroundModel(2.0, fixed_rate=False)
        assert background_log_density(bg, MarkedPoint([0.5])) == pytest.approx(math.log(2.0))
        assert background_log_density(BackgroundModel(0.0), MarkedPoint([0.5])) == -math.inf
        gen = np.random.default_rng(0)
        rates = [resample_background_rate(bg, 10, 4.0, gen).rate for _ in range(4000)]
        assert np.mean(rates) == pytest.approx(11.0 / 5.0, rel=0.03)
        fixed = BackgroundModel(2.0, fixed_rate=True)
        assert resample_background_rate(fixed, 10, 4.0, gen) is fixed

    def test_sample_points(self):
        pts = sample_background_points(BackgroundModel(50.0), Domain.unit_cube(2), 0)
        assert 20 < len(pts) < 90

    @pytest.mark.parametrize("kw", [dict(rate=-1.0), dict(rate_prior=(0.0, 1.0))])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            BackgroundModel(**kw)
