import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nsp import _kernels

needs_numba = pytest.mark.skipif(_kernels.numba_impl is None, reason="numba not installed")
IMPLS = [_kernels.numpy_impl] + ([_kernels.numba_impl] if _kernels.numba_impl is not None else [])


@pytest.fixture(params=IMPLS, ids=lambda i: i.name)
def impl(request):
    return request.param


finite_logw = arrays(np.float64, st.integers(1, 12),
                     elements=st.one_of(st.floats(-50, 50), st.just(-np.inf)))


class TestLogCategorical:
    def test_simple(self, impl):
        logw = np.log(np.array([0.2, 0.3, 0.5]))
        assert impl.log_categorical(logw, 0.1) == 0
        assert impl.log_categorical(logw, 0.45) == 1
        assert impl.log_categorical(logw, 0.99) == 2

    def test_skips_impossible(self, impl):
        logw = np.array([-np.inf, 0.0, -np.inf])
        for u in (0.0, 0.5, 0.999999):
            assert impl.log_categorical(logw, u) == 1

    def test_all_impossible(self, impl):
        assert impl.log_categorical(np.full(3, -np.inf), 0.5) == -1

    def test_frequencies(self, impl):
        logw = np.array([0.0, np.log(3.0)])
        u = np.random.default_rng(0).random(20000)
        draws = np.array([impl.log_categorical(logw, x) for x in u])
        assert abs(draws.mean() - 0.75) < 0.015

    @needs_numba
    @settings(max_examples=200, deadline=None)
    @given(logw=finite_logw, u=st.floats(0.0, 1.0, exclude_max=True))
    def test_backends_agree(self, logw, u):
        a = _kernels.numpy_impl.log_categorical(logw, u)
        b = _kernels.numba_impl.log_categorical(logw, u)
        if a != b:
            # only allowed at a cumulative-sum tie broken by rounding
            p = np.exp(logw - logw.max())
            c = np.cumsum(p) / p.sum()
            assert np.min(np.abs(c - u)) < 1e-12
        if np.all(logw == -np.inf):
            assert a == b == -1
        else:
            assert np.isfinite(logw[a]) and np.isfinite(logw[b])


class TestUrnLabels:
    @needs_numba
    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(0, 30), join=st.floats(0.0, 5.0), new=st.floats(0.01, 5.0),
           slope=st.floats(0.0, 1.0), bg=st.floats(0.0, 3.0), seed=st.integers(0, 2**31))
    def test_backends_agree(self, n, join, new, slope, bg, seed):
        u = np.random.default_rng(seed).random((5, n))
        a = _kernels.numpy_impl.urn_labels(n, join, new, slope, bg, u)
        b = _kernels.numba_impl.urn_labels(n, join, new, slope, bg, u)
        np.testing.assert_array_equal(a, b)

    def test_first_point_opens_cluster(self, impl):
        z = impl.urn_labels(5, 1.0, 1.0, 0.0, 0.0, np.random.default_rng(0).random((20, 5)))
        assert np.all(z[:, 0] == 1)


class TestCoOccupancy:
    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 4)), min_size=1, max_size=60))
    def test_backends_match_pair_count(self, pairs):
        a = np.array([p[0] for p in pairs])
        b = np.array([p[1] for p in pairs])
        same_a = a[:, None] == a[None, :]
        same_b = b[:, None] == b[None, :]
        ref = np.mean(same_a == same_b)
        for impl in IMPLS:
            assert impl.co_occupancy(a, b, 6, 5) == pytest.approx(ref, abs=1e-12)


class TestNIWPredictive:
    def _stats(self, gen, K, D):
        ns = gen.integers(0, 20, size=K).astype(float)
        sx = np.zeros((K, D))
        sxx = np.zeros((K, D, D))
        for k in range(K):
            pts = gen.normal(size=(int(ns[k]), D)) * 0.3
            sx[k] = pts.sum(0)
            sxx[k] = pts.T @ pts
        return ns, sx, sxx

    @pytest.mark.parametrize("D", [1, 2, 3])
    def test_backends_agree(self, D):
        gen = np.random.default_rng(D)
        ns, sx, sxx = self._stats(gen, 8, D)
        x = gen.normal(size=D)
        psi = np.eye(D) * 0.2 + 0.05
        a = _kernels.numpy_impl.niw_log_predictive(ns, sx, sxx, x, 0.1, D + 2.0, psi)
        for impl in IMPLS:
            np.testing.assert_allclose(impl.niw_log_predictive(ns, sx, sxx, x, 0.1, D + 2.0, psi), a,
                                       rtol=1e-11)

    def test_matches_scipy_t(self):
        from scipy import stats as sps

        gen = np.random.default_rng(5)
        D = 2
        ns, sx, sxx = self._stats(gen, 4, D)
        x = gen.normal(size=D)
        kappa0, nu0, psi = 0.5, 4.0, np.eye(D) * 0.3
        out = _kernels.niw_log_predictive(ns, sx, sxx, x, kappa0, nu0, psi)
        for k in range(4):
            kn, nun = kappa0 + ns[k], nu0 + ns[k]
            mu = sx[k] / kn
            psin = psi + sxx[k] - kn * np.outer(mu, mu)
            dof = nun - D + 1
            ref = sps.multivariate_t(mu, psin * (kn + 1) / (kn * dof), df=dof).logpdf(x)
            assert out[k] == pytest.approx(ref, rel=1e-10)


def test_env_flag_selects_numpy():
    code = "from nsp import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, NSP_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["NSP_DISABLE_NUMBA"] = ""
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == ("numba" if _kernels.HAVE_NUMBA else "numpy")
