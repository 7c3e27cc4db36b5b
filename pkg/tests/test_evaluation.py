import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsp.domain import Domain, GammaWeightPrior, MarkedPoint
from nsp.evaluation import (
    ClusterCountSummary,
    MaskRegion,
    SpeckledMask,
    co_occupancy_accuracy,
    compare_cluster_count,
    empirical_partition_frequencies,
    enumerate_posterior,
    heldout_predictive_ll,
    mark_group,
    masked_measure_for_fit,
    posterior_co_occupancy,
    total_variation,
)
from nsp.gibbs import ChainRecord
from nsp.models import BackgroundModel


def test_co_occupancy_small_example():
    assert co_occupancy_accuracy([1, 1, 2], [1, 2, 2]) == pytest.approx(5 / 9)
    assert co_occupancy_accuracy([0, 1, 1], [0, 2, 2]) == 1.0


def test_co_occupancy_fast_matches_reference():
    gen = np.random.default_rng(0)
    for _ in range(100):
        n = int(gen.integers(1, 40))
        a = gen.integers(0, 5, n)
        b = gen.integers(0, 7, n)
        assert co_occupancy_accuracy(a, b) == pytest.approx(co_occupancy_accuracy(a, b, reference=True), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=20), st.data())
def test_co_occupancy_label_permutation_invariant(z, data):
    z = np.array(z)
    perm = np.array(data.draw(st.permutations(range(5))))
    ref = np.array(data.draw(st.lists(st.integers(0, 3), min_size=len(z), max_size=len(z))))
    assert co_occupancy_accuracy(perm[z], ref) == pytest.approx(co_occupancy_accuracy(z, ref))
    assert co_occupancy_accuracy(z, ref) == pytest.approx(co_occupancy_accuracy(ref, z))


def test_co_occupancy_bad_input():
    with pytest.raises(ValueError):
        co_occupancy_accuracy([1, 2], [1])
    with pytest.raises(ValueError):
        co_occupancy_accuracy([], [])


def test_compare_cluster_count():
    s = compare_cluster_count([[3, 4, 4, 5], [4, 4]], truth=4)
    assert isinstance(s, ClusterCountSummary)
    assert s.mean == pytest.approx(4.0) and s.bias == pytest.approx(0.0) and s.covered
    assert compare_cluster_count([[3, 3]], truth=5).covered is False
    assert compare_cluster_count([[3, 3]]).truth is None
    assert set(s.to_row()) == {"mean", "lower", "upper", "truth", "bias", "covered"}
    with pytest.raises(ValueError):
        compare_cluster_count([[]])


def test_posterior_co_occupancy():
    rec = ChainRecord(samples=[{"z": [1, 1, 2], "n_clusters": 2}, {"z": [1, 2, 2], "n_clusters": 2}])
    assert posterior_co_occupancy(rec, [1, 1, 2]) == pytest.approx((1 + 5 / 9) / 2)
    with pytest.raises(ValueError):
        posterior_co_occupancy(ChainRecord(), [1])


class TestMask:
    def test_validation(self, square):
        with pytest.raises(ValueError, match="overlap"):
            SpeckledMask([MaskRegion((0, 0), (0.5, 1)), MaskRegion((0.4, 0), (0.6, 1))], square)
        with pytest.raises(ValueError):
            SpeckledMask([MaskRegion((0, 0), (1.5, 1))], square)
        with pytest.raises(ValueError):
            SpeckledMask([MaskRegion((0.5, 0), (0.5, 1))], square)
        with pytest.raises(ValueError):
            SpeckledMask.random(square, 20, 0.1, 0)

    def test_random_roundtrip(self, tmp_path, square):
        m = SpeckledMask.random(square, 3, 0.1, 4)
        assert m.total_measure() == pytest.approx(0.3)
        assert m.masked_fraction() == pytest.approx(0.3)
        m.save(tmp_path / "m.json")
        back = SpeckledMask.load(tmp_path / "m.json", square)
        assert back.to_json() == m.to_json()
        pts = [MarkedPoint(x) for x in np.random.default_rng(0).random((200, 2))]
        np.testing.assert_array_equal(m.split(pts), back.split(pts))
        assert 0.15 < m.split(pts).mean() < 0.45

    def test_grouped(self):
        dom = Domain.interval(10.0)
        m = SpeckledMask.random(dom, 2, 1.0, 0, groups=[0, 2])
        assert m.grouped
        assert masked_measure_for_fit(m) == 0.0
        r = m.regions[0]
        inside = MarkedPoint([0.5 * (r.lower[0] + r.upper[0])], {"neuron": r.group[0]})
        other = MarkedPoint(inside.x, {"neuron": 1})
        assert m.contains(inside, mark_group) and not m.contains(other, mark_group)
        back = SpeckledMask.from_json(m.to_json(), dom)
        assert back.to_json() == m.to_json()

    def test_mark_group(self):
        assert mark_group(MarkedPoint([0.0], {"author": 3, "words": {}})) == 3
        assert mark_group(MarkedPoint([0.0])) is None


def test_heldout_pure_background_closed_form(square, gaussian):
    rate = 7.0
    mask = SpeckledMask([MaskRegion((0.0, 0.0), (0.2, 1.0)), MaskRegion((0.5, 0.0), (0.8, 1.0))], square)
    pts = [MarkedPoint(x) for x in np.random.default_rng(1).random((40, 2))]
    rec = ChainRecord(samples=[{"z": [], "n_clusters": 0, "background_rate": rate, "latents": []}] * 3)
    out = heldout_predictive_ll(rec, pts, mask, gaussian, BackgroundModel(rate))
    n_h = int(mask.split(pts).sum())
    expect = -rate * 0.5 + n_h * math.log(rate)
    assert out["n_heldout"] == n_h
    assert out["pooled_ll"] == pytest.approx(expect)
    assert out["ll_per_point"] == pytest.approx(expect / n_h)
    assert out["masked_measure"] == pytest.approx(0.5)


def test_heldout_cluster_intensity(square, gaussian):
    # one latent event: intensity w N(x; m, S) inside the mask
    from scipy import stats as sps

    cov = np.eye(2) * 0.01
    lat = {"m": [0.3, 0.5], "w": 12.0, "theta": gaussian.theta_to_json({"cov": cov})}
    rec = ChainRecord(samples=[{"z": [], "n_clusters": 1, "background_rate": 0.0, "latents": [lat]}])
    mask = SpeckledMask([MaskRegion((0.2, 0.0), (0.4, 1.0))], square)
    pts = [MarkedPoint([0.3, 0.45]), MarkedPoint([0.25, 0.6]), MarkedPoint([0.9, 0.9])]
    out = heldout_predictive_ll(rec, pts, mask, gaussian, BackgroundModel(0.0))
    dens = sps.multivariate_normal([0.3, 0.5], cov)
    mass = 12.0 * (dens.cdf([0.4, 1.0]) - dens.cdf([0.2, 1.0]) - dens.cdf([0.4, 0.0]) + dens.cdf([0.2, 0.0]))
    expect = sum(math.log(12.0) + dens.logpdf(p.x) for p in pts[:2]) - mass
    assert out["pooled_ll"] == pytest.approx(expect, rel=1e-6)


def test_heldout_errors(square, gaussian):
    with pytest.raises(ValueError):
        heldout_predictive_ll(ChainRecord(samples=[{}]), [], SpeckledMask([], square), gaussian, BackgroundModel(0.0))
    with pytest.raises(ValueError):
        heldout_predictive_ll(ChainRecord(), [], SpeckledMask.random(square, 1, 0.1, 0), gaussian,
                              BackgroundModel(0.0))


class TestEnumeration:
    def test_two_points_dpmm_without_background(self, square):
        from helpers import PointMassModel

        # with flat marginals the DPMM posterior is the CRP: p(together) = 1/(1+gamma)
        pts = [MarkedPoint([0.1, 0.1]), MarkedPoint([0.9, 0.9])]
        post = enumerate_posterior(pts, PointMassModel(square), GammaWeightPrior(1.0, 1.0, 1.0),
                                   BackgroundModel(0.0), square, "dpmm-limit", dpmm_gamma=2.0)
        assert post[(1, 1)] == pytest.approx(1 / 3)

    def test_two_points_nsp_closed_form(self, square):
        from helpers import PointMassModel

        prior = GammaWeightPrior(2.0, 1.0, 3.0)
        pts = [MarkedPoint([0.1, 0.1]), MarkedPoint([0.9, 0.9])]
        post = enumerate_posterior(pts, PointMassModel(square), prior, BackgroundModel(0.0), square)
        # together: V_{2,1}(alpha)_2 ; apart: V_{2,2} alpha^2 ; ratio uses L q^alpha
        lq = prior.lbar(square) * (prior.beta / (1 + prior.beta)) ** prior.alpha
        together = prior.alpha * (prior.alpha + 1)
        apart = prior.alpha ** 2 * lq
        assert post[(1, 1)] == pytest.approx(together / (together + apart))

    def test_sums_to_one_and_background_keys(self, square, gaussian, prior):
        pts = [MarkedPoint([0.1, 0.1]), MarkedPoint([0.12, 0.1]), MarkedPoint([0.8, 0.8])]
        post = enumerate_posterior(pts, gaussian, prior, BackgroundModel(2.0), square)
        assert sum(post.values()) == pytest.approx(1.0)
        assert len(post) == 15
        assert (0, 0, 0) in post

    def test_refuses_large(self, square, gaussian, prior):
        with pytest.raises(ValueError):
            enumerate_posterior([MarkedPoint([0.1, 0.1])] * 4, gaussian, prior, BackgroundModel(0.0), square)


def test_tv_and_frequencies():
    f = empirical_partition_frequencies([[2, 2, 1], [1, 1, 2], [1, 2, 3], [0, 1, 1]])
    assert f == {(1, 1, 2): 0.5, (1, 2, 3): 0.25, (0, 1, 1): 0.25}
    assert total_variation(f, {(1, 1, 2): 1.0}) == pytest.approx(0.5)
    assert total_variation(f, f) == 0.0
