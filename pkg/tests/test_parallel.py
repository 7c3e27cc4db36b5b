import warnings

import numpy as np
import pytest

from nsp.domain import Domain, GammaWeightPrior, MarkedPoint, RngStream
from nsp.generate import sample_nsp
from nsp.gibbs import AnnealSchedule, SamplerConfig, run_chain
from nsp.models import BackgroundModel, GaussianModel, GaussianModelConfig
from nsp.parallel import ShardPlan, boundary_split_count, merged_labels, run_parallel_chain


def test_plan_validation(square):
    with pytest.raises(ValueError):
        ShardPlan(0, 0, [0.0])
    with pytest.raises(ValueError):
        ShardPlan(2, 0, [0.0, 1.0])
    with pytest.raises(ValueError):
        ShardPlan(2, 0, [0.0, 0.6, 0.5])
    with pytest.raises(ValueError):
        ShardPlan.equal(square, 2, axis=2)
    with pytest.raises(ValueError, match="does not cover"):
        ShardPlan(2, 0, [0.0, 0.5, 0.9]).check_covers(square)


def test_plan_geometry(square):
    plan = ShardPlan.equal(square, 4, axis=1)
    assert plan.boundaries == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert plan.shard_of([0.9, 0.0]) == 0
    assert plan.shard_of([0.0, 0.25]) == 1
    assert plan.shard_of([0.0, 1.0]) == 3
    assert plan.shard_measure(square, 2) == pytest.approx(0.25)
    assert ShardPlan(**{k: v for k, v in plan.to_json().items()}) == plan


def test_merged_labels_keep_shards_apart(gaussian, square, prior):
    from nsp.gibbs import ChainState

    pts = [MarkedPoint([0.1, 0.1]), MarkedPoint([0.9, 0.1]), MarkedPoint([0.12, 0.1])]
    a = ChainState([pts[0], pts[2]], gaussian, prior, BackgroundModel(0.0), square, z=[1, 1])
    b = ChainState([pts[1]], gaussian, prior, BackgroundModel(0.0), square, z=[1])
    z = merged_labels([a, b], [np.array([0, 2]), np.array([1])], 3)
    assert z.tolist() == [1, 2, 1]


def fit_args(gaussian, square):
    prior = GammaWeightPrior(5.0, 0.5, 4.0)
    ds = sample_nsp(gaussian, prior, square, RngStream(21))
    return ds, prior


def test_single_shard_replays_sequential(gaussian, square):
    ds, prior = fit_args(gaussian, square)
    cfg = SamplerConfig(nu_prior=(2.0, 0.5))
    bg = BackgroundModel(1.0, fixed_rate=False)
    seq = run_chain(ds, gaussian, prior, bg, square, AnnealSchedule(2, 5, 10.0), 15, RngStream(3), cfg)
    par = run_parallel_chain(ds, gaussian, prior, bg, square, ShardPlan.equal(square, 1),
                             AnnealSchedule(2, 5, 10.0), 15, RngStream(3), cfg)
    assert par.samples == seq.samples
    assert par.meta == seq.meta


def test_worker_count_does_not_change_result(gaussian, square):
    ds, prior = fit_args(gaussian, square)
    plan = ShardPlan.equal(square, 3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        a = run_parallel_chain(ds, gaussian, prior, BackgroundModel(0.0), square, plan,
                               AnnealSchedule.none(), 10, 5, max_workers=1)
        b = run_parallel_chain(ds, gaussian, prior, BackgroundModel(0.0), square, plan,
                               AnnealSchedule.none(), 10, 5, max_workers=3)
    assert a.samples == b.samples
    assert a.meta["shards"]["n_shards"] == 3
    assert a.meta["rescale_lbar"] is False


def test_wide_clusters_warn(gaussian, square):
    ds, prior = fit_args(gaussian, square)
    with pytest.warns(RuntimeWarning, match="shard width"):
        run_parallel_chain(ds, gaussian, prior, BackgroundModel(0.0), square, ShardPlan.equal(square, 8),
                           AnnealSchedule.none(), 2, 0)


def test_outside_point_rejected(gaussian, square, prior):
    with pytest.raises(ValueError):
        run_parallel_chain([MarkedPoint([2.0, 0.0])], gaussian, prior, BackgroundModel(0.0), square,
                           ShardPlan.equal(square, 1), AnnealSchedule.none(), 1, 0)


def separated_data(n_per=15, seed=0):
    # one tight cluster in the middle of each of four vertical slabs
    gen = np.random.default_rng(seed)
    pts = []
    for cx in (0.125, 0.375, 0.625, 0.875):
        for xy in gen.normal([cx, 0.5], 0.01, size=(n_per, 2)):
            pts.append(MarkedPoint(xy))
    return pts


def test_sharded_count_posterior_on_separated_data():
    dom = Domain.unit_cube(2)
    model = GaussianModel(GaussianModelConfig(10.0, np.eye(2) * 1e-3), dom)
    prior = GammaWeightPrior(10.0, 0.5, 6.0)
    pts = separated_data()
    cfg = SamplerConfig(record_latents=False, record_joint=False)
    one = run_parallel_chain(pts, model, prior, BackgroundModel(0.0), dom, ShardPlan.equal(dom, 1),
                             AnnealSchedule(3, 10, 20.0), 400, 1, cfg)
    four = run_parallel_chain(pts, model, prior, BackgroundModel(0.0), dom, ShardPlan.equal(dom, 4),
                              AnnealSchedule(3, 10, 20.0), 400, 1, cfg)
    h1 = np.bincount(one.n_clusters, minlength=12)[:12] / len(one)
    h4 = np.bincount(four.n_clusters, minlength=12)[:12] / len(four)
    assert 0.5 * np.abs(h1 - h4).sum() < 0.1
    assert boundary_split_count(four.labels[-1], pts, ShardPlan.equal(dom, 4)) == 0


def test_rescale_flag_changes_new_cluster_weight(gaussian, square):
    ds, prior = fit_args(gaussian, square)
    seen = {}

    def grab(sweep, states):
        seen["scales"] = [s.lbar_scale for s in states]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rec = run_parallel_chain(ds, gaussian, prior, BackgroundModel(0.0), square,
                                 ShardPlan(2, 0, [0.0, 0.25, 1.0]), AnnealSchedule.none(), 1, 0,
                                 rescale_lbar=True, callback=grab)
    assert seen["scales"] == pytest.approx([0.25, 0.75])
    assert rec.meta["rescale_lbar"] is True


def test_boundary_split_count(square):
    pts = [MarkedPoint([0.45, 0.5]), MarkedPoint([0.55, 0.5]), MarkedPoint([0.1, 0.1])]
    plan = ShardPlan.equal(square, 2)
    assert boundary_split_count([1, 1, 2], pts, plan) == 1
    assert boundary_split_count([1, 2, 0], pts, plan) == 0
