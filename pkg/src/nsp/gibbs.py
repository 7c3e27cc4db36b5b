"""Collapsed Gibbs sampling over NSP partitions with a background cluster.

One sweep:

1. reassign every point to the background, an existing cluster or a new
   cluster with latent events integrated out
2. update the background rate
3. draw (m_k, theta_k, w_k) for each occupied cluster
4. optionally: number of empty latent events, their weights, nu_bar, beta,
   model globals and background marks

Annealing tempers the weight prior Ga(alpha/T, beta/T), which keeps the mean
weight and multiplies its variance by T.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .domain import Domain, GammaWeightPrior, LatentEvent, MarkedPoint, RngStream, as_generator
from .models.base import BackgroundModel, ClusterModel, NoMarks
from .partitions import (
    Partition,
    VCoefficientTable,
    canonical_labels,
    log_dpmm_limit_with_background,
    log_eppf_with_background,
)

log = logging.getLogger(__name__)

MODES = ("nsp", "dpmm-limit")


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric cooling from ``initial_temperature`` to 1 over ``stages`` stages.

    The last stage always runs at temperature exactly 1.
    """

    stages: int = 20
    sweeps_per_stage: int = 100
    initial_temperature: float = 500.0

    def __post_init__(self):
        if self.stages < 0 or self.sweeps_per_stage < 0:
            raise ValueError("stages and sweeps_per_stage must be non-negative")
        if not self.initial_temperature >= 1.0:
            raise ValueError("initial temperature must be >= 1")

    @classmethod
    def none(cls) -> "AnnealSchedule":
        return cls(0, 0, 1.0)

    def temperatures(self) -> np.ndarray:
        if self.stages == 0:
            return np.zeros(0)
        if self.stages == 1:
            return np.ones(1)
        t = np.geomspace(self.initial_temperature, 1.0, self.stages)
        t[-1] = 1.0
        return t

    @property
    def n_sweeps(self) -> int:
        return self.stages * self.sweeps_per_stage

    def to_json(self) -> dict:
        return {"stages": self.stages, "sweeps_per_stage": self.sweeps_per_stage,
                "initial_temperature": self.initial_temperature}


@dataclass(frozen=True)
class SamplerConfig:
    """Sampler switches.

    ``nu_prior`` / ``beta_prior`` are (shape, rate) gamma hyperpriors; leaving
    one at ``None`` keeps that quantity fixed. ``masked_measure`` is the
    measure of held-out regions removed from the window.
    """

    mode: str = "nsp"
    dpmm_gamma: float = 1.0
    random_scan: bool = False
    resample_background: bool = True
    resample_latents: bool = True
    resample_hyper: bool = True
    resample_globals: bool = True
    nu_prior: tuple | None = None
    beta_prior: tuple | None = None
    warmup_fraction: float = 0.5
    audit_every: int = 100
    masked_measure: float = 0.0
    record_latents: bool = True
    record_joint: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown sampler mode {self.mode!r}")
        if not self.dpmm_gamma > 0:
            raise ValueError("dpmm_gamma must be positive")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must lie in [0, 1)")
        for pr in (self.nu_prior, self.beta_prior):
            if pr is not None and not (pr[0] > 0 and pr[1] > 0):
                raise ValueError("gamma hyperpriors need positive parameters")
        if self.masked_measure < 0:
            raise ValueError("masked_measure must be non-negative")


class ChainState:
    """Mutable sampler state over a fixed set of points.

    Clusters live in a slab keyed by integer ids that are never reused; ``z``
    holds slab ids with 0 for the background.
    """

    def __init__(self, points: Sequence[MarkedPoint], model: ClusterModel, prior: GammaWeightPrior,
                 background: BackgroundModel, domain: Domain, config: SamplerConfig | None = None,
                 z: Sequence[int] | None = None, lbar_scale: float = 1.0):
        self.config = config or SamplerConfig()
        self.points = list(points)
        self.model = model
        self.obs = [model.prepare(p) for p in self.points]
        self.prior = prior
        self.background = background
        self.domain = domain
        self.measure = domain.measure() - self.config.masked_measure
        if not self.measure > 0:
            raise ValueError("masked measure leaves no observed window")
        self.lbar_scale = lbar_scale
        self.temperature = 1.0
        self.table = VCoefficientTable(prior, prior.lbar(domain))
        self.stats: dict[int, object] = {}
        self.members: dict[int, set] = {}
        self.next_id = 1
        self.latents: dict[int, LatentEvent] = {}
        self.empty_weights = np.zeros(0)
        self.n_empty = 0
        n = len(self.points)
        self.z = np.zeros(n, dtype=np.int64)
        self._refresh_point_terms()
        if z is not None:
            self.set_labels(z)

    # -- bookkeeping ---------------------------------------------------------
    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_clusters(self) -> int:
        return len(self.stats)

    @property
    def n_background(self) -> int:
        return int(np.sum(self.z == 0))

    @property
    def background_active(self) -> bool:
        return self.background.rate > 0 or not self.background.fixed_rate

    def effective_prior(self) -> GammaWeightPrior:
        if self.temperature == 1.0:
            return self.prior
        return self.prior.tempered(self.temperature)

    def set_labels(self, z):
        z = np.asarray(z, dtype=np.int64)
        if z.shape != (self.n_points,):
            raise ValueError("label vector length differs from the number of points")
        self.stats.clear()
        self.members.clear()
        self.z = np.zeros(self.n_points, dtype=np.int64)
        remap: dict[int, int] = {}
        for i, lab in enumerate(z.tolist()):
            if lab == 0:
                continue
            if lab not in remap:
                remap[lab] = self._new_cluster()
            self._insert(i, remap[lab])

    def _new_cluster(self) -> int:
        k = self.next_id
        self.next_id += 1
        self.stats[k] = self.model.empty_stats()
        self.members[k] = set()
        return k

    def _insert(self, i: int, k: int):
        self.z[i] = k
        if k:
            self.stats[k] = self.model.stats_add(self.stats[k], self.obs[i])
            self.members[k].add(i)

    def _remove(self, i: int):
        k = int(self.z[i])
        if k:
            self.members[k].discard(i)
            if not self.members[k]:
                del self.stats[k]
                del self.members[k]
                self.latents.pop(k, None)
            else:
                self.stats[k] = self.model.stats_remove(self.stats[k], self.obs[i])
        self.z[i] = -1

    def _refresh_point_terms(self):
        # per-point terms that only change when the model or background marks change
        self.log_new = np.array([self.model.log_marginal_new(o) for o in self.obs])
        self._marks = self.background.marks
        self.log_marks = self._background_marks()

    def _background_marks(self) -> np.ndarray:
        # the background only emits inside the window
        out = np.array([self._marks.log_density(o) for o in self.obs], dtype=float)
        inside = np.array([self.domain.contains(p.x) for p in self.points], dtype=bool)
        out[~inside] = -np.inf
        return out

    def set_background(self, background: BackgroundModel):
        self.background = background
        if background.marks is not self._marks:
            self._marks = background.marks
            self.log_marks = self._background_marks()

    def set_model(self, model: ClusterModel):
        self.model = model
        self.rebuild_stats()

    def rebuild_stats(self):
        """Recompute every cluster's statistics and per-point terms (after globals change)."""
        self.obs = [self.model.prepare(p) for p in self.points]
        for k, mem in self.members.items():
            self.stats[k] = self.model.stats_of([self.obs[i] for i in sorted(mem)])
        self._refresh_point_terms()

    def audit(self, rtol: float = 1e-8):
        """Check cached statistics against a fresh fold; raises on mismatch."""
        seen = np.zeros(self.n_points, dtype=np.int64)
        for k, mem in self.members.items():
            if not mem:
                raise AssertionError(f"cluster {k} is empty")
            for i in mem:
                if self.z[i] != k:
                    raise AssertionError(f"point {i} listed in cluster {k} but labelled {self.z[i]}")
                seen[i] += 1
            fresh = self.model.stats_of([self.obs[i] for i in sorted(mem)])
            if not _stats_close(fresh, self.stats[k], rtol):
                raise AssertionError(f"cached statistics of cluster {k} drifted")
        seen[self.z == 0] += 1
        if np.any(seen != 1):
            raise AssertionError("points not covered exactly once")

    def labels(self) -> np.ndarray:
        return canonical_labels(self.z)

    def partition(self) -> Partition:
        return Partition.from_labels(self.z)

    def cluster_order(self) -> list[int]:
        """Slab ids in canonical order (by smallest member)."""
        return sorted(self.members, key=lambda k: min(self.members[k]))

    def set_prior(self, prior: GammaWeightPrior):
        self.prior = prior
        self.table.invalidate(prior, prior.lbar(self.domain))


def _stats_close(a, b, rtol) -> bool:
    for f in dataclasses.fields(a):
        va, vb = getattr(a, f.name), getattr(b, f.name)
        if isinstance(va, dict):
            if va != vb:
                return False
        elif not np.allclose(va, vb, rtol=rtol, atol=1e-9):
            return False
    return True


# ---------------------------------------------------------------------------
# step 1


def assignment_log_weights(state: ChainState, i: int):
    """(slab ids, log weights) for point ``i`` once removed; id 0 = background, -1 = new."""
    cfg = state.config
    model = state.model
    obs = state.obs[i]
    prior = state.effective_prior()
    ids = list(state.stats.keys())
    logw = np.empty(len(ids) + 2)
    # background
    if state.background.rate > 0:
        logw[0] = math.log(state.background.rate) + state.log_marks[i] + math.log1p(prior.beta)
    else:
        logw[0] = -math.inf
    if ids:
        stats = [state.stats[k] for k in ids]
        sizes = np.array([s.size for s in stats], dtype=float)
        pred = model.log_predictive_many(stats, obs)
        if cfg.mode == "nsp":
            logw[1:-1] = np.log(sizes + prior.alpha) + pred
        else:
            logw[1:-1] = np.log(sizes) + pred
    lbar = state.table.lbar_value * state.lbar_scale
    if cfg.mode == "nsp":
        if lbar > 0:
            logw[-1] = (math.log(prior.alpha) + math.log(lbar) + prior.alpha * prior.log_q
                        + state.log_new[i])
        else:
            logw[-1] = -math.inf
    else:
        logw[-1] = math.log(cfg.dpmm_gamma) + state.log_new[i]
    return [0] + ids + [-1], logw


def gibbs_sweep_assignments(state: ChainState, rng, indices: Sequence[int] | None = None) -> ChainState:
    gen = as_generator(rng)
    order = np.arange(state.n_points) if indices is None else np.asarray(indices, dtype=np.int64)
    if state.config.random_scan:
        order = gen.permutation(order)
    for i in order.tolist():
        state._remove(i)
        ids, logw = assignment_log_weights(state, i)
        if math.isnan(logw.sum()):
            raise FloatingPointError(f"NaN assignment weight for point {i}: {logw}")
        j = _kernels.log_categorical(logw, gen.random())
        if j < 0:
            raise FloatingPointError(f"no admissible assignment for point {i}")
        k = ids[j]
        if k == -1:
            k = state._new_cluster()
        state._insert(i, k)
    return state


# ---------------------------------------------------------------------------
# steps 2-4


def resample_background(states: Sequence[ChainState], rng):
    """Background rate from the pooled background count, marks from the pooled background points."""
    s0 = states[0]
    bg = s0.background
    if bg.fixed_rate and bg.rate == 0:
        return bg
    gen = as_generator(rng)
    n0 = sum(s.n_background for s in states)
    if not bg.fixed_rate:
        a0, b0 = bg.rate_prior
        bg = bg.with_rate(gen.gamma(a0 + n0, 1.0 / (b0 + s0.measure)))
    return bg


def resample_latent_events(states: Sequence[ChainState], rng):
    """(m_k, theta_k) and w_k ~ Ga(alpha + |C_k|, beta + 1) per occupied cluster."""
    gen = as_generator(rng)
    for st in states:
        prior = st.effective_prior()
        st.latents = {}
        for k in st.cluster_order():
            stats = st.stats[k]
            m, theta = st.model.sample_posterior_params(stats, gen)
            w = gen.gamma(prior.alpha + stats.size, 1.0 / (prior.beta + 1.0))
            st.latents[k] = LatentEvent(m, float(w), theta)


def resample_hyperparameters(states: Sequence[ChainState], rng):
    """Empty clusters, nu_bar, beta, model globals and background marks.

    Returns the new (prior, model, background marks) without touching states.
    """
    s0 = states[0]
    cfg = s0.config
    gen = as_generator(rng)
    prior = s0.prior
    eff = s0.effective_prior()
    K = sum(s.n_clusters for s in states)
    n_empty, empty_w = 0, np.zeros(0)
    if cfg.mode == "nsp":
        lbar = prior.lbar(s0.domain)
        n_empty = int(gen.poisson(lbar * math.exp(eff.alpha * eff.log_q))) if lbar > 0 else 0
        L = K + n_empty
        if cfg.nu_prior is not None:
            a_nu, b_nu = cfg.nu_prior
            prior = prior.with_(nu_bar=gen.gamma(a_nu + L, 1.0 / (b_nu + s0.domain.measure())))
        empty_w = gen.gamma(eff.alpha, 1.0 / (eff.beta + 1.0), size=n_empty)
        if cfg.beta_prior is not None and s0.temperature == 1.0:
            a_b, b_b = cfg.beta_prior
            total_w = float(empty_w.sum()) + sum(
                lat.w for s in states for lat in s.latents.values())
            prior = prior.with_(beta=gen.gamma(a_b + L * prior.alpha, 1.0 / (b_b + total_w)))
    model = s0.model
    marks = s0.background.marks
    if cfg.resample_globals:
        clusters = []
        for s in states:
            for k in s.cluster_order():
                lat = s.latents.get(k)
                if lat is None:
                    continue
                clusters.append((np.asarray(lat.m), lat.theta, [s.obs[i] for i in sorted(s.members[k])]))
        bg_obs = [s.obs[i] for s in states for i in np.nonzero(s.z == 0)[0].tolist()]
        model = model.resample_globals(clusters, bg_obs, gen)
        if s0.background_active:
            marks = marks.resample(bg_obs, gen)
    return prior, model, marks, n_empty, empty_w


def broadcast(states: Sequence[ChainState], prior, model, background):
    for s in states:
        if prior is not s.prior:
            s.set_prior(prior)
        s.set_background(background)
        if model is not s.model:
            s.set_model(model)


# ---------------------------------------------------------------------------
# densities


def _joint(z, stats, bg_marks, model, prior, table, background, measure, config, active) -> float:
    part = Partition.from_labels(z)
    w0 = background.rate * measure if active else 0.0
    if config.mode == "nsp":
        out = log_eppf_with_background(part, table, w0)
    else:
        out = log_dpmm_limit_with_background(part, config.dpmm_gamma, w0, prior.beta)
    for st in stats:
        out += model.log_marginal(st)
    log_meas = math.log(measure)
    for i in np.nonzero(np.asarray(z) == 0)[0].tolist():
        out += bg_marks[i] - log_meas
    return float(out)


def joint_log_density(state: ChainState) -> float:
    """log p(N, C0, C, data | hyperparameters) with latent events integrated out.

    Partition term (with the background block) plus cluster marginals plus,
    for each background point, log(mark density / |X|). The background
    normalizer e^{-w0} sits inside the partition term.
    """
    prior = state.effective_prior()
    table = state.table if prior is state.prior else VCoefficientTable(prior, state.table.lbar_value)
    return _joint(state.z, state.stats.values(), state.log_marks, state.model, prior, table,
                  state.background, state.measure, state.config, state.background_active)


def sharded_joint_log_density(states: Sequence[ChainState]) -> float:
    """Joint density of the merged partition over all shards."""
    if len(states) == 1:
        return joint_log_density(states[0])
    s0 = states[0]
    z, offset = [], 0
    for s in states:
        zz = s.z.copy()
        zz[zz > 0] += offset
        offset += s.next_id
        z.extend(zz.tolist())
    prior = s0.effective_prior()
    table = VCoefficientTable(prior, prior.lbar(s0.domain))
    stats = [st for s in states for st in s.stats.values()]
    marks = np.concatenate([s.log_marks for s in states])
    return _joint(z, stats, marks, s0.model, prior, table, s0.background, s0.measure, s0.config,
                  s0.background_active)


# ---------------------------------------------------------------------------
# records


@dataclass
class ChainRecord:
    samples: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    @property
    def n_clusters(self) -> np.ndarray:
        return np.array([s["n_clusters"] for s in self.samples])

    @property
    def labels(self) -> np.ndarray:
        return np.array([s["z"] for s in self.samples], dtype=np.int64)

    def column(self, name) -> np.ndarray:
        return np.array([s[name] for s in self.samples])

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            fh.write(json.dumps({"meta": self.meta}) + "\n")
            for s in self.samples:
                fh.write(json.dumps(s) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "ChainRecord":
        rec = cls()
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if "meta" in obj and len(obj) == 1:
                    rec.meta = obj["meta"]
                else:
                    rec.samples.append(obj)
        return rec

    def write_summary_csv(self, path):
        cols = ["sweep", "n_clusters", "log_joint", "background_rate", "nu_bar", "beta"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for s in self.samples:
                w.writerow([s[c] for c in cols])


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def make_sample(states: Sequence[ChainState], sweep: int, n_empty: int, labels=None) -> dict:
    s0 = states[0]
    z = s0.labels() if labels is None else labels
    rec = {
        "sweep": int(sweep),
        "z": [int(v) for v in z],
        "n_clusters": int(sum(s.n_clusters for s in states)),
        "n_background": int(sum(s.n_background for s in states)),
        "log_joint": sharded_joint_log_density(states) if s0.config.record_joint else float("nan"),
        "background_rate": float(s0.background.rate),
        "nu_bar": float(s0.prior.nu_bar),
        "alpha": float(s0.prior.alpha),
        "beta": float(s0.prior.beta),
        "n_empty": int(n_empty),
        "temperature": float(s0.temperature),
    }
    if s0.config.record_latents:
        lats = []
        for s in states:
            for k in s.cluster_order():
                lat = s.latents.get(k)
                if lat is not None:
                    lats.append({"m": list(lat.m), "w": lat.w, "theta": _jsonable(s.model.theta_to_json(lat.theta))})
        rec["latents"] = lats
        g = s0.model.globals_json()
        if g:
            rec["globals"] = _jsonable(g)
        if not isinstance(s0.background.marks, NoMarks):
            rec["background_marks"] = _jsonable(s0.background.marks.to_json())
    return rec


# ---------------------------------------------------------------------------
# driver


def chain_streams(rng: RngStream | int) -> dict:
    base = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    return {"assign": base.child("assign"), "global": base.child("global")}


def n_total_sweeps(schedule: AnnealSchedule, n_samples: int, warmup_fraction: float) -> tuple[int, int]:
    """(post-anneal sweeps, warmup sweeps) so that ``n_samples`` are kept."""
    post = int(math.ceil(n_samples / (1.0 - warmup_fraction)))
    return post, post - n_samples


def global_step(states: Sequence[ChainState], gen) -> int:
    """Steps 2-4 on a list of shard states sharing globals. Returns E."""
    s0 = states[0]
    cfg = s0.config
    background = s0.background
    if cfg.resample_background and s0.background_active:
        background = resample_background(states, gen)
        for s in states:
            s.set_background(background)
    if cfg.resample_latents or cfg.resample_hyper:
        resample_latent_events(states, gen)
    n_empty = 0
    if cfg.resample_hyper:
        prior, model, marks, n_empty, empty_w = resample_hyperparameters(states, gen)
        for s in states:
            s.n_empty = n_empty
            s.empty_weights = empty_w
        if marks is not background.marks:
            background = background.with_marks(marks)
        broadcast(states, prior, model, background)
    return n_empty


def run_chain(dataset, model: ClusterModel, prior: GammaWeightPrior, background: BackgroundModel,
              domain: Domain, schedule: AnnealSchedule | None = None, n_samples: int = 1000,
              rng: RngStream | int = 0, config: SamplerConfig | None = None,
              init_labels=None, callback=None) -> ChainRecord:
    """Run one chain and return its retained samples.

    ``dataset`` is a :class:`GeneratedDataset` or a list of points. All points
    start in the background unless ``init_labels`` is given.
    """
    config = config or SamplerConfig()
    schedule = schedule if schedule is not None else AnnealSchedule()
    points = dataset.points if hasattr(dataset, "points") else list(dataset)
    for p in points:
        if not domain.contains(p.x):
            raise ValueError(f"point {p.x} lies outside the domain")
    state = ChainState(points, model, prior, background, domain, config, z=init_labels)
    streams = chain_streams(rng)
    g_assign, g_global = streams["assign"].gen, streams["global"].gen
    post, warm = n_total_sweeps(schedule, n_samples, config.warmup_fraction)
    temps = np.repeat(schedule.temperatures(), schedule.sweeps_per_stage)
    temps = np.concatenate([temps, np.ones(post)])
    record = ChainRecord(meta={"mode": config.mode, "n_points": len(points), "schedule": schedule.to_json(),
                               "n_samples": n_samples, "model": model.config_json()})
    n_anneal = schedule.n_sweeps
    for sweep, temp in enumerate(temps.tolist()):
        state.temperature = float(temp)
        gibbs_sweep_assignments(state, g_assign)
        n_empty = global_step([state], g_global)
        if config.audit_every and (sweep + 1) % config.audit_every == 0:
            state.audit()
        if sweep >= n_anneal + warm:
            record.samples.append(make_sample([state], sweep, n_empty))
        if callback is not None:
            callback(sweep, state)
    log.debug("chain finished: %d sweeps, %d samples", len(temps), len(record))
    return record
