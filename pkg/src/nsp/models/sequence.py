"""Neural sequence model: spikes (t, neuron) emitted by typed, time-warped sequences.

A latent event has a location m (time), a discrete type s and a warp index f.
Given those, neuron y spikes with probability a_s[y] at time
N(m + tau_f b[y, s], tau_f sigma2[y, s]). Type and warp are summed out
analytically; m has a flat prior on the line and the uniform 1/T factor enters
once per cluster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as sps

from ..domain import Domain, MarkedPoint, as_generator
from .base import ClusterModel, MarkModel

VAR_FLOOR = 1e-12


def _simplex(v, name):
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or not np.allclose(v.sum(axis=-1), 1.0, atol=1e-9):
        raise ValueError(f"{name} must be probability vectors")
    return v


def _lse2(a: np.ndarray):
    """logsumexp over the last two axes."""
    mx = a.max(axis=(-2, -1), keepdims=True)
    return (mx + np.log(np.exp(a - mx).sum(axis=(-2, -1), keepdims=True)))[..., 0, 0]


def default_warp_grid(n_warps: int, max_warp: float = 1.5) -> np.ndarray:
    """Geometric grid symmetric about 1 on the log scale."""
    if n_warps < 1:
        raise ValueError("need at least one warp value")
    if n_warps == 1:
        return np.ones(1)
    return np.geomspace(1.0 / max_warp, max_warp, n_warps)


def _dirichlet(gen, conc):
    # gamma draws can underflow for tiny concentrations; clamp and renormalize
    g = gen.standard_gamma(conc)
    g = np.maximum(g, 1e-300)
    return g / g.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class SequenceModelConfig:
    """Globals and their priors.

    ``offsets`` and ``widths`` have shape (n_neurons, n_types). ``warp_values``
    of ``None`` means a single warp of 1. NIG prior on (b, sigma2) is
    b | sigma2 ~ N(offset_mean, sigma2 / offset_kappa), sigma2 ~ IG(width_shape, width_scale).
    """

    n_neurons: int
    n_types: int
    type_probs: np.ndarray
    neuron_probs: np.ndarray
    offsets: np.ndarray
    widths: np.ndarray
    warp_values: np.ndarray | None = None
    type_conc: float = 1.0
    neuron_conc: float = 1.0
    offset_mean: float = 0.0
    offset_kappa: float = 1.0
    width_shape: float = 2.0
    width_scale: float = 1.0

    def __post_init__(self):
        Y, S = int(self.n_neurons), int(self.n_types)
        if Y < 1 or S < 1:
            raise ValueError("n_neurons and n_types must be positive")
        object.__setattr__(self, "type_probs", _simplex(np.reshape(self.type_probs, S), "type_probs"))
        object.__setattr__(self, "neuron_probs",
                           _simplex(np.reshape(np.asarray(self.neuron_probs, float), (S, Y)), "neuron_probs"))
        b = np.broadcast_to(np.asarray(self.offsets, dtype=float), (Y, S)).copy()
        sd = np.broadcast_to(np.asarray(self.widths, dtype=float), (Y, S)).copy()
        if np.any(sd <= 0):
            raise ValueError("widths must be positive")
        object.__setattr__(self, "offsets", b)
        object.__setattr__(self, "widths", sd)
        if self.warp_values is not None:
            w = np.atleast_1d(np.asarray(self.warp_values, dtype=float))
            if w.size == 0 or np.any(w <= 0):
                raise ValueError("warp values must be positive")
            object.__setattr__(self, "warp_values", w)
        for name in ("type_conc", "neuron_conc", "offset_kappa", "width_shape", "width_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def taus(self) -> np.ndarray:
        return np.ones(1) if self.warp_values is None else self.warp_values

    @classmethod
    def random(cls, n_neurons: int, n_types: int, rng, warp_values=None, offset_spread: float = 1.0,
               width: float = 0.1, **kw) -> "SequenceModelConfig":
        """Globals with sparse-ish neuron weights and spread-out offsets."""
        gen = as_generator(rng)
        a = _dirichlet(gen, np.full((n_types, n_neurons), 0.5))
        b = gen.uniform(-offset_spread, offset_spread, size=(n_neurons, n_types))
        return cls(n_neurons, n_types, np.full(n_types, 1.0 / n_types), a, b,
                   np.full((n_neurons, n_types), width), warp_values, **kw)

    def to_json(self) -> dict:
        return {
            "n_neurons": self.n_neurons, "n_types": self.n_types,
            "type_probs": self.type_probs.tolist(), "neuron_probs": self.neuron_probs.tolist(),
            "offsets": self.offsets.tolist(), "widths": self.widths.tolist(),
            "warp_values": None if self.warp_values is None else self.warp_values.tolist(),
            "type_conc": self.type_conc, "neuron_conc": self.neuron_conc,
            "offset_mean": self.offset_mean, "offset_kappa": self.offset_kappa,
            "width_shape": self.width_shape, "width_scale": self.width_scale,
        }


@dataclass(frozen=True, eq=False)
class SeqStats:
    """Per-(type, warp) Gaussian natural parameters for the integral over m."""

    n: int
    J: np.ndarray  # (S, F) summed precisions
    h: np.ndarray  # (S, F) precision-weighted residual sums
    logc: np.ndarray  # (S, F) accumulated log normalizers
    loga: np.ndarray  # (S,) sum of log a_s[y]
    counts: np.ndarray  # (Y,) spikes per neuron

    @property
    def size(self) -> int:
        return self.n

    def __eq__(self, other):
        return (isinstance(other, SeqStats) and self.n == other.n
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("J", "h", "logc", "loga", "counts")))


class SequenceModel(ClusterModel):
    name = "sequence"

    def __init__(self, config: SequenceModelConfig, domain: Domain):
        if domain.dim != 1:
            raise ValueError("sequence model lives on a 1-D time window")
        self.config = config
        self.domain = domain
        self.T = domain.measure()
        self.Y = config.n_neurons
        self.S = config.n_types
        self.tau = config.taus
        self.F = self.tau.size
        self.log_pi = np.log(np.maximum(config.type_probs, 1e-300))
        self.log_a = np.log(np.maximum(config.neuron_probs, 1e-300))  # (S, Y)
        self.b = config.offsets  # (Y, S)
        self.sigma2 = np.maximum(config.widths ** 2, VAR_FLOOR)
        # per-neuron (S, F) emission means and variances
        self._shift = self.b[:, :, None] * self.tau[None, None, :]  # (Y, S, F)
        self._var = self.sigma2[:, :, None] * self.tau[None, None, :]
        self._log2piv = np.log(2.0 * np.pi * self._var)
        # log pi_s - log F - log T, combined with the per-(s, f) evidence
        self._prior_sf = (self.log_pi - math.log(self.F) - math.log(self.T))[:, None] + np.zeros((1, self.F))
        self._empty = SeqStats(0, np.zeros((self.S, self.F)), np.zeros((self.S, self.F)),
                               np.zeros((self.S, self.F)), np.zeros(self.S), np.zeros(self.Y, dtype=np.int64))

    def with_config(self, config: SequenceModelConfig) -> "SequenceModel":
        return SequenceModel(config, self.domain)

    # -- observations -----------------------------------------------------
    def prepare(self, point: MarkedPoint):
        if not isinstance(point.mark, dict) or "neuron" not in point.mark:
            raise ValueError("sequence model points need a {'neuron': int} mark")
        y = int(point.mark["neuron"])
        if not 0 <= y < self.Y:
            raise ValueError(f"neuron index {y} outside [0, {self.Y})")
        return (float(point.x[0]), y)

    # -- statistics ----------------------------------------------------------
    def empty_stats(self) -> SeqStats:
        return self._empty

    def _terms(self, obs):
        x, y = obs
        v = self._var[y]
        r = x - self._shift[y]
        return 1.0 / v, r / v, -0.5 * self._log2piv[y] - 0.5 * r * r / v, self.log_a[:, y]

    def stats_add(self, stats: SeqStats, point) -> SeqStats:
        obs = self.obs(point)
        j, h, c, la = self._terms(obs)
        counts = stats.counts.copy()
        counts[obs[1]] += 1
        return SeqStats(stats.n + 1, stats.J + j, stats.h + h, stats.logc + c, stats.loga + la, counts)

    def stats_remove(self, stats: SeqStats, point) -> SeqStats:
        if stats.n <= 0:
            raise ValueError("cannot remove a point from empty statistics")
        if stats.n == 1:
            return self._empty
        obs = self.obs(point)
        j, h, c, la = self._terms(obs)
        counts = stats.counts.copy()
        counts[obs[1]] -= 1
        return SeqStats(stats.n - 1, stats.J - j, stats.h - h, stats.logc - c, stats.loga - la, counts)

    # -- likelihoods ------------------------------------------------------------
    def _component_logs(self, stats: SeqStats) -> np.ndarray:
        """(S, F) log of pi_s/F/T times the cluster evidence under (s, f)."""
        return self._components(stats.J, stats.h, stats.logc, stats.loga)

    def _components(self, J, h, logc, loga):
        return (self._prior_sf + loga[..., :, None] + logc
                + 0.5 * h * h / J + 0.5 * np.log(2.0 * np.pi / J))

    def log_marginal(self, stats: SeqStats) -> float:
        if stats.n == 0:
            return 0.0
        hit = stats.__dict__.get("_lm")
        if hit is None:
            hit = float(_lse2(self._component_logs(stats)))
            object.__setattr__(stats, "_lm", hit)
        return hit

    def log_predictive_many(self, stats_list, point) -> np.ndarray:
        obs = self.obs(point)
        if not stats_list:
            return np.zeros(0)
        if any(s.n == 0 for s in stats_list):
            return np.array([self.log_predictive(s, obs) for s in stats_list])
        j, h, c, la = self._terms(obs)
        J = np.stack([s.J for s in stats_list]) + j
        H = np.stack([s.h for s in stats_list]) + h
        C = np.stack([s.logc for s in stats_list]) + c
        LA = np.stack([s.loga for s in stats_list]) + la
        new = _lse2(self._components(J, H, C, LA))
        return new - np.array([self.log_marginal(s) for s in stats_list])

    def log_marginal_new(self, point) -> float:
        x, y = self.obs(point)
        v = self.log_pi + self.log_a[:, y]
        mx = v.max()
        return float(mx + math.log(np.exp(v - mx).sum()) - math.log(self.T))

    def log_predictive(self, stats: SeqStats, point) -> float:
        if stats.n == 0:
            return self.log_marginal_new(point)
        obs = self.obs(point)
        return self.log_marginal(self.stats_add(stats, obs)) - self.log_marginal(stats)

    # -- parameters ----------------------------------------------------------------
    def sample_prior_params(self, rng):
        gen = as_generator(rng)
        s = int(gen.choice(self.S, p=self.config.type_probs))
        f = int(gen.integers(self.F))
        m = self.domain.sample_uniform(gen, 1)[0]
        return m, {"type": s, "warp": f}

    def sample_posterior_params(self, stats: SeqStats, rng):
        gen = as_generator(rng)
        if stats.n == 0:
            return self.sample_prior_params(gen)
        logw = self._component_logs(stats).ravel()
        p = np.exp(logw - logw.max())
        idx = int(gen.choice(p.size, p=p / p.sum()))
        s, f = divmod(idx, self.F)
        J = stats.J[s, f]
        m = stats.h[s, f] / J + gen.standard_normal() / math.sqrt(J)
        return np.array([m]), {"type": s, "warp": f}

    def log_emission(self, point, m, theta) -> float:
        x, y = self.obs(point)
        s, f = int(theta["type"]), int(theta["warp"])
        mean = float(np.atleast_1d(m)[0]) + self._shift[y, s, f]
        v = self._var[y, s, f]
        return float(self.log_a[s, y] - 0.5 * self._log2piv[y, s, f] - 0.5 * (x - mean) ** 2 / v)

    def sample_points(self, m, theta, n, rng, truncate=True):
        gen = as_generator(rng)
        s, f = int(theta["type"]), int(theta["warp"])
        m = float(np.atleast_1d(m)[0])
        out = []
        tries = 0
        lo, hi = self.domain.lower[0], self.domain.upper[0]
        while len(out) < n:
            need = n - len(out)
            ys = gen.choice(self.Y, size=need, p=self.config.neuron_probs[s])
            xs = m + self._shift[ys, s, f] + np.sqrt(self._var[ys, s, f]) * gen.standard_normal(need)
            if truncate:
                keep = (xs >= lo) & (xs <= hi)
                xs, ys = xs[keep], ys[keep]
                tries += 1
                if tries > 10000:
                    raise RuntimeError("truncated emission: acceptance rate too low")
            out.extend(MarkedPoint([x], {"neuron": int(y)}) for x, y in zip(xs, ys))
        return out

    def box_mass(self, m, theta, lower, upper, group=None) -> float:
        s, f = int(theta["type"]), int(theta["warp"])
        ys = np.arange(self.Y) if group is None else np.asarray(sorted(group), dtype=int)
        mean = float(np.atleast_1d(m)[0]) + self._shift[ys, s, f]
        sd = np.sqrt(self._var[ys, s, f])
        lo, hi = float(np.atleast_1d(lower)[0]), float(np.atleast_1d(upper)[0])
        mass = sps.norm.cdf(hi, mean, sd) - sps.norm.cdf(lo, mean, sd)
        return float(np.sum(self.config.neuron_probs[s, ys] * mass))

    # -- globals -----------------------------------------------------------------------
    @property
    def stats_depend_on_globals(self) -> bool:
        return True

    def resample_globals(self, clusters, background_points, rng) -> "SequenceModel":
        """Conjugate updates of pi, a_s and (b, sigma2) given sampled latent events.

        ``clusters`` is a list of ``(m, theta, member_obs)``.
        """
        gen = as_generator(rng)
        cfg = self.config
        S, Y = self.S, self.Y
        type_counts = np.zeros(S)
        neuron_counts = np.zeros((S, Y))
        # weighted residual sums per (y, s): r = (x - m) / tau ~ N(b, sigma2 / tau)
        sw = np.zeros((Y, S))
        swr = np.zeros((Y, S))
        swr2 = np.zeros((Y, S))
        nobs = np.zeros((Y, S))
        for m, theta, members in clusters:
            s, f = int(theta["type"]), int(theta["warp"])
            tau = self.tau[f]
            mloc = float(np.atleast_1d(m)[0])
            type_counts[s] += 1
            for obs in members:
                x, y = self.obs(obs)
                neuron_counts[s, y] += 1
                r = (x - mloc) / tau
                sw[y, s] += tau
                swr[y, s] += tau * r
                swr2[y, s] += tau * r * r
                nobs[y, s] += 1
        pi = _dirichlet(gen, cfg.type_conc + type_counts)
        a = _dirichlet(gen, cfg.neuron_conc + neuron_counts)
        k0, mu0 = cfg.offset_kappa, cfg.offset_mean
        kn = k0 + sw
        mun = (k0 * mu0 + swr) / kn
        an = cfg.width_shape + 0.5 * nobs
        bn = cfg.width_scale + 0.5 * np.maximum(swr2 + k0 * mu0 ** 2 - kn * mun ** 2, 0.0)
        sigma2 = np.maximum(bn / gen.standard_gamma(an), VAR_FLOOR)
        b = mun + np.sqrt(sigma2 / kn) * gen.standard_normal((Y, S))
        new_cfg = replace(cfg, type_probs=pi, neuron_probs=a, offsets=b, widths=np.sqrt(sigma2))
        return self.with_config(new_cfg)

    def emission_scale(self) -> float:
        spread = np.max(np.abs(self._shift)) + 3.0 * math.sqrt(np.max(self._var))
        return float(spread)

    def default_background_marks(self) -> "NeuronMarks":
        return NeuronMarks(np.full(self.Y, 1.0 / self.Y))

    def theta_to_json(self, theta):
        return {"type": int(theta["type"]), "warp": int(theta["warp"])}

    def theta_from_json(self, obj):
        return {"type": int(obj["type"]), "warp": int(obj["warp"])}

    def config_json(self) -> dict:
        return {"kind": "sequence", **self.config.to_json()}

    def globals_json(self) -> dict:
        c = self.config
        return {"type_probs": c.type_probs.tolist(), "neuron_probs": c.neuron_probs.tolist(),
                "offsets": c.offsets.tolist(), "widths": c.widths.tolist()}

    def with_globals(self, obj: dict) -> "SequenceModel":
        c = replace(self.config, type_probs=np.asarray(obj["type_probs"]),
                    neuron_probs=np.asarray(obj["neuron_probs"]), offsets=np.asarray(obj["offsets"]),
                    widths=np.asarray(obj["widths"]))
        return self.with_config(c)


@dataclass(frozen=True, eq=False)
class NeuronMarks(MarkModel):
    """Background spikes pick neuron y with probability probs[y]."""

    probs: np.ndarray
    conc: float = 1.0
    fixed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "probs", _simplex(self.probs, "background neuron probs"))
        object.__setattr__(self, "_logp", np.log(np.maximum(self.probs, 1e-300)))

    def log_density(self, obs) -> float:
        return float(self._logp[obs[1]])

    def sample(self, rng):
        return {"neuron": int(as_generator(rng).choice(self.probs.size, p=self.probs))}

    def resample(self, background_obs, rng) -> "NeuronMarks":
        if self.fixed:
            return self
        counts = np.zeros(self.probs.size)
        for obs in background_obs:
            counts[obs[1]] += 1
        return NeuronMarks(_dirichlet(as_generator(rng), self.conc + counts), self.conc, self.fixed)

    def group_mass(self, group) -> float:
        if group is None:
            return 1.0
        return float(np.sum(self.probs[np.asarray(sorted(group), dtype=int)]))

    def to_json(self) -> dict:
        return {"kind": "neuron", "probs": self.probs.tolist(), "conc": self.conc}
