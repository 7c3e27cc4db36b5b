"""Metrics and exactness oracles: co-occupancy accuracy, cluster-count summaries,
speckled held-out likelihood and enumerated posteriors on tiny datasets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .domain import Domain, GammaWeightPrior, MarkedPoint
from .models.base import BackgroundModel, ClusterModel
from .partitions import (
    Partition,
    VCoefficientTable,
    enumerate_background_partitions,
    enumerate_partitions,
    log_dpmm_limit_with_background,
    log_eppf_with_background,
)

MAX_POSTERIOR_POINTS = 3


# ---------------------------------------------------------------------------
# co-occupancy


def _dense(z) -> tuple[np.ndarray, int]:
    _, inv = np.unique(np.asarray(z), return_inverse=True)
    inv = inv.astype(np.int64)
    return inv, int(inv.max()) + 1 if inv.size else 0


def co_occupancy_accuracy(z, z_ref, reference: bool = False) -> float:
    """Fraction of ordered index pairs (n, m) on which both labelings agree about
    same-cluster membership. Background labels count as one block."""
    z = np.asarray(z)
    z_ref = np.asarray(z_ref)
    if z.shape != z_ref.shape or z.ndim != 1:
        raise ValueError("label vectors must be 1-D and of equal length")
    if z.size == 0:
        raise ValueError("need at least one point")
    if reference:
        same = z[:, None] == z[None, :]
        same_ref = z_ref[:, None] == z_ref[None, :]
        return float(np.mean(same == same_ref))
    a, ka = _dense(z)
    b, kb = _dense(z_ref)
    return float(_kernels.co_occupancy(a, b, ka, kb))


# ---------------------------------------------------------------------------
# cluster counts


@dataclass(frozen=True)
class ClusterCountSummary:
    mean: float
    lower: float
    upper: float
    truth: float | None
    bias: float | None
    covered: bool | None

    def to_row(self) -> dict:
        return dict(self.__dict__)


def compare_cluster_count(chains, truth: int | None = None, level: float = 0.95) -> ClusterCountSummary:
    """Pooled posterior summary of |C| across chains (records hold retained samples only)."""
    counts = np.concatenate([np.asarray(c.n_clusters if hasattr(c, "n_clusters") else c, dtype=float)
                             for c in chains])
    if counts.size == 0:
        raise ValueError("no samples to summarize")
    lo, hi = np.quantile(counts, [(1 - level) / 2, 1 - (1 - level) / 2])
    mean = float(counts.mean())
    if truth is None:
        return ClusterCountSummary(mean, float(lo), float(hi), None, None, None)
    return ClusterCountSummary(mean, float(lo), float(hi), float(truth), mean - truth,
                               bool(lo <= truth <= hi))


def posterior_co_occupancy(chain, z_true) -> float:
    """Mean co-occupancy accuracy of retained samples against a reference labeling."""
    labels = chain.labels
    if len(labels) == 0:
        raise ValueError("chain has no samples")
    return float(np.mean([co_occupancy_accuracy(z, z_true) for z in labels]))


# ---------------------------------------------------------------------------
# speckled holdout


@dataclass(frozen=True)
class MaskRegion:
    lower: tuple
    upper: tuple
    group: tuple | None = None

    @property
    def measure(self) -> float:
        return float(np.prod(np.asarray(self.upper) - np.asarray(self.lower)))


class SpeckledMask:
    """Axis-aligned held-out boxes, optionally restricted to a mark group.

    A region with a group only holds out points whose mark group (neuron or
    author index) is in the group; measure bookkeeping for such regions is
    per group.
    """

    def __init__(self, regions: Sequence[MaskRegion], domain: Domain):
        self.domain = domain
        self.regions = list(regions)
        for r in self.regions:
            lo, hi = np.asarray(r.lower, float), np.asarray(r.upper, float)
            if lo.shape != (domain.dim,) or hi.shape != (domain.dim,):
                raise ValueError("mask region has the wrong dimension")
            if np.any(hi <= lo):
                raise ValueError("mask region has non-positive extent")
            if np.any(lo < np.asarray(domain.lower) - 1e-12) or np.any(hi > np.asarray(domain.upper) + 1e-12):
                raise ValueError("mask region leaves the domain")
        ungrouped = [r for r in self.regions if r.group is None]
        for i, a in enumerate(ungrouped):
            for b in ungrouped[i + 1:]:
                if np.all(np.maximum(a.lower, b.lower) < np.minimum(a.upper, b.upper)):
                    raise ValueError("ungrouped mask regions overlap")

    @classmethod
    def random(cls, domain: Domain, n_regions: int, width: float, rng, groups=None) -> "SpeckledMask":
        """Disjoint boxes of side ``width`` along the first axis (full extent on others)."""
        from .domain import as_generator

        gen = as_generator(rng)
        lo, hi = domain.lower[0], domain.upper[0]
        n_slots = int((hi - lo) // width)
        if n_slots < n_regions:
            raise ValueError("regions do not fit in the domain")
        regions = []
        if groups is None:
            slots = np.sort(gen.choice(n_slots, n_regions, replace=False))
            for s in slots:
                regions.append(MaskRegion((lo + s * width,) + domain.lower[1:],
                                          (lo + (s + 1) * width,) + domain.upper[1:]))
        else:
            for g in groups:
                slots = np.sort(gen.choice(n_slots, n_regions, replace=False))
                for s in slots:
                    regions.append(MaskRegion((lo + s * width,) + domain.lower[1:],
                                              (lo + (s + 1) * width,) + domain.upper[1:], (int(g),)))
        return cls(regions, domain)

    @property
    def grouped(self) -> bool:
        return any(r.group is not None for r in self.regions)

    def total_measure(self) -> float:
        return float(sum(r.measure for r in self.regions))

    def masked_fraction(self) -> float:
        return self.total_measure() / self.domain.measure()

    def contains(self, point: MarkedPoint, group_of=None) -> bool:
        x = np.asarray(point.x)
        for r in self.regions:
            if np.all(x >= r.lower) and np.all(x <= r.upper):
                if r.group is None:
                    return True
                g = group_of(point) if group_of else None
                if g is not None and g in r.group:
                    return True
        return False

    def split(self, points: Sequence[MarkedPoint], group_of=None) -> np.ndarray:
        """Boolean array marking held-out points."""
        return np.array([self.contains(p, group_of) for p in points], dtype=bool)

    def to_json(self) -> dict:
        return {"regions": [{"lower": list(r.lower), "upper": list(r.upper),
                             **({"group": list(r.group)} if r.group is not None else {})}
                            for r in self.regions]}

    @classmethod
    def from_json(cls, obj: dict, domain: Domain) -> "SpeckledMask":
        regions = []
        for r in obj["regions"]:
            g = r.get("group")
            if g is not None and not isinstance(g, (list, tuple)):
                g = [g]
            regions.append(MaskRegion(tuple(float(v) for v in r["lower"]), tuple(float(v) for v in r["upper"]),
                                      None if g is None else tuple(int(v) for v in g)))
        return cls(regions, domain)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path, domain: Domain) -> "SpeckledMask":
        with open(path) as fh:
            return cls.from_json(json.load(fh), domain)


def mark_group(point: MarkedPoint):
    """Group key of a point's mark: neuron or author index, else ``None``."""
    m = point.mark
    if isinstance(m, dict):
        if "neuron" in m:
            return int(m["neuron"])
        if "author" in m:
            return int(m["author"])
    return None


def masked_measure_for_fit(mask: SpeckledMask) -> float:
    """Measure removed from the background normalizer when fitting.

    Grouped regions only hide one mark group, so they are counted as the
    fraction of the mark space they remove, approximated as 1/n_groups of the
    box measure by the caller; here they are ignored (the window stays
    observed for other groups).
    """
    return float(sum(r.measure for r in mask.regions if r.group is None))


def _sample_log_intensity_and_mass(sample, model: ClusterModel, mask: SpeckledMask, points, background):
    """log lambda at each held-out point and the integral of lambda over the mask."""
    latents = sample.get("latents", [])
    ms = [np.asarray(l["m"], dtype=float) for l in latents]
    thetas = [model.theta_from_json(l["theta"]) for l in latents]
    ws = np.array([l["w"] for l in latents], dtype=float)
    rate = float(sample["background_rate"])
    logs = []
    for p in points:
        obs = model.prepare(p)
        terms = [math.log(w) + model.log_emission(obs, m, th) for m, th, w in zip(ms, thetas, ws) if w > 0]
        if rate > 0:
            terms.append(math.log(rate) + background.marks.log_density(obs))
        logs.append(float(logsumexp(terms)) if terms else -math.inf)
    mass = 0.0
    for r in mask.regions:
        g = r.group
        mass += rate * r.measure * background.marks.group_mass(g)
        for m, th, w in zip(ms, thetas, ws):
            mass += w * model.box_mass(m, th, r.lower, r.upper, g)
    return np.array(logs), mass


def heldout_predictive_ll(chain, points: Sequence[MarkedPoint], mask: SpeckledMask, model: ClusterModel,
                          background: BackgroundModel, group_of=mark_group) -> dict:
    """Poisson-process log-likelihood of held-out points on the masked region.

    For each retained sample the held-out log-likelihood is
    sum_n log lambda(x_n, y_n) - integral over the mask of lambda. Samples are
    combined by log-mean-exp. Returns per-point and pooled values plus the
    per-sample mean.
    """
    if not mask.regions:
        raise ValueError("empty mask: nothing to evaluate")
    held = [p for p in points if mask.contains(p, group_of)]
    if not chain.samples:
        raise ValueError("chain has no samples")
    per_sample = []
    for s in chain.samples:
        bg = background
        if "background_marks" in s:
            bg = background.with_marks(marks_from_json(s["background_marks"], background.marks))
        mdl = model.with_globals(s["globals"]) if "globals" in s and hasattr(model, "with_globals") else model
        logs, mass = _sample_log_intensity_and_mass(s, mdl, mask, held, bg)
        per_sample.append(float(np.sum(logs) - mass))
    per_sample = np.array(per_sample)
    pooled = float(logsumexp(per_sample) - math.log(per_sample.size))
    n_h = len(held)
    return {
        "n_heldout": n_h,
        "pooled_ll": pooled,
        "ll_per_point": pooled / n_h if n_h else float("nan"),
        "mean_sample_ll": float(per_sample.mean()),
        "masked_measure": mask.total_measure(),
    }


def marks_from_json(obj: dict, template):
    """Rebuild a recorded background mark model of the same kind as ``template``."""
    from .models.document import DocumentMarks
    from .models.sequence import NeuronMarks

    kind = obj.get("kind")
    if kind == "neuron":
        return NeuronMarks(np.asarray(obj["probs"]), obj.get("conc", 1.0))
    if kind == "document":
        return DocumentMarks(np.asarray(obj["theta0"]), np.asarray(obj["phi"]), obj["author_conc"],
                             obj["word_shape"], obj["word_rate"])
    return template


# ---------------------------------------------------------------------------
# exact posterior on tiny datasets


def enumerate_posterior(points: Sequence[MarkedPoint], model: ClusterModel, prior: GammaWeightPrior,
                        background: BackgroundModel, domain: Domain, mode: str = "nsp",
                        dpmm_gamma: float = 1.0, masked_measure: float = 0.0) -> dict:
    """Exact p(C0, C | data) by enumeration; keys are canonical label tuples.

    The joint of a configuration is the partition probability with background
    block, times each cluster's marginal likelihood, times mark density / |X|
    for each background point.
    """
    n = len(points)
    if n > MAX_POSTERIOR_POINTS:
        raise ValueError(f"refusing to enumerate posterior for {n} > {MAX_POSTERIOR_POINTS} points")
    obs = [model.prepare(p) for p in points]
    measure = domain.measure() - masked_measure
    active = background.rate > 0 or not background.fixed_rate
    w0 = background.rate * measure if active else 0.0
    table = VCoefficientTable(prior, prior.lbar(domain))
    parts = enumerate_background_partitions(n) if w0 > 0 else enumerate_partitions(n)
    keys, logs = [], []
    for part in parts:
        if mode == "nsp":
            lp = log_eppf_with_background(part, table, w0)
        else:
            lp = log_dpmm_limit_with_background(part, dpmm_gamma, w0, prior.beta)
        for c in part.clusters:
            lp += model.log_marginal(model.stats_of([obs[i] for i in sorted(c)]))
        for i in part.background:
            if not domain.contains(points[i].x):
                lp = -math.inf
                break
            lp += background.marks.log_density(obs[i]) - math.log(measure)
        keys.append(part.key())
        logs.append(lp)
    logs = np.array(logs)
    probs = np.exp(logs - logsumexp(logs))
    return dict(zip(keys, probs.tolist()))


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * float(sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys))


def empirical_partition_frequencies(labels) -> dict:
    """Frequencies of canonical label tuples."""
    from .partitions import canonical_labels

    out: dict = {}
    labels = np.asarray(labels)
    for z in labels:
        key = tuple(canonical_labels(z).tolist())
        out[key] = out.get(key, 0) + 1
    tot = float(len(labels))
    return {k: v / tot for k, v in out.items()}
