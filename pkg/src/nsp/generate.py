"""Forward simulation of Neyman-Scott processes with gamma weights.

Five equivalent constructions are provided:

v1  latent events with weights, Poisson offspring per event
v2  total weight W, N ~ Po(W), parents drawn categorically
v3  W ~ Ga(L alpha, beta) and proportions ~ Dir(alpha) drawn separately
v4  W integrated out: N ~ NB(L alpha, 1/(1+beta))
v5  (N, partition) straight from the urn, then per-cluster parameters

Every sampler returns a :class:`GeneratedDataset` whose points are sorted by
their first coordinate and whose label vector is canonical (0 = background,
clusters numbered by smallest member). Latent events that produced no points
are kept in ``empty_latents`` where the construction knows about them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .domain import Domain, GammaWeightPrior, LatentEvent, MarkedPoint, as_generator
from .models.base import BackgroundModel, ClusterModel
from .partitions import Partition, canonical_labels, sample_finite_urn_labels


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


@dataclass
class GeneratedDataset:
    points: list
    z: np.ndarray
    latents: list
    background_rate: float = 0.0
    empty_latents: list = field(default_factory=list)
    domain: Domain | None = None
    construction: str = ""

    @property
    def truth_partition(self) -> Partition:
        return Partition.from_labels(self.z)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def cluster_sizes(self) -> list[int]:
        return self.truth_partition.sizes

    @property
    def n_outside(self) -> int:
        """Points outside the window (only possible with untruncated emission)."""
        if self.domain is None or not self.points:
            return 0
        return int(np.sum(~self.domain.contains_many(np.array([p.x for p in self.points]))))

    def signature(self) -> tuple:
        """(N, cluster sizes sorted descending)."""
        counts = np.bincount(self.z)[1:] if self.z.size else np.zeros(0, dtype=np.int64)
        return (self.n_points, tuple(sorted((int(c) for c in counts if c), reverse=True)))

    def to_json(self) -> dict:
        return {
            "points": [p.to_json() for p in self.points],
            "z": [int(v) for v in self.z],
            "latents": [_jsonable(lat.to_json()) for lat in self.latents],
            "empty_latents": [_jsonable(lat.to_json()) for lat in self.empty_latents],
            "background_rate": float(self.background_rate),
            "domain": None if self.domain is None else self.domain.to_json(),
            "construction": self.construction,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GeneratedDataset":
        try:
            domain = Domain.from_json(obj["domain"]) if obj.get("domain") else None
            points = [MarkedPoint.from_json(p) for p in obj["points"]]
            z = np.asarray(obj.get("z", [0] * len(points)), dtype=np.int64)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed dataset: {exc}") from exc
        if z.shape != (len(points),):
            raise ValueError("malformed dataset: label vector length differs from point count")
        return cls(points, z, [LatentEvent.from_json(v) for v in obj.get("latents", [])],
                   float(obj.get("background_rate", 0.0)),
                   [LatentEvent.from_json(v) for v in obj.get("empty_latents", [])],
                   domain, obj.get("construction", ""))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "GeneratedDataset":
        with open(path) as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"malformed dataset: {exc}") from exc
        return cls.from_json(obj)

    def subset(self, keep: np.ndarray) -> "GeneratedDataset":
        """Dataset restricted to ``keep`` (bool mask); labels re-canonicalized."""
        keep = np.asarray(keep, dtype=bool)
        pts = [p for p, k in zip(self.points, keep) if k]
        return GeneratedDataset(pts, canonical_labels(self.z[keep]), [], self.background_rate, [],
                                self.domain, self.construction)


def _assemble(model, domain, params, counts, weights, gen, truncate, construction,
              background_points=(), background_rate=0.0):
    """Emit points for each latent event and build the canonical dataset.

    ``params`` is a list of (m, theta); ``counts`` the offspring count of each.
    """
    tagged = []
    for j, ((m, theta), n) in enumerate(zip(params, counts)):
        if n > 0:
            for p in model.sample_points(m, theta, int(n), gen, truncate):
                tagged.append((p.x, j + 1, p))
    for p in background_points:
        tagged.append((p.x, 0, p))
    tagged.sort(key=lambda t: t[0])
    points = [t[2] for t in tagged]
    raw = np.array([t[1] for t in tagged], dtype=np.int64)
    z = canonical_labels(raw)
    # latents aligned with canonical cluster order
    order = []
    seen = set()
    for lab in raw.tolist():
        if lab and lab not in seen:
            seen.add(lab)
            order.append(lab - 1)
    w = [None] * len(params) if weights is None else weights
    latents = [LatentEvent(params[j][0], None if w[j] is None else float(w[j]), params[j][1]) for j in order]
    empty = [LatentEvent(params[j][0], None if w[j] is None else float(w[j]), params[j][1])
             for j in range(len(params)) if counts[j] == 0]
    return GeneratedDataset(points, z, latents, background_rate, empty, domain, construction)


def _latent_params(model, n_latent, gen):
    return [model.sample_prior_params(gen) for _ in range(n_latent)]


def sample_nsp_v1(model: ClusterModel, prior: GammaWeightPrior, domain: Domain, rng,
                  truncate: bool = True) -> GeneratedDataset:
    """Latent events with gamma weights; each spawns Po(w) points."""
    gen = as_generator(rng)
    L = int(gen.poisson(prior.lbar(domain)))
    params = _latent_params(model, L, gen)
    w = gen.gamma(prior.alpha, 1.0 / prior.beta, size=L)
    counts = gen.poisson(w) if L else np.zeros(0, dtype=np.int64)
    return _assemble(model, domain, params, counts, w, gen, truncate, "v1")


def sample_nsp_v2(model, prior, domain, rng, truncate=True) -> GeneratedDataset:
    """N ~ Po(sum w), parents ~ Cat(w / sum w)."""
    gen = as_generator(rng)
    L = int(gen.poisson(prior.lbar(domain)))
    params = _latent_params(model, L, gen)
    w = gen.gamma(prior.alpha, 1.0 / prior.beta, size=L)
    W = float(w.sum())
    N = int(gen.poisson(W)) if W > 0 else 0
    counts = gen.multinomial(N, w / W) if N > 0 else np.zeros(L, dtype=np.int64)
    return _assemble(model, domain, params, counts, w, gen, truncate, "v2")


def sample_nsp_v3(model, prior, domain, rng, truncate=True) -> GeneratedDataset:
    """Total weight and proportions drawn separately: W ~ Ga(L alpha, beta), pi ~ Dir(alpha)."""
    gen = as_generator(rng)
    L = int(gen.poisson(prior.lbar(domain)))
    params = _latent_params(model, L, gen)
    if L == 0:
        return _assemble(model, domain, params, np.zeros(0, dtype=np.int64), [], gen, truncate, "v3")
    W = gen.gamma(L * prior.alpha, 1.0 / prior.beta)
    pi = gen.dirichlet(np.full(L, prior.alpha))
    N = int(gen.poisson(W))
    counts = gen.multinomial(N, pi) if N > 0 else np.zeros(L, dtype=np.int64)
    return _assemble(model, domain, params, counts, W * pi, gen, truncate, "v3")


def sample_nsp_v4(model, prior, domain, rng, truncate=True) -> GeneratedDataset:
    """Weights integrated out: N ~ NB(L alpha, 1/(1+beta)); no weights reported."""
    gen = as_generator(rng)
    L = int(gen.poisson(prior.lbar(domain)))
    params = _latent_params(model, L, gen)
    if L == 0:
        return _assemble(model, domain, params, np.zeros(0, dtype=np.int64), None, gen, truncate, "v4")
    # numpy's NB(n, p) counts failures with success probability p: mean n(1-p)/p
    N = int(gen.negative_binomial(L * prior.alpha, prior.beta / (1.0 + prior.beta)))
    pi = gen.dirichlet(np.full(L, prior.alpha))
    counts = gen.multinomial(N, pi) if N > 0 else np.zeros(L, dtype=np.int64)
    return _assemble(model, domain, params, counts, None, gen, truncate, "v4")


def sample_nsp_v5(model, prior, domain, rng, truncate=True) -> GeneratedDataset:
    """(N, C) from the urn, then per-cluster parameters. Empty latents are not tracked.

    N comes from the negative-binomial mixture over L̃ ~ Po(L̄); the partition
    is then the finite symmetric-Dirichlet urn over those L̃ events, which is
    p(C | N) once L̃ is marginalised.
    """
    gen = as_generator(rng)
    n_lat = int(gen.poisson(prior.lbar(domain)))
    N = int(gen.negative_binomial(n_lat * prior.alpha, prior.beta / (1.0 + prior.beta))) if n_lat else 0
    if N == 0:
        return _assemble(model, domain, [], np.zeros(0, dtype=np.int64), None, gen, truncate, "v5")
    labels = sample_finite_urn_labels(N, n_lat, prior.alpha, 1, gen)[0]
    K = int(labels.max())
    counts = np.bincount(labels, minlength=K + 1)[1:]
    params = _latent_params(model, K, gen)
    return _assemble(model, domain, params, counts, None, gen, truncate, "v5")


CONSTRUCTIONS: dict[str, Callable] = {
    "v1": sample_nsp_v1,
    "v2": sample_nsp_v2,
    "v3": sample_nsp_v3,
    "v4": sample_nsp_v4,
    "v5": sample_nsp_v5,
}


def sample_nsp(model, prior, domain, rng, construction: str = "v1", truncate: bool = True):
    try:
        fn = CONSTRUCTIONS[construction]
    except KeyError:
        raise ValueError(f"unknown construction {construction!r}; choose from {sorted(CONSTRUCTIONS)}")
    return fn(model, prior, domain, rng, truncate=truncate)


def sample_with_background(model: ClusterModel, prior: GammaWeightPrior, background: BackgroundModel,
                           domain: Domain, rng, truncate: bool = True,
                           construction: str = "v1") -> GeneratedDataset:
    """NSP draw superposed with a homogeneous marked Poisson background."""
    gen = as_generator(rng)
    ds = sample_nsp(model, prior, domain, gen, construction, truncate)
    n0 = int(gen.poisson(background.w0(domain.measure())))
    xs = domain.sample_uniform(gen, n0)
    bg = [MarkedPoint(x, background.marks.sample(gen)) for x in xs]
    if not bg:
        ds.background_rate = background.rate
        return ds
    # merge, keeping the cluster-to-latent alignment
    raw = np.concatenate([ds.z, np.zeros(n0, dtype=np.int64)])
    pts = ds.points + bg
    order = sorted(range(len(pts)), key=lambda i: pts[i].x)
    z = canonical_labels(raw[order])
    return GeneratedDataset([pts[i] for i in order], z, ds.latents, background.rate,
                            ds.empty_latents, domain, ds.construction)
