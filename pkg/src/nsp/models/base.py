"""Observation-model contract and the homogeneous background model."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from ..domain import Domain, MarkedPoint, as_generator


class ClusterModel(ABC):
    """Emission family p(x, y | m, θ) with conjugate cluster bookkeeping.

    Points handed to the per-point methods may be ``MarkedPoint`` objects or
    the model's prepared observations (see :meth:`prepare`); samplers prepare
    once and reuse. Sufficient statistics are immutable: ``stats_add`` and
    ``stats_remove`` return new objects.
    """

    name: str = "abstract"
    domain: Domain

    # -- observations -----------------------------------------------------
    @abstractmethod
    def prepare(self, point: MarkedPoint) -> Any:
        """Convert a point to the model's internal observation (validates the mark)."""

    def obs(self, point):
        return self.prepare(point) if isinstance(point, MarkedPoint) else point

    # -- sufficient statistics ---------------------------------------------
    @abstractmethod
    def empty_stats(self): ...

    @abstractmethod
    def stats_add(self, stats, point): ...

    @abstractmethod
    def stats_remove(self, stats, point): ...

    def stats_of(self, points: Sequence) -> Any:
        s = self.empty_stats()
        for p in points:
            s = self.stats_add(s, p)
        return s

    # -- likelihoods --------------------------------------------------------
    @abstractmethod
    def log_marginal_new(self, point) -> float:
        """log p(x, y) under a fresh cluster with (m, θ) integrated out."""

    @abstractmethod
    def log_predictive(self, stats, point) -> float:
        """log p(x, y | points absorbed in ``stats``)."""

    def log_predictive_many(self, stats_list: Sequence, point) -> np.ndarray:
        p = self.obs(point)
        return np.array([self.log_predictive(s, p) for s in stats_list], dtype=float)

    def log_marginal(self, stats) -> float:
        """log p(all points in a cluster). Subclasses give closed forms."""
        raise NotImplementedError

    def log_marginal_chain(self, points: Sequence) -> float:
        """Chain-rule cluster marginal: sum of successive predictives."""
        s = self.empty_stats()
        total = 0.0
        for p in points:
            total += self.log_predictive(s, p)
            s = self.stats_add(s, p)
        return total

    # -- cluster parameters ---------------------------------------------------
    @abstractmethod
    def sample_prior_params(self, rng) -> tuple[np.ndarray, Any]:
        """(m, θ) from the generative prior, m uniform on the domain."""

    @abstractmethod
    def sample_posterior_params(self, stats, rng) -> tuple[np.ndarray, Any]: ...

    @abstractmethod
    def log_emission(self, point, m, theta) -> float:
        """log p(x, y | m, θ)."""

    @abstractmethod
    def sample_points(self, m, theta, n: int, rng, truncate: bool = True) -> list[MarkedPoint]:
        """``n`` draws from p(x, y | m, θ); ``truncate`` redraws locations outside the domain."""

    def sample_point(self, m, theta, rng, truncate: bool = True) -> MarkedPoint:
        return self.sample_points(m, theta, 1, rng, truncate)[0]

    @abstractmethod
    def box_mass(self, m, theta, lower, upper, group=None) -> float:
        """∫ over the box (and over marks in ``group``) of p(x, y | m, θ)."""

    def resample_globals(self, clusters: Sequence, background_points: Sequence, rng) -> "ClusterModel":
        """Gibbs update of shared parameters given ``[(m, θ, member_obs), ...]``."""
        return self

    @property
    def stats_depend_on_globals(self) -> bool:
        return False

    def emission_scale(self) -> float:
        """Typical spatial extent of one cluster, for shard-width checks."""
        return 0.0

    def default_background_marks(self) -> "MarkModel":
        return NoMarks()

    def theta_to_json(self, theta) -> Any:
        return theta

    def theta_from_json(self, obj) -> Any:
        return obj

    @abstractmethod
    def config_json(self) -> dict: ...

    def globals_json(self) -> dict:
        return {}

    def with_globals(self, obj: dict) -> "ClusterModel":
        """Copy of the model with shared parameters taken from ``globals_json`` output."""
        return self


# ---------------------------------------------------------------------------
# background


class MarkModel(ABC):
    """Mark density of background points."""

    @abstractmethod
    def log_density(self, obs) -> float: ...

    @abstractmethod
    def sample(self, rng) -> Any: ...

    def resample(self, background_obs: Sequence, rng) -> "MarkModel":
        return self

    def group_mass(self, group) -> float:
        return 1.0

    def to_json(self) -> dict:
        return {"kind": "none"}


class NoMarks(MarkModel):
    def log_density(self, obs) -> float:
        return 0.0

    def sample(self, rng):
        return None

    def __eq__(self, other):
        return isinstance(other, NoMarks)

    def __hash__(self):
        return 0


@dataclass(frozen=True)
class BackgroundModel:
    """Homogeneous background intensity ``rate`` with a model-specific mark density.

    ``rate_prior`` is the (shape, rate) of the gamma prior on ``rate``;
    ``fixed_rate`` freezes the rate during inference.
    """

    rate: float = 0.0
    rate_prior: tuple = (1.0, 1.0)
    marks: MarkModel = field(default_factory=NoMarks)
    fixed_rate: bool = True

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError("background rate must be non-negative")
        a0, b0 = self.rate_prior
        if not (a0 > 0 and b0 > 0):
            raise ValueError("background rate prior must have positive parameters")

    def w0(self, measure: float) -> float:
        return self.rate * measure

    def with_rate(self, rate: float) -> "BackgroundModel":
        return replace(self, rate=float(rate))

    def with_marks(self, marks: MarkModel) -> "BackgroundModel":
        return replace(self, marks=marks)


def background_log_density(background: BackgroundModel, point, model: ClusterModel | None = None) -> float:
    """log λ0(x, y) = log rate + log mark density."""
    obs = model.obs(point) if model is not None else point
    if background.rate <= 0:
        return -math.inf
    return math.log(background.rate) + background.marks.log_density(obs)


def resample_background_rate(background: BackgroundModel, n_background: int, domain_measure: float,
                             rng) -> BackgroundModel:
    """Conjugate update Ga(α0 + |C0|, β0 + |X|)."""
    if background.fixed_rate:
        return background
    if isinstance(domain_measure, Domain):
        domain_measure = domain_measure.measure()
    a0, b0 = background.rate_prior
    gen = as_generator(rng)
    rate = gen.gamma(a0 + n_background, 1.0 / (b0 + domain_measure))
    return background.with_rate(rate)


def sample_background_points(background: BackgroundModel, domain: Domain, rng,
                             measure: float | None = None) -> list[MarkedPoint]:
    gen = as_generator(rng)
    n0 = gen.poisson(background.w0(domain.measure() if measure is None else measure))
    xs = domain.sample_uniform(gen, n0)
    return [MarkedPoint(x, background.marks.sample(gen)) for x in xs]
