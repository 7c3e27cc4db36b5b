"""Shared value types: observation windows, points, latent events, weight priors
and reproducible random streams."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``[lower, upper]`` in R^D."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __init__(self, lower: Iterable[float], upper: Iterable[float]):
        lo = tuple(float(v) for v in np.atleast_1d(np.asarray(lower, dtype=float)))
        hi = tuple(float(v) for v in np.atleast_1d(np.asarray(upper, dtype=float)))
        if len(lo) != len(hi) or len(lo) == 0:
            raise ValueError("lower and upper must have the same, non-zero length")
        for a, b in zip(lo, hi):
            if not (math.isfinite(a) and math.isfinite(b)) or not b > a:
                raise ValueError(f"invalid axis bounds [{a}, {b}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def interval(cls, t_max: float, t_min: float = 0.0) -> "Domain":
        return cls([t_min], [t_max])

    @classmethod
    def unit_cube(cls, dim: int = 2) -> "Domain":
        return cls([0.0] * dim, [1.0] * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.upper) + np.asarray(self.lower))

    def measure(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            return False
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def contains_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float).reshape(-1, self.dim)
        return np.all((xs >= self.lower) & (xs <= self.upper), axis=1)

    def sample_uniform(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))

    def to_json(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_json(cls, obj: dict) -> "Domain":
        return cls(obj["lower"], obj["upper"])


def measure(domain: Domain) -> float:
    return domain.measure()


@dataclass(frozen=True)
class MarkedPoint:
    """Observed event: a location and a model-specific mark (``None`` if unmarked).

    Marks are plain JSON-like values: ``{"neuron": int}`` for spike data and
    ``{"author": int, "words": {idx: count}}`` for documents.
    """

    x: tuple[float, ...]
    mark: Any = None

    def __init__(self, x, mark: Any = None, domain: Domain | None = None):
        loc = tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))
        if domain is not None and not domain.contains(loc):
            raise ValueError(f"point {loc} lies outside {domain}")
        object.__setattr__(self, "x", loc)
        object.__setattr__(self, "mark", mark)

    @property
    def loc(self) -> np.ndarray:
        return np.asarray(self.x)

    def to_json(self) -> dict:
        out: dict = {"x": list(self.x)}
        if self.mark is not None:
            mark = dict(self.mark)
            if "words" in mark:
                mark["words"] = {str(k): int(v) for k, v in mark["words"].items()}
            out["mark"] = mark
        return out

    @classmethod
    def from_json(cls, obj: dict, domain: Domain | None = None) -> "MarkedPoint":
        mark = obj.get("mark")
        if mark is not None:
            mark = dict(mark)
            if "words" in mark:
                mark["words"] = {int(k): int(v) for k, v in mark["words"].items()}
        return cls(obj["x"], mark, domain=domain)


@dataclass(frozen=True)
class LatentEvent:
    """Cluster seed. ``w`` is ``None`` when a construction collapses the weights."""

    m: tuple[float, ...]
    w: float | None
    theta: Any = None

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(float(v) for v in np.atleast_1d(self.m)))
        if self.w is not None and not self.w >= 0:
            raise ValueError("latent event weight must be non-negative")

    def to_json(self) -> dict:
        return {"m": list(self.m), "w": self.w, "theta": self.theta}

    @classmethod
    def from_json(cls, obj: dict) -> "LatentEvent":
        return cls(obj["m"], obj.get("w"), obj.get("theta"))


@dataclass(frozen=True)
class GammaWeightPrior:
    """Gamma(alpha, beta) latent weights with homogeneous latent rate ``nu_bar``."""

    alpha: float
    beta: float
    nu_bar: float

    def __post_init__(self):
        if not self.alpha > 0 or not self.beta > 0:
            raise ValueError("alpha and beta must be positive")
        if not self.nu_bar >= 0:
            raise ValueError("nu_bar must be non-negative")

    def lbar(self, domain: Domain) -> float:
        return self.nu_bar * domain.measure()

    @property
    def log_q(self) -> float:
        """log(beta / (1 + beta))."""
        return math.log(self.beta) - math.log1p(self.beta)

    @property
    def mean_weight(self) -> float:
        return self.alpha / self.beta

    def tempered(self, temperature: float) -> "GammaWeightPrior":
        # mean alpha/beta fixed, variance alpha/beta^2 scaled by the temperature
        return GammaWeightPrior(self.alpha / temperature, self.beta / temperature, self.nu_bar)

    def with_(self, **kw) -> "GammaWeightPrior":
        d = {"alpha": self.alpha, "beta": self.beta, "nu_bar": self.nu_bar}
        d.update(kw)
        return GammaWeightPrior(**d)


def lbar(prior: GammaWeightPrior, domain: Domain) -> float:
    return prior.lbar(domain)


def _name_key(name) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name)
    return zlib.crc32(str(name).encode("utf8"))


@dataclass
class RngStream:
    """Counter-style random stream keyed by ``(seed, stream_id)``.

    Streams are built from ``numpy.random.SeedSequence`` spawn keys, so distinct
    ids (and distinct child paths) give independent PCG64 streams.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()
    gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),) + tuple(self.path))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *names) -> "RngStream":
        """Deterministic independent sub-stream, e.g. ``rng.child("shard", 3)``."""
        return RngStream(self.seed, self.stream_id, self.path + tuple(_name_key(n) for n in names))

    def fresh(self) -> "RngStream":
        """A new stream object positioned at the start of this stream's sequence."""
        return RngStream(self.seed, self.stream_id, self.path)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.gen
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def points_array(points: Sequence[MarkedPoint]) -> np.ndarray:
    if not points:
        return np.zeros((0, 0))
    return np.array([p.x for p in points], dtype=float)
