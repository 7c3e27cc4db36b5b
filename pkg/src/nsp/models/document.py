"""Document streams: timestamped documents with an author and a bag of words.

Given a latent event (m, theta_a, theta_c) a document arrives at time
N(m, sigma^2), has author a ~ Cat(theta_a) and word counts c_v ~ Po(theta_c[v]).
Priors are theta_a ~ Dir(author_conc) and theta_c[v] ~ Ga(word_shape, word_rate).
Word vectors are sparse dicts ``{index: count}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps
from scipy.special import gammaln

from ..domain import Domain, MarkedPoint, as_generator
from .base import ClusterModel, MarkModel

LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DocumentModelConfig:
    n_authors: int
    vocab_size: int
    time_width: float
    author_conc: float = 1.0
    word_shape: float = 1.0
    word_rate: float = 1.0
    # background: phi[a, v] ~ Ga(bg_word_shape, bg_word_rate), theta0 ~ Dir(bg_author_conc)
    bg_word_shape: float = 1.0
    bg_word_rate: float = 1.0
    bg_author_conc: float = 1.0

    def __post_init__(self):
        if self.n_authors < 1 or self.vocab_size < 1:
            raise ValueError("n_authors and vocab_size must be positive")
        for name in ("time_width", "author_conc", "word_shape", "word_rate",
                     "bg_word_shape", "bg_word_rate", "bg_author_conc"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class DocObs:
    x: float
    author: int
    idx: np.ndarray  # word indices with nonzero count
    cnt: np.ndarray
    log_fact: float  # sum of log c_v!


@dataclass(frozen=True, eq=False)
class DocStats:
    n: int
    sx: float  # sums of (t - centre)
    sxx: float
    authors: np.ndarray  # (A,) int counts
    words: dict  # index -> total count
    total: int  # total word count
    log_fact: float

    @property
    def size(self) -> int:
        return self.n

    def __eq__(self, other):
        return (isinstance(other, DocStats) and self.n == other.n and self.sx == other.sx
                and self.sxx == other.sxx and np.array_equal(self.authors, other.authors)
                and self.words == other.words and self.total == other.total)


class DocumentModel(ClusterModel):
    name = "document"

    def __init__(self, config: DocumentModelConfig, domain: Domain):
        if domain.dim != 1:
            raise ValueError("document model lives on a 1-D time window")
        self.config = config
        self.domain = domain
        self.T = domain.measure()
        self.A = config.n_authors
        self.V = config.vocab_size
        self.centre = float(domain.center[0])
        self.s2 = config.time_width ** 2
        self._empty = DocStats(0, 0.0, 0.0, np.zeros(self.A, dtype=np.int64), {}, 0, 0.0)

    # -- observations -----------------------------------------------------
    def prepare(self, point: MarkedPoint) -> DocObs:
        mark = point.mark
        if not isinstance(mark, dict) or "author" not in mark:
            raise ValueError("document points need an {'author', 'words'} mark")
        a = int(mark["author"])
        if not 0 <= a < self.A:
            raise ValueError(f"author index {a} outside [0, {self.A})")
        words = {int(k): int(v) for k, v in mark.get("words", {}).items() if int(v) != 0}
        for k, v in words.items():
            if not 0 <= k < self.V:
                raise ValueError(f"word index {k} outside [0, {self.V})")
            if v < 0:
                raise ValueError("word counts must be non-negative")
        idx = np.array(sorted(words), dtype=np.int64)
        cnt = np.array([words[k] for k in idx.tolist()], dtype=np.int64)
        return DocObs(float(point.x[0]) - self.centre, a, idx, cnt, float(gammaln(cnt + 1).sum()))

    # -- statistics ----------------------------------------------------------
    def empty_stats(self) -> DocStats:
        return self._empty

    def stats_add(self, stats: DocStats, point) -> DocStats:
        o = self.obs(point)
        authors = stats.authors.copy()
        authors[o.author] += 1
        words = dict(stats.words)
        for k, c in zip(o.idx.tolist(), o.cnt.tolist()):
            words[k] = words.get(k, 0) + c
        return DocStats(stats.n + 1, stats.sx + o.x, stats.sxx + o.x * o.x, authors, words,
                        stats.total + int(o.cnt.sum()), stats.log_fact + o.log_fact)

    def stats_remove(self, stats: DocStats, point) -> DocStats:
        if stats.n <= 0:
            raise ValueError("cannot remove a point from empty statistics")
        if stats.n == 1:
            return self._empty
        o = self.obs(point)
        authors = stats.authors.copy()
        authors[o.author] -= 1
        words = dict(stats.words)
        for k, c in zip(o.idx.tolist(), o.cnt.tolist()):
            left = words[k] - c
            if left:
                words[k] = left
            else:
                del words[k]
        return DocStats(stats.n - 1, stats.sx - o.x, stats.sxx - o.x * o.x, authors, words,
                        stats.total - int(o.cnt.sum()), stats.log_fact - o.log_fact)

    # -- likelihood factors ---------------------------------------------------
    def _log_time_pred(self, stats: DocStats, x: float) -> float:
        if stats.n == 0:
            return -math.log(self.T)
        n = stats.n
        var = self.s2 * (1.0 + 1.0 / n)
        d = x - stats.sx / n
        return -0.5 * (LOG2PI + math.log(var)) - 0.5 * d * d / var

    def _log_author_pred(self, stats: DocStats, a: int) -> float:
        c = self.config.author_conc
        return math.log(c + stats.authors[a]) - math.log(self.A * c + stats.n)

    def _log_words_pred(self, stats: DocStats, o: DocObs) -> float:
        cfg = self.config
        b = cfg.word_rate + stats.n
        lb = math.log(b / (b + 1.0))
        l1b = math.log1p(b)
        # every word contributes its zero-count term; present words get corrections
        out = (self.V * cfg.word_shape + stats.total) * lb
        if o.idx.size:
            prior = np.array([stats.words.get(k, 0) for k in o.idx.tolist()], dtype=float) + cfg.word_shape
            out += float(np.sum(gammaln(prior + o.cnt) - gammaln(prior))) - o.log_fact - float(o.cnt.sum()) * l1b
        return out

    def log_predictive(self, stats: DocStats, point) -> float:
        o = self.obs(point)
        return (self._log_time_pred(stats, o.x) + self._log_author_pred(stats, o.author)
                + self._log_words_pred(stats, o))

    def log_marginal_new(self, point) -> float:
        return self.log_predictive(self._empty, point)

    def log_marginal(self, stats: DocStats) -> float:
        n = stats.n
        if n == 0:
            return 0.0
        cfg = self.config
        # time: (1/T) * integral over m of prod N(x_i | m, s2)
        ss = max(stats.sxx - stats.sx * stats.sx / n, 0.0)
        lt = (-math.log(self.T) - 0.5 * (n - 1) * (LOG2PI + math.log(self.s2))
              - 0.5 * math.log(n) - 0.5 * ss / self.s2)
        c = cfg.author_conc
        la = (math.lgamma(self.A * c) - math.lgamma(self.A * c + n)
              + float(np.sum(gammaln(c + stats.authors) - gammaln(c))))
        a0, b0 = cfg.word_shape, cfg.word_rate
        tot = np.fromiter(stats.words.values(), dtype=float, count=len(stats.words))
        lw = (self.V * a0 * (math.log(b0) - math.log(b0 + n)) - stats.total * math.log(b0 + n)
              + float(np.sum(gammaln(a0 + tot) - gammaln(a0))) - stats.log_fact)
        return lt + la + lw

    # -- parameters ----------------------------------------------------------------
    def _draw_theta(self, stats: DocStats, gen):
        cfg = self.config
        ga = gen.standard_gamma(cfg.author_conc + stats.authors)
        ga = np.maximum(ga, 1e-300)
        shape = np.full(self.V, cfg.word_shape)
        for k, c in stats.words.items():
            shape[k] += c
        rates = gen.standard_gamma(shape) / (cfg.word_rate + stats.n)
        return {"authors": ga / ga.sum(), "words": rates}

    def sample_prior_params(self, rng):
        gen = as_generator(rng)
        m = self.domain.sample_uniform(gen, 1)[0]
        return m, self._draw_theta(self._empty, gen)

    def sample_posterior_params(self, stats: DocStats, rng):
        gen = as_generator(rng)
        if stats.n == 0:
            return self.sample_prior_params(gen)
        n = stats.n
        m = self.centre + stats.sx / n + math.sqrt(self.s2 / n) * gen.standard_normal()
        return np.array([m]), self._draw_theta(stats, gen)

    def log_emission(self, point, m, theta) -> float:
        o = self.obs(point)
        x = o.x + self.centre
        mm = float(np.atleast_1d(m)[0])
        rates = np.asarray(theta["words"])
        lt = -0.5 * (LOG2PI + math.log(self.s2)) - 0.5 * (x - mm) ** 2 / self.s2
        la = math.log(max(theta["authors"][o.author], 1e-300))
        lw = -float(rates.sum()) - o.log_fact
        if o.idx.size:
            lw += float(np.sum(o.cnt * np.log(np.maximum(rates[o.idx], 1e-300))))
        return lt + la + lw

    def sample_points(self, m, theta, n, rng, truncate=True):
        gen = as_generator(rng)
        mm = float(np.atleast_1d(m)[0])
        sd = math.sqrt(self.s2)
        lo, hi = self.domain.lower[0], self.domain.upper[0]
        rates = np.asarray(theta["words"])
        out = []
        tries = 0
        while len(out) < n:
            x = mm + sd * gen.standard_normal()
            if truncate and not lo <= x <= hi:
                tries += 1
                if tries > 100000:
                    raise RuntimeError("truncated emission: acceptance rate too low")
                continue
            a = int(gen.choice(self.A, p=theta["authors"]))
            c = gen.poisson(rates)
            nz = np.nonzero(c)[0]
            out.append(MarkedPoint([x], {"author": a, "words": {int(k): int(c[k]) for k in nz}}))
        return out

    def box_mass(self, m, theta, lower, upper, group=None) -> float:
        mm = float(np.atleast_1d(m)[0])
        sd = math.sqrt(self.s2)
        lo, hi = float(np.atleast_1d(lower)[0]), float(np.atleast_1d(upper)[0])
        t = sps.norm.cdf(hi, mm, sd) - sps.norm.cdf(lo, mm, sd)
        if group is None:
            return float(t)
        return float(t * np.sum(np.asarray(theta["authors"])[np.asarray(sorted(group), dtype=int)]))

    def emission_scale(self) -> float:
        return 3.0 * math.sqrt(self.s2)

    def default_background_marks(self) -> "DocumentMarks":
        cfg = self.config
        mean_rate = cfg.bg_word_shape / cfg.bg_word_rate
        return DocumentMarks(np.full(self.A, 1.0 / self.A), np.full((self.A, self.V), mean_rate),
                             cfg.bg_author_conc, cfg.bg_word_shape, cfg.bg_word_rate)

    def theta_to_json(self, theta):
        return {"authors": np.asarray(theta["authors"]).tolist(), "words": np.asarray(theta["words"]).tolist()}

    def theta_from_json(self, obj):
        return {"authors": np.asarray(obj["authors"], dtype=float), "words": np.asarray(obj["words"], dtype=float)}

    def config_json(self) -> dict:
        return {"kind": "document", **self.config.to_json()}


@dataclass(frozen=True, eq=False)
class DocumentMarks(MarkModel):
    """Background documents: author ~ Cat(theta0), word v ~ Po(phi[author, v])."""

    theta0: np.ndarray
    phi: np.ndarray
    author_conc: float = 1.0
    word_shape: float = 1.0
    word_rate: float = 1.0
    fixed: bool = False

    def __post_init__(self):
        t = np.asarray(self.theta0, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 2 or phi.shape[0] != t.size or np.any(phi < 0):
            raise ValueError("phi must be a non-negative (n_authors, vocab) array")
        if not np.isclose(t.sum(), 1.0) or np.any(t < 0):
            raise ValueError("theta0 must be a probability vector")
        object.__setattr__(self, "theta0", t)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "_log_theta0", np.log(np.maximum(t, 1e-300)))
        object.__setattr__(self, "_log_phi", np.log(np.maximum(phi, 1e-300)))
        object.__setattr__(self, "_phi_rows", phi.sum(axis=1))

    def log_density(self, obs: DocObs) -> float:
        a = obs.author
        out = float(self._log_theta0[a]) - float(self._phi_rows[a]) - obs.log_fact
        if obs.idx.size:
            out += float(np.sum(obs.cnt * self._log_phi[a, obs.idx]))
        return out

    def sample(self, rng):
        gen = as_generator(rng)
        a = int(gen.choice(self.theta0.size, p=self.theta0))
        c = gen.poisson(self.phi[a])
        nz = np.nonzero(c)[0]
        return {"author": a, "words": {int(k): int(c[k]) for k in nz}}

    def resample(self, background_obs, rng) -> "DocumentMarks":
        if self.fixed:
            return self
        gen = as_generator(rng)
        A, V = self.phi.shape
        docs = np.zeros(A)
        words = np.zeros((A, V))
        for o in background_obs:
            docs[o.author] += 1
            if o.idx.size:
                words[o.author, o.idx] += o.cnt
        g = np.maximum(gen.standard_gamma(self.author_conc + docs), 1e-300)
        phi = gen.standard_gamma(self.word_shape + words) / (self.word_rate + docs)[:, None]
        return DocumentMarks(g / g.sum(), phi, self.author_conc, self.word_shape, self.word_rate, self.fixed)

    def group_mass(self, group) -> float:
        if group is None:
            return 1.0
        return float(np.sum(self.theta0[np.asarray(sorted(group), dtype=int)]))

    def to_json(self) -> dict:
        return {"kind": "document", "theta0": self.theta0.tolist(), "phi": self.phi.tolist(),
                "author_conc": self.author_conc, "word_shape": self.word_shape,
                "word_rate": self.word_rate}
