"""Exact calculus on NSP partitions.

Partition probabilities, V-coefficients, the Poisson-mixed negative binomial
law of the number of points, the posterior over the number of latent events,
Polya-urn samplers (NSP, DPMM limit, Pitman-Yor and NSP with background) and a
brute-force enumeration oracle.

Point indices are 0-based here; the serialized label vector uses 0 for the
background and 1..K for clusters ordered by their smallest member.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .domain import Domain, GammaWeightPrior, as_generator

MAX_ENUMERATION = 10


# ---------------------------------------------------------------------------
# partitions


@dataclass(frozen=True)
class Partition:
    """Background block plus disjoint non-empty clusters over ``range(n_total)``.

    Stored canonically (clusters sorted by their minimum element) so equality
    and hashing ignore cluster labels.
    """

    background: frozenset
    clusters: tuple
    n_total: int

    def __init__(self, clusters: Iterable[Iterable[int]] = (), background: Iterable[int] = (),
                 n_total: int | None = None):
        cl = [frozenset(int(i) for i in c) for c in clusters]
        if any(len(c) == 0 for c in cl):
            raise ValueError("clusters must be non-empty")
        bg = frozenset(int(i) for i in background)
        cl.sort(key=min)
        members = sum(len(c) for c in cl) + len(bg)
        union = bg.union(*cl) if cl else bg
        if len(union) != members:
            raise ValueError("clusters and background must be disjoint")
        n = members if n_total is None else int(n_total)
        if union != frozenset(range(n)):
            raise ValueError(f"blocks do not cover range({n}) exactly")
        object.__setattr__(self, "background", bg)
        object.__setattr__(self, "clusters", tuple(cl))
        object.__setattr__(self, "n_total", n)

    @classmethod
    def from_labels(cls, z: Sequence[int]) -> "Partition":
        """Build from labels where 0 marks the background; other values are arbitrary ids."""
        z = [int(v) for v in z]
        groups: dict[int, list[int]] = {}
        for i, lab in enumerate(z):
            groups.setdefault(lab, []).append(i)
        bg = groups.pop(0, [])
        return cls(groups.values(), bg, n_total=len(z))

    def labels(self) -> np.ndarray:
        z = np.zeros(self.n_total, dtype=np.int64)
        for k, c in enumerate(self.clusters, start=1):
            z[list(c)] = k
        return z

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.clusters]

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def n_background(self) -> int:
        return len(self.background)

    def key(self) -> tuple:
        return tuple(self.labels().tolist())

    def __repr__(self):
        inner = ", ".join("{" + ",".join(map(str, sorted(c))) + "}" for c in self.clusters)
        bg = ",".join(map(str, sorted(self.background)))
        return f"Partition(C0={{{bg}}}, C=[{inner}])"


def canonical_labels(z: Sequence[int]) -> np.ndarray:
    """Relabel clusters 1..K by smallest member, keeping 0 as background."""
    z = np.asarray(z, dtype=np.int64)
    out = np.zeros_like(z)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(z.tolist()):
        if lab == 0:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping) + 1
        out[i] = mapping[lab]
    return out


def size_signature(z: Sequence[int]) -> tuple:
    """(N, sorted non-background cluster sizes) of a label vector."""
    z = np.asarray(z, dtype=np.int64)
    labs = z[z > 0]
    if labs.size == 0:
        return (int(z.size), ())
    counts = np.unique(labs, return_counts=True)[1]
    return (int(z.size), tuple(sorted(counts.tolist(), reverse=True)))


# ---------------------------------------------------------------------------
# V-coefficients


@dataclass
class VCoefficientTable:
    """Memo of log V_{N,K} for one weight prior and latent mass L̄(X)."""

    prior: GammaWeightPrior
    lbar_value: float
    truncation_tol: float = 1e-12
    log_v: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        if not self.lbar_value >= 0:
            raise ValueError("lbar_value must be non-negative")

    @classmethod
    def for_domain(cls, prior: GammaWeightPrior, domain: Domain, truncation_tol: float = 1e-12):
        return cls(prior, prior.lbar(domain), truncation_tol)

    @property
    def log_new_cluster_ratio(self) -> float:
        """log V_{N,K+1}/V_{N,K} = log L̄ + alpha log(beta/(1+beta))."""
        if self.lbar_value == 0:
            return -math.inf
        return math.log(self.lbar_value) + self.prior.alpha * self.prior.log_q

    def invalidate(self, prior: GammaWeightPrior | None = None, lbar_value: float | None = None):
        with self._lock:
            if prior is not None:
                self.prior = prior
            if lbar_value is not None:
                self.lbar_value = lbar_value
            self.log_v.clear()


SERIES_MAX_LBAR = 1e4


def _log_poisson_series(lbar: float, k: int, alpha: float, log_q: float, tol: float) -> float:
    """log sum_{L>=k} Po(L|lbar) L!/(L-k)! q^{L alpha}, summed with a tail bound."""
    if lbar == 0.0:
        return 0.0 if k == 0 else -math.inf
    log_l = math.log(lbar)

    def log_term(L):
        return -lbar + L * log_l - math.lgamma(L - k + 1) + L * alpha * log_q

    L = k
    first = log_term(L)
    log_rate = log_l + alpha * log_q
    acc = 1.0  # running sum relative to exp(base)
    base = 0.0
    cur = 0.0  # log of the current term relative to the first
    floor = lbar + 10.0 * math.sqrt(lbar) + k
    while True:
        L += 1
        cur += log_rate - math.log(L - k)
        if cur - base > 600.0:
            acc *= math.exp(base - cur)
            base = cur
        term = math.exp(cur - base)
        acc += term
        if L > floor:
            # successive ratios shrink, so the tail is bounded by a geometric series
            r_next = math.exp(log_rate - math.log(L + 1 - k))
            if r_next < 1.0 and term * r_next / (1.0 - r_next) < tol * acc:
                break
        if L - k > 1_000_000:  # pragma: no cover - defensive
            warnings.warn("V-coefficient series did not reach tolerance", RuntimeWarning)
            break
    return first + base + math.log(acc)


def log_v_coefficient(table: VCoefficientTable, n: int, k: int) -> float:
    """log V_{n,k}; memoized on the table."""
    n, k = int(n), int(k)
    if k < 0 or n < 0 or k > n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    key = (n, k)
    hit = table.log_v.get(key)
    if hit is not None:
        return hit
    p = table.prior
    if table.lbar_value > SERIES_MAX_LBAR:
        # the series would need ~L̄ terms; its closed form is exact
        val = log_v_closed_form(p, table.lbar_value, n, k)
    else:
        val = (-math.lgamma(n + 1) - n * math.log1p(p.beta)
               + _log_poisson_series(table.lbar_value, k, p.alpha, p.log_q, table.truncation_tol))
    with table._lock:
        table.log_v[key] = val
    return val


def log_v_closed_form(prior: GammaWeightPrior, lbar_value: float, n: int, k: int) -> float:
    """Closed form of the V series: (1+β)^-N/N! · e^{-L̄(1-q^α)} (L̄ q^α)^K."""
    if lbar_value == 0:
        base = 0.0 if k == 0 else -math.inf
        return -math.lgamma(n + 1) - n * math.log1p(prior.beta) + base
    qa = math.exp(prior.alpha * prior.log_q)
    return (-math.lgamma(n + 1) - n * math.log1p(prior.beta) - lbar_value * (1.0 - qa)
            + k * (math.log(lbar_value) + prior.alpha * prior.log_q))


def _log_rising_product(sizes: Iterable[int], alpha: float) -> float:
    lga = math.lgamma(alpha)
    return sum(math.lgamma(s + alpha) - lga for s in sizes)


def log_eppf(partition: Partition, table: VCoefficientTable) -> float:
    """log p(N, C) for a partition without background points."""
    if partition.background:
        raise ValueError("partition has background points; use log_eppf_with_background")
    return (log_v_coefficient(table, partition.n_total, partition.n_clusters)
            + _log_rising_product(partition.sizes, table.prior.alpha))


def log_eppf_with_background(partition: Partition, table: VCoefficientTable, w0: float) -> float:
    """log p(N, C0, C) with integrated background intensity ``w0``."""
    n = partition.n_total
    n0 = partition.n_background
    if w0 < 0:
        raise ValueError("w0 must be non-negative")
    if n0 == 0:
        bg = -w0
    elif w0 == 0:
        return -math.inf
    else:
        bg = -w0 + n0 * math.log(w0)
    return (math.lgamma(n - n0 + 1) - math.lgamma(n + 1) + bg
            + log_v_coefficient(table, n - n0, partition.n_clusters)
            + _log_rising_product(partition.sizes, table.prior.alpha))


def log_crp_eppf(partition: Partition, gamma: float) -> float:
    """Blackwell-MacQueen partition probability p(C | N)."""
    n = partition.n_total - partition.n_background
    k = partition.n_clusters
    return (k * math.log(gamma) + math.lgamma(gamma) - math.lgamma(gamma + n)
            + sum(math.lgamma(s) for s in partition.sizes))


def log_dpmm_limit_with_background(partition: Partition, gamma: float, w0: float, beta: float) -> float:
    """Small-alpha limit of :func:`log_eppf_with_background` at fixed alpha L q^alpha = gamma.

    Defined up to a constant in N, chosen so that without background points
    it equals the CRP probability. Each background point carries a factor
    w0 (1 + beta) relative to a new cluster's gamma.
    """
    n = partition.n_total
    n0 = partition.n_background
    k = partition.n_clusters
    if n0 and w0 == 0:
        return -math.inf
    bg = n0 * (math.log(w0) + math.log1p(beta)) if n0 else 0.0
    return (k * math.log(gamma) + math.lgamma(gamma) - math.lgamma(gamma + n)
            + sum(math.lgamma(s) for s in partition.sizes) + bg - w0)


def log_pitman_yor_eppf(partition: Partition, gamma: float, delta: float) -> float:
    """Two-parameter (strength gamma, discount delta) partition probability p(C | N)."""
    n = partition.n_total
    sizes = partition.sizes
    out = math.lgamma(gamma + 1) - math.lgamma(gamma + n)
    for i in range(1, len(sizes)):
        w = gamma + i * delta
        if w <= 0:
            return -math.inf
        out += math.log(w)
    for s in sizes:
        out += math.lgamma(s - delta) - math.lgamma(1 - delta)
    return out


# ---------------------------------------------------------------------------
# number of points and number of latent events


def _log_nb(n: int, r: float, log_q: float, beta: float) -> float:
    """log NB(n | r, 1/(1+beta)); NB(n | 0, .) is a point mass at zero."""
    if r == 0:
        return 0.0 if n == 0 else -math.inf
    return (math.lgamma(n + r) - math.lgamma(n + 1) - math.lgamma(r)
            - n * math.log1p(beta) + r * log_q)


def _log_po(L: int, lbar: float) -> float:
    if lbar == 0:
        return 0.0 if L == 0 else -math.inf
    return -lbar + L * math.log(lbar) - math.lgamma(L + 1)


def _latent_terms(table: VCoefficientTable, n: int, l_max: int | None = None):
    """Yield log Po(L|L̄) NB(n|Lα, 1/(1+β)) for L = 0, 1, ...

    Without ``l_max`` iteration stops once past the Poisson bulk, decreasing,
    and below tolerance relative to the running total.
    """
    p = table.prior
    lbar = table.lbar_value
    floor = lbar + 10.0 * math.sqrt(lbar) + 10
    running = -math.inf
    prev = -math.inf
    L = 0
    while True:
        t = _log_po(L, lbar) + _log_nb(n, L * p.alpha, p.log_q, p.beta)
        yield L, t
        running = np.logaddexp(running, t)
        if l_max is not None:
            if L >= l_max:
                return
        elif lbar == 0 or (L > floor and t <= prev and t - running < math.log(table.truncation_tol) - 5):
            return
        prev = t
        L += 1


def log_p_n(table: VCoefficientTable, n: int) -> float:
    """log p(N = n) under the Poisson-mixed negative binomial."""
    terms = [t for _, t in _latent_terms(table, int(n))]
    return float(np.logaddexp.reduce(terms))


@dataclass(frozen=True)
class LatentCountPosterior:
    probs: np.ndarray
    tail_mass: float
    truncated: bool


def latent_count_posterior(table: VCoefficientTable, n: int, l_max: int) -> LatentCountPosterior:
    """p(L | N=n) on L = 0..l_max, with the neglected tail mass reported."""
    head = np.array([t for _, t in _latent_terms(table, int(n), int(l_max))])
    full = log_p_n(table, n)
    tail = 0.0
    log_head = float(np.logaddexp.reduce(head))
    if np.isfinite(full):
        tail = max(0.0, 1.0 - math.exp(log_head - full))
    probs = np.exp(head - log_head)
    truncated = tail > table.truncation_tol * 1e3
    if truncated:
        warnings.warn(f"latent count posterior: tail mass {tail:.3g} beyond l_max={l_max}",
                      RuntimeWarning)
    return LatentCountPosterior(probs, tail, truncated)


# ---------------------------------------------------------------------------
# urn schemes

URN_MODES = ("nsp", "dpmm-limit", "pitman-yor", "background-nsp")


@dataclass(frozen=True)
class UrnConfig:
    mode: str
    prior: GammaWeightPrior | None = None
    lbar: float | None = None
    gamma: float | None = None
    delta: float = 0.0
    w0: float = 0.0
    # log L̄, for regimes where L̄ itself overflows (alpha in the thousands)
    log_lbar: float | None = None

    def __post_init__(self):
        if self.mode not in URN_MODES:
            raise ValueError(f"unknown urn mode {self.mode!r}")
        if self.log_lbar is not None and self.lbar is None:
            lb = math.exp(self.log_lbar) if self.log_lbar < 700 else math.inf
            object.__setattr__(self, "lbar", lb)
        if self.mode in ("nsp", "background-nsp"):
            if self.prior is None or self.lbar is None or self.lbar < 0:
                raise ValueError(f"{self.mode} urn needs a prior and lbar >= 0")
            if self.w0 < 0:
                raise ValueError("w0 must be non-negative")
        else:
            if self.gamma is None:
                raise ValueError(f"{self.mode} urn needs gamma")
        if self.mode == "dpmm-limit" and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.mode == "pitman-yor":
            if not self.delta < 1:
                raise ValueError("pitman-yor discount must be < 1")
            if self.delta >= 0 and not self.gamma > -self.delta:
                raise ValueError("pitman-yor strength must exceed -discount")
            if self.delta < 0:
                n_atoms = self.gamma / -self.delta
                if abs(n_atoms - round(n_atoms)) > 1e-9 or round(n_atoms) < 1:
                    raise ValueError("negative discount requires gamma = L*|delta| for integer L")

    @classmethod
    def nsp(cls, prior: GammaWeightPrior, domain: Domain) -> "UrnConfig":
        return cls("nsp", prior=prior, lbar=prior.lbar(domain))

    @classmethod
    def nsp_concentration(cls, alpha: float, beta: float, gamma: float) -> "UrnConfig":
        """NSP urn on a unit-measure window with L̄ chosen so that alpha L̄ q^alpha = gamma."""
        prior = GammaWeightPrior(alpha, beta, 1.0)
        log_lbar = math.log(gamma) - math.log(alpha) - alpha * prior.log_q
        return cls("nsp", prior=prior, log_lbar=log_lbar)

    @classmethod
    def with_background(cls, prior: GammaWeightPrior, domain: Domain, bg_rate: float) -> "UrnConfig":
        return cls("background-nsp", prior=prior, lbar=prior.lbar(domain), w0=bg_rate * domain.measure())

    def weights(self) -> tuple[float, float, float, float]:
        """(join offset, new constant, new slope per cluster, background weight)."""
        if self.mode in ("nsp", "background-nsp"):
            a = self.prior.alpha
            if self.log_lbar is not None:
                new = math.exp(math.log(a) + self.log_lbar + a * self.prior.log_q)
            else:
                new = a * self.lbar * math.exp(a * self.prior.log_q) if self.lbar > 0 else 0.0
            bg = self.w0 * (1.0 + self.prior.beta) if self.mode == "background-nsp" else 0.0
            return a, new, 0.0, bg
        if self.mode == "dpmm-limit":
            return 0.0, self.gamma, 0.0, 0.0
        return -self.delta, self.gamma, self.delta, 0.0


def urn_step_probabilities(partition: Partition, config: UrnConfig):
    """Options and probabilities for placing index ``partition.n_total``.

    Options are ``("background",)``, ``("join", k)`` with k indexing
    ``partition.clusters``, and ``("new",)``.
    """
    join, new_c, new_s, bg = config.weights()
    K = partition.n_clusters
    opts, w = [], []
    if config.mode == "background-nsp":
        opts.append(("background",))
        w.append(bg)
    for k, s in enumerate(partition.sizes):
        opts.append(("join", k))
        w.append(s + join)
    new_w = new_c + new_s * K
    if new_w < -1e-12:
        raise ValueError("urn weight for a new cluster is negative")
    opts.append(("new",))
    w.append(max(new_w, 0.0))
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("negative urn weight")
    return opts, w / w.sum()


def urn_step(partition: Partition, config: UrnConfig, rng) -> Partition:
    gen = as_generator(rng)
    opts, probs = urn_step_probabilities(partition, config)
    choice = opts[int(gen.choice(len(opts), p=probs))]
    n = partition.n_total
    clusters = [set(c) for c in partition.clusters]
    bg = set(partition.background)
    if choice[0] == "background":
        bg.add(n)
    elif choice[0] == "join":
        clusters[choice[1]].add(n)
    else:
        clusters.append({n})
    return Partition(clusters, bg, n_total=n + 1)


def sample_partition_labels(n: int, config: UrnConfig, n_draws: int, rng) -> np.ndarray:
    """``n_draws`` independent sequential urn runs; returns canonical label rows.

    Each step uses :func:`urn_step_probabilities`. For the ``nsp`` and
    ``background-nsp`` modes with alpha > 0 the new-cluster weight does not
    depend on the step, and the resulting law is close to, but not exactly,
    p(C | N=n). Use :func:`sample_exact_partition_labels` for exact draws.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    gen = as_generator(rng)
    u = gen.random((int(n_draws), int(n)))
    join, new_c, new_s, bg = config.weights()
    return _kernels.urn_labels(int(n), float(join), float(new_c), float(new_s), float(bg), u)


def sample_partition(n: int, config: UrnConfig, rng) -> Partition:
    """One partition of ``range(n)`` distributed as p(C | N=n).

    NSP modes go through :func:`sample_exact_partition_labels`; the
    ``dpmm-limit`` and ``pitman-yor`` urns are exact as sequential schemes.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return Partition.from_labels(sample_exact_partition_labels(n, config, 1, rng)[0])


def sample_finite_urn_labels(n: int, n_latent: int, alpha: float, n_draws: int, rng) -> np.ndarray:
    """Labels of ``n`` points spread over ``n_latent`` symmetric Dirichlet(alpha) atoms.

    The sequential form joins an occupied atom with weight |c| + alpha and
    opens one of the remaining ``n_latent - K`` atoms with weight
    (n_latent - K) alpha. Labels are canonical and atoms never drawn are dropped.
    """
    if n_latent < 1 and n > 0:
        raise ValueError("n points need at least one latent event")
    gen = as_generator(rng)
    u = gen.random((int(n_draws), int(n)))
    return _kernels.urn_labels(int(n), float(alpha), float(n_latent * alpha), float(-alpha), 0.0, u)


MAX_LATENT_GRID = 2_000_000


def _latent_joint_grid(config: UrnConfig, n: int):
    """Joint posterior of (background count, latent count) given n points.

    Returns ``(m, L, probs)`` flattened over the retained grid. The latent
    range grows until the Poisson x negative-binomial terms have decayed well
    below double precision relative to the mass already collected.
    """
    p = config.prior
    lbar = config.lbar
    w0 = config.w0 if config.mode == "background-nsp" else 0.0
    if not np.isfinite(lbar) or lbar > MAX_LATENT_GRID / 4:
        raise ValueError("expected latent count too large for exact partition sampling")
    m = np.arange(n + 1) if w0 > 0 else np.zeros(1, dtype=np.int64)
    k = n - m
    log_m = -w0 + m * (math.log(w0) if w0 > 0 else 0.0) - gammaln(m + 1)
    l_max = int(lbar + 12 * math.sqrt(lbar) + 32)
    while True:
        L = np.arange(1, l_max + 1)
        r = L[:, None] * p.alpha
        log_nb = (gammaln(k[None, :] + r) - gammaln(k[None, :] + 1) - gammaln(r)
                  - k[None, :] * math.log1p(p.beta) + r * p.log_q)
        log_po = -lbar + L * math.log(lbar) - gammaln(L + 1) if lbar > 0 else np.full(L.shape, -np.inf)
        t = log_po[:, None] + log_nb + log_m[None, :]
        if n == 0 or w0 > 0:
            # L = 0 is possible when every point is background (or there are none)
            t0 = np.full((1, len(m)), -np.inf)
            t0[0, k == 0] = -lbar + log_m[k == 0]
            t = np.vstack([t0, t])
            L = np.arange(0, l_max + 1)
        top = float(np.max(t))
        tail = float(np.max(t[-1]))
        if (tail - top < -50 and np.all(np.diff(t[-8:], axis=0) <= 0)) or l_max >= MAX_LATENT_GRID:
            break
        l_max *= 2
    w = np.exp(t - top)
    w /= w.sum()
    LL, MM = np.meshgrid(L, m, indexing="ij")
    keep = w.ravel() > 0
    return MM.ravel()[keep], LL.ravel()[keep], w.ravel()[keep]


def sample_exact_partition_labels(n: int, config: UrnConfig, n_draws: int, rng) -> np.ndarray:
    """Exact draws from p(C | N=n) for the ``nsp`` and ``background-nsp`` urns.

    Each draw first samples the latent event count (and, with background, the
    number of background points) from its posterior given n, then places the
    cluster points with :func:`sample_finite_urn_labels`. Background points
    are a uniformly random subset and get label 0.
    """
    if config.mode not in ("nsp", "background-nsp"):
        return sample_partition_labels(n, config, n_draws, rng)
    if n < 0:
        raise ValueError("n must be non-negative")
    gen = as_generator(rng)
    n_draws = int(n_draws)
    out = np.zeros((n_draws, n), dtype=np.int64)
    if n == 0:
        return out
    m, L, probs = _latent_joint_grid(config, n)
    pick = gen.choice(len(probs), size=n_draws, p=probs)
    a = config.prior.alpha
    for idx in np.unique(pick):
        rows = np.flatnonzero(pick == idx)
        n0, n_lat = int(m[idx]), int(L[idx])
        nc = n - n0
        if nc:
            sub = sample_finite_urn_labels(nc, n_lat, a, len(rows), gen)
        if n0 == 0:
            out[rows] = sub
            continue
        for j, r in enumerate(rows):
            is_bg = np.zeros(n, dtype=bool)
            is_bg[gen.choice(n, n0, replace=False)] = True
            if nc:
                out[r, ~is_bg] = sub[j]
    return out


def sample_nsp_size(config: UrnConfig, rng, size: int | None = None):
    """N ~ NB(L̃α, (1+β)^-1) with L̃ ~ Po(L̄)."""
    gen = as_generator(rng)
    p = config.prior
    n_lat = gen.poisson(config.lbar, size=size)
    r = n_lat * p.alpha
    q = p.beta / (1.0 + p.beta)
    if size is None:
        return int(gen.negative_binomial(r, q)) if n_lat > 0 else 0
    out = np.zeros(size, dtype=np.int64)
    pos = n_lat > 0
    out[pos] = gen.negative_binomial(r[pos], q)
    return out


def empty_cluster_rate(prior: GammaWeightPrior, lbar_value: float) -> float:
    return lbar_value * math.exp(prior.alpha * prior.log_q)


def sample_empty_cluster_count(prior: GammaWeightPrior, domain: Domain, rng) -> int:
    """Number of latent events with no observed points: Po(L̄ (β/(1+β))^α)."""
    return int(as_generator(rng).poisson(empty_cluster_rate(prior, prior.lbar(domain))))


# ---------------------------------------------------------------------------
# enumeration


def _set_partitions(items: list[int]) -> Iterator[list[list[int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for sub in _set_partitions(rest):
        for i in range(len(sub)):
            yield sub[:i] + [[first] + sub[i]] + sub[i + 1:]
        yield [[first]] + sub


def enumerate_partitions(n: int) -> list[Partition]:
    """All set partitions of ``range(n)`` (Bell(n) of them), no background."""
    if n > MAX_ENUMERATION:
        raise ValueError(f"refusing to enumerate partitions of n={n} > {MAX_ENUMERATION}")
    if n < 0:
        raise ValueError("n must be non-negative")
    return [Partition(p, n_total=n) for p in _set_partitions(list(range(n)))]


def enumerate_background_partitions(n: int) -> list[Partition]:
    """Every (C0, C): a background subset plus a set partition of the rest."""
    if n > MAX_ENUMERATION:
        raise ValueError(f"refusing to enumerate partitions of n={n} > {MAX_ENUMERATION}")
    out = []
    for mask in range(2 ** n):
        bg = [i for i in range(n) if mask >> i & 1]
        rest = [i for i in range(n) if not mask >> i & 1]
        for p in _set_partitions(rest):
            out.append(Partition(p, bg, n_total=n))
    return out
