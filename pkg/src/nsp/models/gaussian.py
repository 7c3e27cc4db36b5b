"""Spatial clusters with full-covariance Gaussian impulse responses.

Two location priors are available with the inverse-Wishart covariance prior:

uniform  m ~ Unif(window). Marginals integrate m over all of R^D, which is
         exact up to the mass of the cluster falling outside the window.
         A singleton then has marginal 1/|window|.
niw      m ~ N(mu0, Σ/kappa0), the fully conjugate normal-inverse-Wishart.

Statistics are accumulated on points centred at mu0.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .. import _kernels
from ..domain import Domain, MarkedPoint, as_generator
from .base import ClusterModel


def _log_mvgamma(a: float, D: int) -> float:
    return 0.25 * D * (D - 1) * math.log(math.pi) + sum(math.lgamma(a - 0.5 * j) for j in range(D))


@functools.lru_cache(maxsize=None)
def _tril(D):
    return np.tril_indices(D, -1)


def sample_invwishart(gen: np.random.Generator, dof: float, scale: np.ndarray,
                      inv_chol: np.ndarray | None = None) -> np.ndarray:
    """IW(dof, scale) draw via the Bartlett factor of the matching Wishart.

    ``inv_chol`` may carry a cached Cholesky factor of ``inv(scale)``.
    """
    D = scale.shape[0]
    chol = np.linalg.cholesky(np.linalg.inv(scale)) if inv_chol is None else inv_chol
    A = np.zeros((D, D))
    diag = np.sqrt(gen.chisquare(dof - np.arange(D)))
    for i in range(D):
        A[i, i] = diag[i]
    if D > 1:
        low = _tril(D)
        A[low] = gen.standard_normal(len(low[0]))
    LA = chol @ A
    cov = np.linalg.inv(LA @ LA.T)
    return 0.5 * (cov + cov.T)


def mvn_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    chol = np.linalg.cholesky(cov)
    r = np.linalg.solve(chol, x - mean)
    return float(-0.5 * (x.size * math.log(2.0 * math.pi) + r @ r) - np.sum(np.log(np.diag(chol))))


@dataclass(frozen=True)
class GaussianModelConfig:
    iw_dof: float
    iw_scale: np.ndarray
    niw_kappa: float = 0.01
    niw_mu: np.ndarray | None = None
    location: str = "uniform"

    def __post_init__(self):
        if self.location not in ("uniform", "niw"):
            raise ValueError(f"unknown location prior {self.location!r}")
        psi = np.atleast_2d(np.asarray(self.iw_scale, dtype=float))
        object.__setattr__(self, "iw_scale", psi)
        D = psi.shape[0]
        if psi.shape != (D, D) or not np.allclose(psi, psi.T):
            raise ValueError("iw_scale must be a symmetric square matrix")
        if np.any(np.linalg.eigvalsh(psi) <= 0):
            raise ValueError("iw_scale must be positive definite")
        if not self.iw_dof > D - 1:
            raise ValueError("iw_dof must exceed D - 1")
        if not self.niw_kappa > 0:
            raise ValueError("niw_kappa must be positive")
        if self.niw_mu is not None:
            object.__setattr__(self, "niw_mu", np.asarray(self.niw_mu, dtype=float).reshape(D))

    @property
    def dim(self) -> int:
        return self.iw_scale.shape[0]

    @classmethod
    def matched_to_domain(cls, domain: Domain, iw_dof: float, iw_scale,
                          location: str = "niw") -> "GaussianModelConfig":
        """Pick kappa0 so the location prior's variance matches a uniform on ``domain``."""
        psi = np.atleast_2d(np.asarray(iw_scale, dtype=float))
        D = psi.shape[0]
        if not iw_dof > D + 1:
            raise ValueError("matching needs iw_dof > D + 1 (finite prior mean covariance)")
        mean_cov = np.mean(np.diag(psi)) / (iw_dof - D - 1)
        unif_var = np.mean(domain.widths ** 2) / 12.0
        return cls(iw_dof, psi, mean_cov / unif_var, domain.center, location)

    def to_json(self) -> dict:
        return {"iw_dof": self.iw_dof, "iw_scale": self.iw_scale.tolist(),
                "niw_kappa": self.niw_kappa,
                "niw_mu": None if self.niw_mu is None else self.niw_mu.tolist(),
                "location": self.location}


@dataclass(frozen=True, eq=False)
class GaussStats:
    n: int
    sx: np.ndarray
    sxx: np.ndarray

    @property
    def size(self) -> int:
        return self.n

    def __eq__(self, other):
        return (isinstance(other, GaussStats) and self.n == other.n
                and np.array_equal(self.sx, other.sx) and np.array_equal(self.sxx, other.sxx))


class GaussianModel(ClusterModel):
    name = "gaussian"

    def __init__(self, config: GaussianModelConfig, domain: Domain):
        if config.dim != domain.dim:
            raise ValueError("model and domain dimensions differ")
        self.config = config
        self.domain = domain
        self.D = config.dim
        self.mu0 = domain.center if config.niw_mu is None else config.niw_mu
        self.nu0 = float(config.iw_dof)
        self.psi0 = config.iw_scale
        self.uniform = config.location == "uniform"
        # flat location: predictive is the NIW one at kappa0 = 0 with one dof fewer
        self.kappa0 = 0.0 if self.uniform else float(config.niw_kappa)
        self._kernel_nu0 = self.nu0 - 1.0 if self.uniform else self.nu0
        self._log_window = math.log(domain.measure())
        self._psi0_inv_chol = np.linalg.cholesky(np.linalg.inv(self.psi0))
        self._empty = GaussStats(0, np.zeros(self.D), np.zeros((self.D, self.D)))
        self._new_args = (np.zeros(1), np.zeros((1, self.D)), np.zeros((1, self.D, self.D)))

    def prepare(self, point: MarkedPoint) -> np.ndarray:
        if point.mark is not None:
            raise ValueError("gaussian model points carry no mark")
        x = np.asarray(point.x, dtype=float) - self.mu0
        if x.shape != (self.D,):
            raise ValueError("point dimension does not match the model")
        return x

    def obs(self, point):
        return self.prepare(point) if isinstance(point, MarkedPoint) else point

    def empty_stats(self) -> GaussStats:
        return self._empty

    def stats_add(self, stats: GaussStats, point) -> GaussStats:
        x = self.obs(point)
        return GaussStats(stats.n + 1, stats.sx + x, stats.sxx + np.outer(x, x))

    def stats_remove(self, stats: GaussStats, point) -> GaussStats:
        if stats.n <= 0:
            raise ValueError("cannot remove a point from empty statistics")
        x = self.obs(point)
        if stats.n == 1:
            return self._empty
        return GaussStats(stats.n - 1, stats.sx - x, stats.sxx - np.outer(x, x))

    def log_predictive(self, stats: GaussStats, point) -> float:
        x = self.obs(point)
        if stats.n == 0:
            return self.log_marginal_new(x)
        return float(_kernels.niw_log_predictive(
            np.array([float(stats.n)]), stats.sx[None], stats.sxx[None], x,
            self.kappa0, self._kernel_nu0, self.psi0)[0])

    def log_predictive_many(self, stats_list, point) -> np.ndarray:
        x = self.obs(point)
        if not stats_list:
            return np.zeros(0)
        ns = np.array([float(s.n) for s in stats_list])
        sx = np.stack([s.sx for s in stats_list])
        sxx = np.stack([s.sxx for s in stats_list])
        empty = ns == 0
        if self.uniform and empty.any():
            # the improper kernel has no n=0 limit; an empty cluster predicts the window density
            out = np.full(ns.size, -self._log_window)
            if not empty.all():
                out[~empty] = _kernels.niw_log_predictive(ns[~empty], sx[~empty], sxx[~empty], x,
                                                          self.kappa0, self._kernel_nu0, self.psi0)
            return out
        return _kernels.niw_log_predictive(ns, sx, sxx, x, self.kappa0, self._kernel_nu0, self.psi0)

    def log_marginal_new(self, point) -> float:
        if self.uniform:
            return -self._log_window
        x = self.obs(point)
        return float(_kernels.niw_log_predictive(*self._new_args, x, self.kappa0, self.nu0, self.psi0)[0])

    def _posterior(self, stats: GaussStats):
        kn = self.kappa0 + stats.n
        nun = self._kernel_nu0 + stats.n
        mun = stats.sx / kn
        psin = self.psi0 + stats.sxx - kn * np.outer(mun, mun)
        return kn, nun, mun, 0.5 * (psin + psin.T)

    def log_marginal(self, stats: GaussStats) -> float:
        if stats.n == 0:
            return 0.0
        kn, nun, _, psin = self._posterior(stats)
        D = self.D
        if self.uniform:
            n = stats.n
            return float(-self._log_window - 0.5 * (n - 1) * D * math.log(math.pi) - 0.5 * D * math.log(n)
                         + _log_mvgamma(0.5 * nun, D) - _log_mvgamma(0.5 * self.nu0, D)
                         + 0.5 * self.nu0 * np.linalg.slogdet(self.psi0)[1]
                         - 0.5 * nun * np.linalg.slogdet(psin)[1])
        return float(-0.5 * stats.n * D * math.log(math.pi)
                     + _log_mvgamma(0.5 * nun, D) - _log_mvgamma(0.5 * self.nu0, D)
                     + 0.5 * self.nu0 * np.linalg.slogdet(self.psi0)[1]
                     - 0.5 * nun * np.linalg.slogdet(psin)[1]
                     + 0.5 * D * (math.log(self.kappa0) - math.log(kn)))

    def sample_posterior_params(self, stats: GaussStats, rng):
        gen = as_generator(rng)
        kn, nun, mun, psin = self._posterior(stats)
        cov = sample_invwishart(gen, nun, psin)
        chol = np.linalg.cholesky(cov / kn)
        m = self.mu0 + mun + chol @ gen.standard_normal(self.D)
        if self.uniform:
            # the location prior lives on the window
            for _ in range(1000):
                if self.domain.contains(m):
                    break
                m = self.mu0 + mun + chol @ gen.standard_normal(self.D)
            else:
                m = np.clip(m, self.domain.lower, self.domain.upper)
        return m, {"cov": cov}

    def sample_prior_params(self, rng):
        gen = as_generator(rng)
        cov = sample_invwishart(gen, self.nu0, self.psi0, self._psi0_inv_chol)
        m = self.domain.sample_uniform(gen, 1)[0]
        return m, {"cov": cov}

    def log_emission(self, point, m, theta) -> float:
        x = self.obs(point) + self.mu0
        return mvn_logpdf(x, np.asarray(m, dtype=float), np.asarray(theta["cov"], dtype=float))

    def sample_points(self, m, theta, n, rng, truncate=True):
        gen = as_generator(rng)
        m = np.asarray(m, dtype=float)
        chol = np.linalg.cholesky(np.asarray(theta["cov"], dtype=float))
        out = []
        tries = 0
        while len(out) < n:
            need = n - len(out)
            xs = m + gen.standard_normal((need, self.D)) @ chol.T
            if truncate:
                xs = xs[self.domain.contains_many(xs)]
                tries += 1
                if tries > 10000:
                    raise RuntimeError("truncated emission: acceptance rate too low")
            out.extend(MarkedPoint(x) for x in xs)
        return out

    def box_mass(self, m, theta, lower, upper, group=None) -> float:
        cov = np.asarray(theta["cov"], dtype=float)
        m = np.asarray(m, dtype=float)
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if self.D == 1:
            sd = math.sqrt(cov[0, 0])
            return float(sps.norm.cdf(upper[0], m[0], sd) - sps.norm.cdf(lower[0], m[0], sd))
        return float(sps.multivariate_normal(m, cov).cdf(upper, lower_limit=lower))

    def emission_scale(self) -> float:
        D = self.D
        if self.nu0 > D + 1:
            return float(math.sqrt(np.max(np.diag(self.psi0)) / (self.nu0 - D - 1)))
        return float(math.sqrt(np.max(np.diag(self.psi0)) / self.nu0))

    def theta_to_json(self, theta):
        return {"cov": np.asarray(theta["cov"]).tolist()}

    def theta_from_json(self, obj):
        return {"cov": np.asarray(obj["cov"], dtype=float)}

    def config_json(self) -> dict:
        return {"kind": "gaussian", **self.config.to_json()}
