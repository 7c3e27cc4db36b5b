"""Small models and utilities shared by the test modules."""

import math

import numpy as np

from nsp.domain import Domain, MarkedPoint, as_generator
from nsp.models import GaussianModel, GaussianModelConfig
from nsp.models.base import ClusterModel


class PointMassModel(ClusterModel):
    """Every offspring sits exactly on its parent. Only partitions matter.

    Cheap enough for 10^5-draw simulation studies where emission would
    otherwise dominate the runtime.
    """

    name = "point-mass"

    def __init__(self, domain: Domain):
        self.domain = domain

    def prepare(self, point):
        return np.asarray(point.x)

    def empty_stats(self):
        return 0

    def stats_add(self, stats, point):
        return stats + 1

    def stats_remove(self, stats, point):
        return stats - 1

    def log_marginal_new(self, point):
        return 0.0

    def log_predictive(self, stats, point):
        return 0.0

    def log_marginal(self, stats):
        return 0.0

    def sample_prior_params(self, rng):
        return self.domain.sample_uniform(as_generator(rng), 1)[0], None

    def sample_posterior_params(self, stats, rng):
        return self.sample_prior_params(rng)

    def log_emission(self, point, m, theta):
        return 0.0

    def sample_points(self, m, theta, n, rng, truncate=True):
        p = MarkedPoint(m)
        return [p] * n

    def box_mass(self, m, theta, lower, upper, group=None):
        return float(np.all((np.asarray(m) >= lower) & (np.asarray(m) <= upper)))

    def config_json(self):
        return {"kind": "point-mass"}


class ConjugateGaussian(GaussianModel):
    """NIW Gaussian whose generative location prior is the NIW one.

    Simulating from this class and fitting with it is exactly consistent when
    emission is not truncated, which is what joint-distribution tests need.
    """

    def sample_prior_params(self, rng):
        gen = as_generator(rng)
        m, theta = super().sample_prior_params(gen)
        cov = theta["cov"]
        m = self.mu0 + np.linalg.cholesky(cov / self.kappa0) @ gen.standard_normal(self.D)
        return m, theta


def conjugate_gaussian(domain: Domain, dof=6.0, scale=0.01, kappa=0.05) -> ConjugateGaussian:
    D = domain.dim
    return ConjugateGaussian(GaussianModelConfig(dof, np.eye(D) * scale, kappa, domain.center, "niw"), domain)


def batch_mean_se(x, n_batches=50) -> float:
    """Standard error of the mean of an autocorrelated series by batch means."""
    x = np.asarray(x, dtype=float)
    b = len(x) // n_batches
    means = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))
