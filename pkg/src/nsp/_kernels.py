"""Hot numeric kernels.

Every kernel exists twice: an explicit-loop version compiled with ``numba.njit``
and a pure-numpy version. The module-level names point at the numba versions
unless ``NSP_DISABLE_NUMBA`` is set to a truthy value (or numba is missing).
Both variants stay importable as ``numba_impl`` / ``numpy_impl`` so tests and
``benchmarks/bench_kernels.py`` can compare them directly.

Randomness never enters a kernel as RNG state: callers pass pre-drawn uniforms,
which keeps the two paths interchangeable under a fixed seed.
"""

from __future__ import annotations

import math
import os
from types import SimpleNamespace

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_flag = os.environ.get("NSP_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag not in {"1", "true", "yes", "on"}


# ---------------------------------------------------------------------------
# categorical sampling from unnormalized log weights


def _log_categorical_loop(logw, u):
    n = logw.shape[0]
    mx = -np.inf
    for i in range(n):
        if logw[i] > mx:
            mx = logw[i]
    if mx == -np.inf:
        return -1
    total = 0.0
    for i in range(n):
        total += math.exp(logw[i] - mx)
    target = u * total
    acc = 0.0
    last = -1
    for i in range(n):
        if logw[i] == -np.inf:
            continue
        acc += math.exp(logw[i] - mx)
        last = i
        if acc > target:
            return i
    return last


def _log_categorical_numpy(logw, u):
    mx = np.max(logw)
    if mx == -np.inf:
        return -1
    p = np.exp(logw - mx)
    c = np.cumsum(p)
    i = int(np.searchsorted(c, u * c[-1], side="right"))
    if i >= len(c):
        i = len(c) - 1
    while p[i] == 0.0:
        i -= 1
    return i


# ---------------------------------------------------------------------------
# sequential urn schemes, many independent draws at once
#
# join weight for cluster k: size_k + join_offset
# new-cluster weight:        new_const + new_slope * n_clusters
# background weight:         bg_weight (label 0)
# labels 1..K follow order of creation, i.e. clusters ordered by minimum index.


def _urn_labels_loop(n, join_offset, new_const, new_slope, bg_weight, u):
    n_draws = u.shape[0]
    labels = np.zeros((n_draws, n), dtype=np.int64)
    counts = np.zeros(n + 1, dtype=np.float64)
    for d in range(n_draws):
        for k in range(n + 1):
            counts[k] = 0.0
        K = 0
        for i in range(n):
            new_w = new_const + new_slope * K
            if new_w < -1e-12:
                raise ValueError("urn weight for a new cluster is negative")
            if new_w < 0.0:
                new_w = 0.0
            total = bg_weight + new_w
            for k in range(1, K + 1):
                total += counts[k] + join_offset
            target = u[d, i] * total
            acc = bg_weight
            if acc > target and bg_weight > 0.0:
                labels[d, i] = 0
                continue
            chosen = K + 1
            for k in range(1, K + 1):
                acc += counts[k] + join_offset
                if acc > target:
                    chosen = k
                    break
            if chosen == K + 1:
                if new_w <= 0.0:
                    chosen = K if K > 0 else 0
                else:
                    K += 1
            labels[d, i] = chosen
            if chosen > 0:
                counts[chosen] += 1.0
    return labels


def _urn_labels_numpy(n, join_offset, new_const, new_slope, bg_weight, u):
    n_draws = u.shape[0]
    labels = np.zeros((n_draws, n), dtype=np.int64)
    counts = np.zeros((n_draws, n + 2), dtype=np.float64)
    K = np.zeros(n_draws, dtype=np.int64)
    cols = np.arange(n + 2)
    rows = np.arange(n_draws)
    for i in range(n):
        new_w = new_const + new_slope * K
        if np.any(new_w < -1e-12):
            raise ValueError("urn weight for a new cluster is negative")
        new_w = np.maximum(new_w, 0.0)
        w = np.where((cols >= 1) & (cols <= K[:, None]), counts + join_offset, 0.0)
        w[:, 0] = bg_weight
        w[rows, K + 1] = new_w
        c = np.cumsum(w, axis=1)
        target = u[:, i] * c[:, -1]
        chosen = np.sum(c <= target[:, None], axis=1)
        chosen = np.minimum(chosen, K + 1)
        # guard against landing on a zero-weight slot through rounding
        zero = w[rows, chosen] <= 0.0
        if np.any(zero):
            for d in np.nonzero(zero)[0]:
                nz = np.nonzero(w[d] > 0.0)[0]
                chosen[d] = nz[np.searchsorted(nz, chosen[d]) - 1] if chosen[d] > nz[0] else nz[0]
        created = chosen == K + 1
        K = K + created
        labels[:, i] = chosen
        hit = chosen > 0
        counts[rows[hit], chosen[hit]] += 1.0
    return labels


# ---------------------------------------------------------------------------
# co-occupancy accuracy from dense integer labels


def _co_occupancy_loop(a, b, ka, kb):
    n = a.shape[0]
    table = np.zeros((ka, kb), dtype=np.float64)
    ra = np.zeros(ka, dtype=np.float64)
    rb = np.zeros(kb, dtype=np.float64)
    for i in range(n):
        table[a[i], b[i]] += 1.0
        ra[a[i]] += 1.0
        rb[b[i]] += 1.0
    both = 0.0
    for i in range(ka):
        for j in range(kb):
            both += table[i, j] * table[i, j]
    sa = 0.0
    for i in range(ka):
        sa += ra[i] * ra[i]
    sb = 0.0
    for j in range(kb):
        sb += rb[j] * rb[j]
    nn = float(n) * float(n)
    return (2.0 * both - sa - sb + nn) / nn


def _co_occupancy_numpy(a, b, ka, kb):
    n = a.shape[0]
    table = np.bincount(a * kb + b, minlength=ka * kb).astype(np.float64)
    ra = np.bincount(a, minlength=ka).astype(np.float64)
    rb = np.bincount(b, minlength=kb).astype(np.float64)
    nn = float(n) * float(n)
    return float((2.0 * np.dot(table, table) - np.dot(ra, ra) - np.dot(rb, rb) + nn) / nn)


# ---------------------------------------------------------------------------
# normal-inverse-Wishart posterior predictive (multivariate t)
#
# Sufficient statistics are sums over centred points (x - mu0), so the prior
# mean is the origin: psi_n = psi0 + sxx - kappa_n * mu_n mu_n^T.


def _niw_log_predictive_loop(ns, sx, sxx, x, kappa0, nu0, psi0):
    K = ns.shape[0]
    D = x.shape[0]
    out = np.empty(K, dtype=np.float64)
    L = np.zeros((D, D), dtype=np.float64)
    S = np.zeros((D, D), dtype=np.float64)
    mu = np.zeros(D, dtype=np.float64)
    r = np.zeros(D, dtype=np.float64)
    for k in range(K):
        n = ns[k]
        kn = kappa0 + n
        dof = nu0 + n - D + 1.0
        for i in range(D):
            mu[i] = sx[k, i] / kn
        c = (kn + 1.0) / (kn * dof)
        for i in range(D):
            for j in range(D):
                S[i, j] = (psi0[i, j] + sxx[k, i, j] - kn * mu[i] * mu[j]) * c
        # Cholesky of the scale matrix
        logdet = 0.0
        for j in range(D):
            s = S[j, j]
            for m in range(j):
                s -= L[j, m] * L[j, m]
            if s <= 0.0:
                s = 1e-300
            L[j, j] = math.sqrt(s)
            logdet += 2.0 * math.log(L[j, j])
            for i in range(j + 1, D):
                s2 = S[i, j]
                for m in range(j):
                    s2 -= L[i, m] * L[j, m]
                L[i, j] = s2 / L[j, j]
        # forward solve L r = (x - mu)
        maha = 0.0
        for i in range(D):
            s = x[i] - mu[i]
            for m in range(i):
                s -= L[i, m] * r[m]
            r[i] = s / L[i, i]
            maha += r[i] * r[i]
        out[k] = (
            math.lgamma(0.5 * (dof + D))
            - math.lgamma(0.5 * dof)
            - 0.5 * D * math.log(dof * math.pi)
            - 0.5 * logdet
            - 0.5 * (dof + D) * math.log1p(maha / dof)
        )
    return out


def _niw_log_predictive_numpy(ns, sx, sxx, x, kappa0, nu0, psi0):
    from scipy.special import gammaln

    D = x.shape[0]
    kn = kappa0 + ns
    dof = nu0 + ns - D + 1.0
    mu = sx / kn[:, None]
    scale = psi0[None] + sxx - kn[:, None, None] * mu[:, :, None] * mu[:, None, :]
    scale = scale * ((kn + 1.0) / (kn * dof))[:, None, None]
    chol = np.linalg.cholesky(scale)
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
    diff = x[None, :] - mu
    r = np.linalg.solve(chol, diff[:, :, None])[:, :, 0]
    maha = np.sum(r * r, axis=1)
    return (
        gammaln(0.5 * (dof + D))
        - gammaln(0.5 * dof)
        - 0.5 * D * np.log(dof * np.pi)
        - 0.5 * logdet
        - 0.5 * (dof + D) * np.log1p(maha / dof)
    )


# ---------------------------------------------------------------------------

numpy_impl = SimpleNamespace(
    log_categorical=_log_categorical_numpy,
    urn_labels=_urn_labels_numpy,
    co_occupancy=_co_occupancy_numpy,
    niw_log_predictive=_niw_log_predictive_numpy,
    name="numpy",
)

if HAVE_NUMBA:
    _njit = numba.njit(cache=True, nogil=True)
    numba_impl = SimpleNamespace(
        log_categorical=_njit(_log_categorical_loop),
        urn_labels=_njit(_urn_labels_loop),
        co_occupancy=_njit(_co_occupancy_loop),
        niw_log_predictive=_njit(_niw_log_predictive_loop),
        name="numba",
    )
else:  # pragma: no cover
    numba_impl = None

active = numba_impl if USE_NUMBA else numpy_impl

log_categorical = active.log_categorical
urn_labels = active.urn_labels
co_occupancy = active.co_occupancy
niw_log_predictive = active.niw_log_predictive
BACKEND = active.name
