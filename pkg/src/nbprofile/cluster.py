"""Gaussian mixture with per-cluster signal subspaces, for n << p data.

Cluster ``k`` has mean ``mu_k`` and covariance ``a_k`` on a ``d_k``
dimensional signal subspace spanned by the orthonormal columns of ``Q_k``,
``b_k`` on its orthogonal complement.  Densities only need ``Q_k``, so no
p x p covariance is ever formed or inverted.  The intrinsic dimension is
picked by Cattell's scree test on the cluster's eigenvalues; the number of
clusters by BIC.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

LOG_2PI = math.log(2.0 * math.pi)


class DegenerateFitError(RuntimeError):
    """A cluster lost (almost) all its members and retries were exhausted."""


class MonotonicityError(AssertionError):
    pass


@dataclass
class ClusterModel:
    K: int
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, p)
    bases: list  # K arrays of shape (p, d_k)
    a: np.ndarray  # signal variance per cluster
    b: np.ndarray  # noise variance per cluster
    loglik: float
    labels: np.ndarray  # hard assignments 0..K-1
    resp: np.ndarray = field(repr=False)
    loglik_trace: list = field(default_factory=list, repr=False)
    seed: int = 0
    bic: float = float("nan")
    bic_trace: dict = field(default_factory=dict)

    @property
    def dims(self) -> np.ndarray:
        return np.array([q.shape[1] for q in self.bases])

    @property
    def p(self) -> int:
        return self.means.shape[1]

    def n_parameters(self) -> float:
        return n_parameters(self.K, self.p, self.dims)

    def log_densities(self, X: np.ndarray) -> np.ndarray:
        """(n, K) array of ``log pi_k + log N(x | cluster k)``."""
        return _log_joint(np.asarray(X, dtype=float), self.weights, self.means, self.bases, self.a, self.b)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        lj = self.log_densities(X)
        return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax returns the lowest index on ties
        return np.argmax(self.log_densities(X), axis=1)


def n_parameters(K: int, p: int, dims: Sequence[int]) -> float:
    """Free parameters: weights, means, subspace orientations, a_k, b_k, d_k."""
    dims = np.asarray(dims, dtype=float)
    orient = float(np.sum(dims * (p - (dims + 1) / 2.0)))
    return (K - 1) + K * p + orient + 2 * K + K


def _log_joint(X, weights, means, bases, a, b) -> np.ndarray:
    n, p = X.shape
    K = len(weights)
    out = np.empty((n, K))
    for k in range(K):
        diff = X - means[k]
        proj = diff @ bases[k]
        ss_sig = np.einsum("ij,ij->i", proj, proj)
        ss_noise = np.maximum(np.einsum("ij,ij->i", diff, diff) - ss_sig, 0.0)
        d = bases[k].shape[1]
        out[:, k] = (
            math.log(weights[k])
            - 0.5 * (ss_sig / a[k] + ss_noise / b[k] + d * math.log(a[k]) + (p - d) * math.log(b[k]) + p * LOG_2PI)
        )
    return out


def scree_dimension(eigenvalues: np.ndarray, threshold: float = 0.2, d_max: int | None = None) -> int:
    """Last index whose eigenvalue drop exceeds ``threshold`` times the
    largest drop (at least 1, at most ``d_max``)."""
    ev = np.asarray(eigenvalues, dtype=float)
    d_max = len(ev) - 1 if d_max is None else d_max
    if d_max < 1 or len(ev) < 2:
        return 1
    drops = ev[:-1] - ev[1:]
    top = drops.max()
    if top <= 0:
        return 1
    d = int(np.flatnonzero(drops > threshold * top).max()) + 1
    return min(max(d, 1), d_max)


def _cluster_objective(nk, p, d, ev, trace, floor) -> tuple[float, float, float]:
    """Best (a, b) for dimension ``d`` and the expected complete-data
    log-likelihood contribution (up to terms not depending on d, a, b, Q)."""
    tr_sig = float(ev[:d].sum())
    tr_noise = max(trace - tr_sig, 0.0)
    b = max(tr_noise / (p - d), floor)
    a = max(tr_sig / d, b)
    obj = -0.5 * nk * (d * math.log(a) + (p - d) * math.log(b) + tr_sig / a + tr_noise / b)
    return a, b, obj


def _m_step(X, resp, prev_dims, threshold, floor):
    n, p = X.shape
    K = resp.shape[1]
    nk = resp.sum(axis=0)
    weights = nk / n
    means = (resp.T @ X) / nk[:, None]
    bases, a, b, dims = [], np.empty(K), np.empty(K), []
    for k in range(K):
        w = np.sqrt(resp[:, k] / nk[k])
        Xc = w[:, None] * (X - means[k])
        _, s, vt = np.linalg.svd(Xc, full_matrices=False)
        ev = s**2
        trace = float(np.einsum("ij,ij->", Xc, Xc))
        positive = int(np.count_nonzero(ev > 1e-12 * max(ev[0], 1e-300)))
        d_max = max(1, min(p - 1, positive - 1, len(ev)))
        d = scree_dimension(ev[: d_max + 1], threshold, d_max)
        ak, bk, obj = _cluster_objective(nk[k], p, d, ev, trace, floor)
        if prev_dims is not None and prev_dims[k] != d and prev_dims[k] <= len(ev):
            # only move d when it does not lower the EM objective
            a2, b2, obj2 = _cluster_objective(nk[k], p, prev_dims[k], ev, trace, floor)
            if obj2 > obj:
                d, ak, bk = prev_dims[k], a2, b2
        bases.append(np.ascontiguousarray(vt[:d].T))
        a[k], b[k] = ak, bk
        dims.append(d)
    return weights, means, bases, a, b, dims


def _kmeans_labels(X, K, seed, n_init) -> np.ndarray:
    if K == 1:
        return np.zeros(len(X), dtype=int)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        warnings.simplefilter("ignore", RuntimeWarning)
        km = KMeans(n_clusters=K, n_init=n_init, random_state=seed).fit(X)
    return km.labels_


def fit(
    X,
    K: int,
    seed: int = 0,
    *,
    threshold: float = 0.2,
    n_init: int = 10,
    max_iter: int = 200,
    tol: float = 1e-7,
    noise_floor: float = 1e-3,
    min_cluster_size: float = 2.0,
    max_retries: int = 5,
) -> ClusterModel:
    """EM fit of a K-cluster subspace mixture, k-means initialised.

    ``noise_floor`` bounds every variance from below, relative to the mean
    per-coordinate variance of ``X``.  A fit in which a cluster's expected
    size drops below ``min_cluster_size`` is restarted from a new k-means
    seed up to ``max_retries`` times.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D array")
    n, p = X.shape
    if p < 2:
        raise ValueError("need at least two feature columns")
    if not 1 <= K <= n:
        raise ValueError(f"K={K} must lie in [1, {n}]")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    scale = float(X.var(axis=0).mean())
    floor = noise_floor * (scale if scale > 0 else 1.0)
    last_error = None
    for attempt in range(max_retries + 1):
        s = seed + 7919 * attempt
        try:
            model = _fit_once(X, K, s, threshold, n_init, max_iter, tol, floor, min_cluster_size)
        except DegenerateFitError as exc:
            last_error = exc
            continue
        model.seed = seed
        model.bic = bic(model, X)
        return model
    raise DegenerateFitError(f"K={K}: {last_error}")


def _fit_once(X, K, seed, threshold, n_init, max_iter, tol, floor, min_size) -> ClusterModel:
    n, _ = X.shape
    labels0 = _kmeans_labels(X, K, seed, n_init)
    resp = np.zeros((n, K))
    resp[np.arange(n), labels0] = 1.0
    if np.any(resp.sum(axis=0) < min(min_size, n / K)):
        raise DegenerateFitError("k-means produced a cluster below the minimum size")
    dims = None
    trace = []
    prev = -math.inf
    for _ in range(max_iter):
        weights, means, bases, a, b, dims = _m_step(X, resp, dims, threshold, floor)
        lj = _log_joint(X, weights, means, bases, a, b)
        lse = logsumexp(lj, axis=1, keepdims=True)
        ll = float(lse.sum())
        trace.append(ll)
        if ll < prev - 1e-9 * abs(prev) - 1e-9:
            raise MonotonicityError(f"log-likelihood decreased from {prev} to {ll}")
        resp = np.exp(lj - lse)
        if np.any(resp.sum(axis=0) < min(min_size, n / K)):
            raise DegenerateFitError("a cluster emptied during EM")
        if abs(ll - prev) < tol * abs(ll):
            break
        prev = ll
    labels = np.argmax(resp, axis=1)
    return ClusterModel(K, weights, means, bases, a, b, ll, labels, resp, trace)


def loglik(model: ClusterModel, X) -> float:
    return float(logsumexp(model.log_densities(X), axis=1).sum())


def bic(model: ClusterModel, X) -> float:
    """``2 loglik - n_params * ln(n)``; larger is better."""
    X = np.asarray(X, dtype=float)
    return 2.0 * loglik(model, X) - model.n_parameters() * math.log(len(X))


def default_k_range(n_rows: int) -> range:
    return range(2, max(2, min(n_rows - 1, 12)) + 1)


def select(X, K_range: Iterable[int] | None = None, seeds: Sequence[int] = (0,), **fit_kw) -> ClusterModel:
    """Fit every K over every seed and keep the highest BIC.

    The returned model's ``bic_trace`` maps each K to its best BIC (NaN when
    every fit of that K was degenerate).  Equal BICs keep the smaller K.
    """
    X = np.asarray(X, dtype=float)
    ks = list(default_k_range(len(X)) if K_range is None else K_range)
    if not ks:
        raise ValueError("empty K range")
    best = None
    trace = {}
    for K in ks:
        if K < 1 or K > len(X):
            raise ValueError(f"K={K} outside [1, {len(X)}]")
        best_k = None
        for s in seeds:
            try:
                m = fit(X, K, s, **fit_kw)
            except DegenerateFitError:
                continue
            if best_k is None or m.bic > best_k.bic:
                best_k = m
        trace[K] = best_k.bic if best_k is not None else float("nan")
        if best_k is not None and (best is None or best_k.bic > best.bic):
            best = best_k
    if best is None:
        raise DegenerateFitError("every candidate K produced a degenerate fit")
    best.bic_trace = trace
    return best
