"""Synthetic data generators shared by the test modules."""

import numpy as np


def planted_subspace_data(seed, n=40, p=20, K=3, sep=10.0, sigma=1.0, noise=0.2, signal_dim=2):
    """``K`` clusters whose means are pairwise ``sep * sigma`` apart.

    Each cluster has standard deviation ``sigma`` along its own random
    ``signal_dim``-dimensional subspace and ``noise * sigma`` isotropic noise.
    Returns ``(X, labels)``.
    """
    rng = np.random.default_rng(seed)
    sizes = np.full(K, n // K)
    sizes[: n - sizes.sum()] += 1
    # scaled simplex corners: every pair of means is sep*sigma apart
    means = np.zeros((K, p))
    means[np.arange(K), np.arange(K)] = sep * sigma / np.sqrt(2.0)
    X, y = [], []
    for k in range(K):
        q, _ = np.linalg.qr(rng.standard_normal((p, signal_dim)))
        pts = means[k] + noise * sigma * rng.standard_normal((sizes[k], p))
        pts += (sigma * rng.standard_normal((sizes[k], signal_dim))) @ q.T
        X.append(pts)
        y += [k] * sizes[k]
    X = np.vstack(X)
    y = np.array(y)
    perm = rng.permutation(n)
    return X[perm], y[perm]
