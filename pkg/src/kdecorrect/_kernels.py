"""Low-level Gaussian kernel arithmetic shared by the density modules."""

import math

import numpy as np
from scipy.linalg import solve_triangular

LOG_2PI = math.log(2.0 * math.pi)


def whiten(points, chol):
    """Map rows ``x`` to ``L^{-1} x`` so Mahalanobis distances become Euclidean."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return solve_triangular(chol, points.T, lower=True).T


def sqdist(za, zb):
    """Squared Euclidean distances between the rows of ``za`` and ``zb``."""
    out = np.zeros((za.shape[0], zb.shape[0]))
    for k in range(za.shape[1]):
        diff = za[:, k, None] - zb[None, :, k]
        diff *= diff
        out += diff
    return out


def row_logsumexp(a, weights=None):
    """Max-shifted log(sum(exp(a))) along axis 1; rows of all -inf give -inf."""
    m = np.max(a, axis=1)
    shift = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(a - shift[:, None])
    s = e.sum(axis=1) if weights is None else e @ weights
    with np.errstate(divide="ignore"):
        return np.log(s) + shift
