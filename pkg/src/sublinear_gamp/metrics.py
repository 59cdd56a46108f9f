"""Error metrics for sublinear sparsity: unnormalized quantities only."""

import numpy as np

from .model import DomainError

# value returned for an all-zero estimate: ||a - b||^2 with |a| = 1 and b
# undefined is reported as 2, the value for orthogonal unit vectors
ZERO_ESTIMATE_NSE = 2.0


def _pair(x_hat, x):
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape:
        raise ValueError(f"length mismatch: {x_hat.shape} vs {x.shape}")
    return x_hat, x


def metric_unnormalized(x_hat, x) -> float:
    """||x_hat - x||^2."""
    x_hat, x = _pair(x_hat, x)
    d = x_hat - x
    return float(d @ d)


def metric_normalized(x_hat, x) -> float:
    """||x / ||x|| - x_hat / ||x_hat|| ||^2, in [0, 4]."""
    x_hat, x = _pair(x_hat, x)
    nx = np.linalg.norm(x)
    if nx == 0:
        raise DomainError("normalized error undefined for x = 0")
    nh = np.linalg.norm(x_hat)
    if nh == 0:
        return ZERO_ESTIMATE_NSE
    d = x / nx - x_hat / nh
    return float(min(max(d @ d, 0.0), 4.0))


def support_recovered(x_hat, support) -> bool:
    """True when the k largest-magnitude entries of ``x_hat`` are the support."""
    support = np.asarray(support)
    k = len(support)
    top = np.argsort(-np.abs(np.asarray(x_hat)), kind="stable")[:k]
    return bool(np.array_equal(np.sort(top), np.sort(support)))
