"""Reference sparse-recovery algorithms: OMP, FISTA for the Lasso, BIHT and
GLasso (FISTA run on sign measurements)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import DomainError


class ConvergenceError(RuntimeError):
    pass


def omp(A, y, k, return_history=False, callback=None):
    """Orthogonal matching pursuit with ``k`` rounds.

    Columns are selected by normalized correlation ``|a_n^T r| / ||a_n||``,
    so a single atom is always found.  Stops early once the residual norm
    drops below 1e-12 ||y||.  A
    rank-deficient selection is solved in the least-squares sense and
    reported with a ``RuntimeWarning``.  ``callback(round, x_hat)`` is
    called after every round.
    """
    M, N = A.shape
    if k > min(M, N):
        raise DomainError(f"k = {k} exceeds min(M, N) = {min(M, N)}")
    x_hat = np.zeros(N)
    residual = np.array(y, dtype=np.float64)
    history = [float(np.linalg.norm(residual))]
    stop = 1e-12 * history[0]
    col_norm = np.linalg.norm(A, axis=0)
    col_norm[col_norm == 0] = np.inf
    support = []
    coef = None
    for rnd in range(1, k + 1):
        if history[-1] <= stop:
            break
        corr = np.abs(A.T @ residual) / col_norm
        corr[support] = -1.0
        support.append(int(np.argmax(corr)))
        sub = A[:, support]
        coef, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
        if rank < len(support):
            warnings.warn("OMP: selected columns are rank deficient", RuntimeWarning, stacklevel=2)
        residual = y - sub @ coef
        history.append(float(np.linalg.norm(residual)))
        if callback is not None:
            x_hat[support] = coef
            callback(rnd, x_hat.copy())
    if support:
        x_hat[support] = coef
    if return_history:
        return x_hat, np.array(history)
    return x_hat


@dataclass(frozen=True)
class FistaConfig:
    lam: float
    max_iters: int = 1000
    backtrack: float = 0.5
    initial_step: float | None = None
    restart: bool = True

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("lambda must be > 0")
        if not 0 < self.backtrack < 1:
            raise DomainError("backtracking factor must lie in (0, 1)")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")


@dataclass
class FistaResult:
    x: np.ndarray
    objective: np.ndarray
    restarts: int
    step: float


def lasso_objective(A, y, x, lam, M=None):
    M = A.shape[0] if M is None else M
    r = y - A @ x
    return float(r @ r) / (2 * M) + lam * float(np.sum(np.abs(x)))


def soft_threshold(v, tau):
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def fista(A, y, cfg: FistaConfig, M_scale=None, x0=None, callback=None) -> FistaResult:
    """FISTA with backtracking and gradient-based restart for

        min_x ||y - A x||^2 / (2 M) + lam ||x||_1 .

    The step never grows; ``initial_step`` defaults to ``M / ||A||_F^2``
    times 16, which backtracking trims to a valid Lipschitz step.  With
    ``restart`` on, momentum is also reset whenever a step would raise the
    objective, so the returned objective trace is non-increasing.
    ``callback(iteration, x)`` is called after every iteration.
    """
    M = A.shape[0] if M_scale is None else M_scale
    y = np.asarray(y, dtype=np.float64)
    x = np.zeros(A.shape[1]) if x0 is None else np.array(x0, dtype=np.float64)
    step = cfg.initial_step or 16.0 * M / float(np.sum(A * A))
    lam = cfg.lam

    def smooth(v):
        r = A @ v - y
        return float(r @ r) / (2 * M), r

    z, t = x.copy(), 1.0
    objective = [lasso_objective(A, y, x, lam, M)]
    restarts = 0
    for it in range(1, cfg.max_iters + 1):
        fz, rz = smooth(z)
        grad = A.T @ rz / M
        while True:
            x_new = soft_threshold(z - step * grad, step * lam)
            d = x_new - z
            f_new, _ = smooth(x_new)
            if f_new <= fz + grad @ d + (d @ d) / (2 * step):
                break
            step *= cfg.backtrack
            if step < 1e-30:
                raise ConvergenceError("FISTA step size underflow")
        F_new = f_new + lam * float(np.sum(np.abs(x_new)))
        if cfg.restart and F_new > objective[-1]:
            # reject an uphill step and drop the momentum
            z, t = x.copy(), 1.0
            restarts += 1
            objective.append(objective[-1])
            if callback is not None:
                callback(it, x)
            continue
        if cfg.restart and (z - x_new) @ (x_new - x) > 0:
            # momentum points against the proximal-gradient step
            t_new, z = 1.0, x_new.copy()
            restarts += 1
        else:
            t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
            z = x_new + ((t - 1) / t_new) * (x_new - x)
        x, t = x_new, t_new
        objective.append(F_new)
        if callback is not None:
            callback(it, x)
    return FistaResult(x, np.array(objective), restarts, step)


def lambda_default(sigma2, M, N):
    """sqrt(0.8 sigma2 ln(N) / M)."""
    if not sigma2 > 0:
        raise DomainError("sigma2 must be > 0")
    return math.sqrt(0.8 * sigma2 * math.log(N) / M)


def lambda_glasso_center(M, N):
    """Half the noise level sqrt(2 ln(N) / M) of A^T y / M for sign data."""
    return 0.5 * math.sqrt(2.0 * math.log(N) / M)


def lambda_grid(center, points=12, decades=3.0):
    """Logarithmic grid of ``points`` values spanning ``decades`` around ``center``."""
    return center * np.logspace(-decades / 2, decades / 2, points)


@dataclass(frozen=True)
class BihtConfig:
    k: int
    max_iters: int = 20
    step: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise DomainError("k must be >= 1")
        if not self.step > 0:
            raise DomainError("step must be > 0")


def hard_threshold(v, k):
    """Keep the ``k`` largest-magnitude entries; ties go to the lowest index."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros_like(v)
    keep = np.argsort(-np.abs(v), kind="stable")[:k]
    out[keep] = v[keep]
    return out


def _sign(v):
    return np.where(v >= 0, 1.0, -1.0)


def biht(A, y, cfg: BihtConfig, callback=None):
    """Binary iterative hard thresholding, normalized to the unit sphere."""
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.abs(y) == 1):
        raise DomainError("BIHT needs measurements in {-1, +1}")
    M, N = A.shape
    x = np.zeros(N)
    for it in range(1, cfg.max_iters + 1):
        x = hard_threshold(x + (cfg.step / M) * (A.T @ (y - _sign(A @ x))), cfg.k)
        norm = np.linalg.norm(x)
        if norm > 0:
            x /= norm
        if callback is not None:
            callback(it, x)
    return x


def glasso(A, y, cfg: FistaConfig, callback=None) -> FistaResult:
    """Generalized Lasso: the Lasso fitted to sign measurements."""
    return fista(A, y, cfg, callback=callback)
