"""Scalar denoisers.

Inner side: posterior quantities of the spike-and-slab model

    Y = k^{-1/2} A U + Omega,   Pr(A = 1) = k / N,   Omega ~ N(0, v_tilde / k),

evaluated through the scaled observation ``yt = sqrt(k) * y``.  Outer side:
Bayes-optimal denoisers for the linear and the sign channel.

All probability ratios are formed in the log domain or through ``erfcx``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, expit, logsumexp

from .model import DomainError, Prior, ProblemDims

LOG_2PI = math.log(2.0 * math.pi)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
# beyond this argument the inverse Mills ratio minus its argument is taken
# from the asymptotic series (direct subtraction loses ~log10(w^2) digits)
_MILLS_SERIES_FROM = 300.0


def log_pG(y, v):
    """Log density of N(0, v) at ``y``."""
    return -0.5 * (LOG_2PI + np.log(v)) - 0.5 * np.square(y) / v


def _check_var(v):
    if not np.all(np.asarray(v) > 0):
        raise DomainError("variance must be > 0")


def log_evidence(prior: Prior, yt, v):
    """log E_U[p_G(yt - U; v)]."""
    _check_var(v)
    yt = np.asarray(yt, dtype=np.float64)
    if prior.kind == "gaussian":
        return log_pG(yt, prior.variance + v)
    u, p = prior.atoms
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    terms = logp + log_pG(yt[..., None] - u, v)
    return logsumexp(terms, axis=-1)


def slab_moments(prior: Prior, yt, v):
    """Posterior mean and second moment of ``U`` given ``yt = U + N(0, v)``."""
    _check_var(v)
    yt = np.asarray(yt, dtype=np.float64)
    if prior.kind == "gaussian":
        P = prior.variance
        m1 = P * yt / (P + v)
        return m1, np.square(m1) + P * v / (P + v)
    u, p = prior.atoms
    with np.errstate(divide="ignore"):
        logw = np.log(p) - 0.5 * np.square(yt[..., None] - u) / v
    w = np.exp(logw - logw.max(axis=-1, keepdims=True))
    w /= w.sum(axis=-1, keepdims=True)
    return w @ u, w @ (u * u)


def f_U_moment(prior: Prior, yt, v, order: int = 1):
    """E[U^order | yt] for order 1 or 2."""
    if order not in (1, 2):
        raise DomainError("order must be 1 or 2")
    return slab_moments(prior, yt, v)[order - 1]


def activity_logit(prior: Prior, yt, v, log_odds):
    """log Pr(active | yt) - log Pr(inactive | yt); ``log_odds = ln(k/(N-k))``."""
    return log_odds + log_evidence(prior, yt, v) - log_pG(yt, v)


@dataclass(frozen=True)
class InnerDenoiserParams:
    """Spike-and-slab denoiser at scaled noise variance ``v_tilde``.

    ``N`` and ``k`` may be arbitrarily large Python integers; only
    ``ln(N/k)`` and ``ln(k/(N-k))`` enter the computation.
    """

    prior: Prior
    k: int
    N: int
    v_tilde: float

    def __post_init__(self):
        if not self.v_tilde > 0:
            raise DomainError("v_tilde must be > 0")
        if self.N < 2 or not 1 <= self.k < self.N:
            raise DomainError("need N >= 2 and 1 <= k < N")

    @property
    def log_odds(self) -> float:
        return math.log(self.k) - math.log(self.N - self.k)

    @property
    def log_ratio(self) -> float:
        return math.log(self.N) - math.log(self.k)

    @property
    def v_kN(self) -> float:
        """Unscaled noise variance v_tilde / k."""
        return self.v_tilde / self.k

    @property
    def sqrt_k(self) -> float:
        return math.sqrt(self.k)

    def posterior(self, y):
        """(f_A, E[U|yt], E[U^2|yt]) at the unscaled observation ``y``."""
        yt = self.sqrt_k * np.asarray(y, dtype=np.float64)
        fa = expit(activity_logit(self.prior, yt, self.v_tilde, self.log_odds))
        m1, m2 = slab_moments(self.prior, yt, self.v_tilde)
        return fa, m1, m2


def f_A(params: InnerDenoiserParams, yt):
    """Posterior probability that the entry is active, at scaled input ``yt``."""
    return expit(activity_logit(params.prior, yt, params.v_tilde, params.log_odds))


def f_X(params: InnerDenoiserParams, y):
    fa, m1, _ = params.posterior(y)
    return fa * m1 / params.sqrt_k


def f_X2(params: InnerDenoiserParams, y):
    fa, _, m2 = params.posterior(y)
    return fa * m2 / params.k


def _posterior_spread(fa, m1, m2):
    # k * v_post, written as a sum of two non-negative terms
    return fa * np.maximum(m2 - m1 * m1, 0.0) + fa * (1.0 - fa) * m1 * m1


def posterior_variance(params: InnerDenoiserParams, y):
    return _posterior_spread(*params.posterior(y)) / params.k


def f_X_prime(params: InnerDenoiserParams, y):
    """d f_X / dy = v_post / (v_tilde / k)."""
    return _posterior_spread(*params.posterior(y)) / params.v_tilde


def inner_denoise(prior: Prior, dims: ProblemDims, x_t, v_out: float):
    """Bayesian inner denoiser applied element-wise.

    Returns ``(x_hat, xi_in)`` where ``xi_in = sum(v_post) / v_out`` is the
    empirical Onsager coefficient (1/M) sum f_in'.
    """
    if not v_out > 0:
        raise DomainError("v_out must be > 0")
    # v_tilde = v_out / (delta_eff ln(N/k)) = k v_out / M
    params = InnerDenoiserParams(prior, dims.k, dims.N, dims.k * v_out / dims.M)
    fa, m1, m2 = params.posterior(x_t)
    x_hat = fa * m1 / params.sqrt_k
    spread = _posterior_spread(fa, m1, m2)
    xi_in = math.fsum(spread) / dims.k / v_out
    return x_hat, xi_in


@dataclass(frozen=True)
class OuterEval:
    value: np.ndarray
    dz: np.ndarray


def outer_linear(z_t, y, v_in, sigma2) -> OuterEval:
    s = sigma2 + v_in
    if not s > 0:
        raise DomainError("sigma2 + v_in must be > 0")
    value = (np.asarray(z_t, dtype=np.float64) - y) / s
    return OuterEval(value, np.full_like(value, 1.0 / s))


def inverse_mills(w):
    """p_G(w; 1) / Q(w), finite for every finite ``w``."""
    w = np.asarray(w, dtype=np.float64)
    with np.errstate(over="ignore"):
        return SQRT_2_OVER_PI / erfcx(w / math.sqrt(2.0))


def inverse_mills_excess(w):
    """inverse_mills(w) - w, without cancellation for large ``w``."""
    w = np.asarray(w, dtype=np.float64)
    out = inverse_mills(w) - w
    big = w > _MILLS_SERIES_FROM
    if np.any(big):
        r = 1.0 / w[big]
        r2 = r * r
        out = np.where(big, 0.0, out)
        out[big] = r * (1.0 - r2 * (2.0 - r2 * (10.0 - 74.0 * r2)))
    return out


def outer_onebit(z_t, y, v_in, sigma2) -> OuterEval:
    """Bayes-optimal outer denoiser for ``y = sign(z + w)``.

    With ``s = sigma2 + v_in`` and ``w = -y z_t / sqrt(s)``:
    value = -y h(w) / sqrt(s), dz = h(w) (h(w) - w) / s, h the inverse Mills ratio.
    """
    s = sigma2 + v_in
    if not s > 0:
        raise DomainError("sigma2 + v_in must be > 0")
    y = np.asarray(y, dtype=np.float64)
    rs = math.sqrt(s)
    w = -y * np.asarray(z_t, dtype=np.float64) / rs
    h = inverse_mills(w)
    return OuterEval(-y * h / rs, h * inverse_mills_excess(w) / s)


def outer_denoise(channel, z_t, y, v_in) -> OuterEval:
    if channel.kind == "linear":
        return outer_linear(z_t, y, v_in, channel.sigma2)
    return outer_onebit(z_t, y, v_in, channel.sigma2)
