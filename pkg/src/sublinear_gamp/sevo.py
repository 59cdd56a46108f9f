"""State evolution of Bayesian GAMP, EXIT-like charts and thresholds.

The recursion tracks the unnormalized square error ``v_in``::

    v_out_t    = outer(v_in_t)                         (sigma2 + v_in for linear)
    v_in_{t+1} = E[U^2 1(U^2 < 2 v_out_t / delta)]     v_in_0 = P

In chart coordinates ``x = 2 v_out / delta`` the inner curve is
``phi(x) = E[U^2 1(U^2 < x)]`` and the outer curve ``psi`` maps ``x`` back
to ``v_in``; fixed points are crossings of the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq
from scipy.special import expit, gammainc

from .denoise import activity_logit, inverse_mills, log_evidence, slab_moments
from .model import Channel, DomainError, Prior

GH_ORDER = 120
ZERO_LIMIT = 1e-8


class BracketError(ValueError):
    """The threshold predicate does not change value across the bracket."""


class PrecisionError(ArithmeticError):
    """A quadrature failed its order-doubling check."""


def truncated_second_moment(prior: Prior, x):
    """E[U^2 1(U^2 < x)], strict inequality."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise DomainError("threshold must be >= 0")
    if prior.kind == "gaussian":
        P = prior.variance
        # U^2 / P is chi-square(1); u^2 times its density is the Gamma(3/2) law
        return P * gammainc(1.5, x / (2.0 * P))
    u, p = prior.atoms
    u2 = u * u
    return np.sum(np.where(u2 < x[..., None], p * u2, 0.0), axis=-1)


def se_outer_linear(v_in, sigma2):
    if np.any(np.asarray(v_in) < 0):
        raise DomainError("v_in must be >= 0")
    return sigma2 + v_in



@lru_cache(maxsize=8)
def _gh_rule(order):
    nodes, weights = hermegauss(order)
    return nodes, weights / math.sqrt(2.0 * math.pi)


def se_outer_onebit(v_in, sigma2, order=GH_ORDER):
    """v_out of the sign channel (unit signal power), by Gauss-Hermite quadrature.

    Substituting ``Z_t = sqrt(s) u`` with ``s = sigma2 + v_in`` turns the
    expectation into ``1/v_out = 2 E[h(u)] / sqrt(2 pi s (1 - v_in + s))``
    with ``u ~ N(0, (1 - v_in) / (1 - v_in + s))`` and ``h`` the inverse
    Mills ratio, whose integrand is smooth at every noise level.
    """
    v = float(v_in)
    if v < 0:
        raise DomainError("v_in must be >= 0")
    if v > 1.0:
        raise DomainError("1-bit state evolution needs v_in <= 1 (unit signal power)")
    s = sigma2 + v
    if s == 0:
        return 0.0
    spread = math.sqrt((1.0 - v) / (1.0 - v + s))
    nodes, weights = _gh_rule(order)
    mean_h = float(weights @ inverse_mills(spread * nodes))
    return math.sqrt(2.0 * math.pi * s * (1.0 - v + s)) / (2.0 * mean_h)


def se_outer(channel: Channel, v_in, order=GH_ORDER):
    if channel.kind == "linear":
        return se_outer_linear(v_in, channel.sigma2)
    return se_outer_onebit(v_in, channel.sigma2, order)


def _se_prior(channel: Channel, prior: Prior) -> Prior:
    # the sign channel recursion is written for E[U^2] = 1
    if channel.kind == "onebit":
        return prior.unit_power()
    return prior


@dataclass
class SeTrace:
    v_in: np.ndarray
    v_out: np.ndarray
    converged: bool
    v_in_limit: float
    fixed_point_count: int | None = None
    tangency: bool = False

    @property
    def is_zero(self) -> bool:
        return self.v_in_limit < ZERO_LIMIT


def se_run(channel: Channel, prior: Prior, delta, T_max=10_000, tol=1e-12, classify=True):
    """Iterate the recursion from ``v_in = P`` until successive values differ by < tol."""
    if not delta > 0:
        raise DomainError("delta must be > 0")
    prior = _se_prior(channel, prior)
    v = prior.second_moment()
    v_in, v_out = [v], []
    converged = False
    for _ in range(T_max):
        vo = float(se_outer(channel, v))
        v_new = float(truncated_second_moment(prior, 2.0 * vo / delta))
        v_out.append(vo)
        v_in.append(v_new)
        if abs(v_new - v) < tol:
            converged = True
            v = v_new
            break
        v = v_new
    trace = SeTrace(np.array(v_in), np.array(v_out), converged, v)
    if classify:
        curves = exit_chart(channel, prior, delta)
        trace.fixed_point_count, trace.tangency = chart_fixed_points(curves)
    return trace


@dataclass
class ChartCurves:
    """``phi`` and ``psi`` sampled on the grid ``x = 2 v_out / delta``.

    ``origin_fixed`` marks (0, 0) as a fixed point (noiseless channels).
    """

    x: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    delta: float
    origin_fixed: bool


def _default_grid(channel, prior, delta, points=4000):
    top = 2.0 * float(se_outer(channel, prior.second_moment())) / delta
    grid = np.geomspace(top * 1e-12, top * 1.01, points)
    if prior.is_discrete:
        # resolve the jumps of phi at the atoms u^2 (strict inequality)
        u2 = np.unique(np.square(prior.points))
        eps = np.geomspace(1e-12, 1e-2, 60)
        grid = np.concatenate([grid, u2, (u2[:, None] * (1 + eps)).ravel(), (u2[:, None] * (1 - eps)).ravel()])
        grid = np.unique(grid[(grid > 0) & (grid <= top * 1.01)])
    return grid


def _onebit_psi(channel, delta, x, order=GH_ORDER):
    tail = 1.0 - np.geomspace(1e-12, 0.5, 400)
    v_grid = np.unique(np.concatenate([np.geomspace(1e-20, 0.5, 600), tail, [1.0]]))
    if channel.sigma2 > 0:
        v_grid = np.concatenate([[0.0], v_grid])
    xs = np.array([2.0 * se_outer_onebit(v, channel.sigma2, order) / delta for v in v_grid])
    if channel.sigma2 > 0:
        # psi < 0 below the outer curve's start, continued linearly
        psi = np.interp(x, xs, v_grid, right=np.inf)
        below = x < xs[0]
        j = int(np.argmax(xs > xs[0] * (1 + 1e-6)))
        slope = v_grid[j] / (xs[j] - xs[0])
        psi[below] = slope * (x[below] - xs[0])
        return psi
    # noiseless: v_out ~ sqrt(v_in) near the origin, so work in log-log space
    lx, lv = np.log(xs), np.log(v_grid)
    with np.errstate(divide="ignore"):
        lt = np.log(x)
    psi = np.exp(np.interp(lt, lx, lv))
    psi[x > xs[-1]] = np.inf
    below = x < xs[0]
    slope = (lv[1] - lv[0]) / (lx[1] - lx[0])
    psi[below] = np.exp(lv[0] + slope * (lt[below] - lx[0]))
    return psi


def exit_chart(channel: Channel, prior: Prior, delta, grid=None) -> ChartCurves:
    prior = _se_prior(channel, prior)
    x = _default_grid(channel, prior, delta) if grid is None else np.asarray(grid, dtype=np.float64)
    if np.any(x <= 0) or np.any(np.diff(x) <= 0):
        raise DomainError("chart grid must be positive and strictly increasing")
    phi = truncated_second_moment(prior, x)
    if channel.kind == "linear":
        psi = 0.5 * delta * x - channel.sigma2
    else:
        psi = _onebit_psi(channel, delta, x)
    return ChartCurves(x, phi, psi, float(delta), channel.sigma2 == 0)


def chart_fixed_points(curves: ChartCurves):
    """Fixed-point count and a tangency flag.

    Counts sign changes of ``psi - phi`` on the grid, the origin when it is a
    fixed point, and touching points with ``|psi - phi| < 1e-10`` that do
    not change sign.
    """
    d = curves.psi - curves.phi
    sign = np.sign(d)
    nz = sign != 0
    s = sign[nz]
    count = int(np.count_nonzero(s[1:] != s[:-1]))
    ad = np.abs(d)
    scale = np.maximum(np.abs(curves.psi), np.abs(curves.phi))
    tangency = False
    for i in range(1, len(d) - 1):
        if ad[i] < 1e-10 and ad[i] < 1e-6 * scale[i] and ad[i] <= ad[i - 1] and ad[i] <= ad[i + 1]:
            if sign[i - 1] == sign[i + 1] != 0:
                count += 1
                tangency = True
    if curves.origin_fixed:
        count += 1
    return count, tangency


def count_fixed_points(curves: ChartCurves) -> int:
    return chart_fixed_points(curves)[0]


@dataclass(frozen=True)
class Threshold:
    """Bisection result; ``value`` is the midpoint of ``[lo, hi]``."""

    value: float
    lo: float
    hi: float

    def __float__(self):
        return self.value


def _bisect(predicate, lo, hi, tol, what):
    if not 0 < lo < hi:
        raise BracketError("need 0 < delta_lo < delta_hi")
    at_lo, at_hi = predicate(lo), predicate(hi)
    if at_lo or not at_hi:
        raise BracketError(f"{what} does not switch on inside [{lo}, {hi}] (lo: {at_lo}, hi: {at_hi})")
    probes = [predicate(d) for d in np.linspace(lo, hi, 11)[1:-1]]
    if any(a and not b for a, b in zip(probes, probes[1:])):
        raise BracketError(f"{what} is not monotone in delta on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return Threshold(0.5 * (lo + hi), lo, hi)


def origin_attracting(channel: Channel, prior: Prior, delta) -> bool:
    """Whether the zero-error fixed point attracts nearby errors.

    Near the origin one recursion step behaves like ``c v^p``; the origin
    attracts when ``p > 1`` (or ``p = 1`` with ``c < 1``). The noiseless sign
    channel has ``p = 3/4``, so its trace stalls at a positive fixed point
    that only approaches zero as delta grows.
    """
    prior = _se_prior(channel, prior)

    def step(v):
        return float(truncated_second_moment(prior, 2.0 * float(se_outer(channel, v)) / delta))

    lo, hi = 1e-150, 1e-100
    s_lo, s_hi = step(lo), step(hi)
    if s_hi == 0.0:
        return True
    if s_lo == 0.0:
        return s_hi < hi
    p = (math.log(s_hi) - math.log(s_lo)) / (math.log(hi) - math.log(lo))
    if abs(p - 1.0) < 1e-6:
        return s_hi < hi
    return p > 1.0


def reconstruction_threshold(channel: Channel, prior: Prior, delta_lo, delta_hi, tol_delta=1e-3):
    """Smallest delta beyond which the recursion converges to zero error."""

    def exact(delta):
        limit = se_run(channel, prior, delta, classify=False).v_in_limit
        if prior.is_discrete:
            return limit == 0.0
        return limit < ZERO_LIMIT and (channel.sigma2 > 0 or origin_attracting(channel, prior, delta))

    return _bisect(exact, delta_lo, delta_hi, tol_delta, "zero-error limit")


def weak_reconstruction_threshold(channel: Channel, prior: Prior, delta_lo, delta_hi, tol_delta=1e-3, scan_points=64):
    """Smallest delta beyond which the chart has a unique fixed point."""

    def unique(delta):
        return count_fixed_points(exit_chart(channel, prior, delta)) == 1

    # uniqueness also holds for very small delta (one high-error crossing),
    # so bracket the last switch on a geometric scan before bisecting
    grid = np.geomspace(delta_lo, delta_hi, scan_points)
    flags = [unique(d) for d in grid]
    if all(flags):
        raise BracketError(f"fixed point is unique on all of [{delta_lo}, {delta_hi}]")
    last = max(i for i, f in enumerate(flags) if not f)
    if last == len(grid) - 1:
        raise BracketError(f"fixed-point uniqueness does not switch on inside [{delta_lo}, {delta_hi}]")
    return _bisect(unique, float(grid[last]), float(grid[last + 1]), tol_delta, "fixed-point uniqueness")


def prop1_threshold(u_min, sigma2):
    """Linear-channel threshold of the worst prior |U| = u_min: 2 (1 + sigma2 / u_min^2)."""
    if not u_min > 0:
        raise DomainError("u_min must be > 0")
    return 2.0 * (1.0 + sigma2 / u_min**2)


# ---------------------------------------------------------------------------
# expected unnormalized error of the spike-and-slab estimator at finite N


def _panel_quad(f, edges, order):
    nodes, weights = leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    pts = (a + b) * 0.5 + half * nodes
    return np.sum(half * weights * f(pts), axis=(-2, -1))


def _transitions(logit, lo, hi, n=4001):
    """Roots of the activity logit on [lo, hi] and the local width 1/|logit'|."""
    grid = np.linspace(lo, hi, n)
    vals = logit(grid)
    out = []
    for i in np.nonzero(np.sign(vals[1:]) != np.sign(vals[:-1]))[0]:
        r = brentq(logit, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15)
        h = 1e-6 * max(1.0, abs(r))
        slope = abs(logit(r + h) - logit(r - h)) / (2 * h)
        out.append((r, 1.0 / max(slope, 1e-300)))
    return out


def _graded_edges(lo, hi, roots, panels=24):
    edges = [np.linspace(lo, hi, panels + 1)]
    for r, w in roots:
        steps = w * 2.0 ** np.arange(-4, 40)
        steps = steps[steps < hi - lo]
        edges.append(np.clip(np.concatenate([r - steps, [r], r + steps]), lo, hi))
    return np.unique(np.concatenate(edges))


def _slab_components(prior: Prior, v_tilde):
    """Gaussian components (weight, mean, variance) of the law of U + N(0, v_tilde)."""
    if prior.kind == "gaussian":
        return [(1.0, 0.0, prior.variance + v_tilde)]
    return [(p, u, v_tilde) for u, p in zip(prior.points, prior.probs) if p > 0]


def spike_slab_error_terms(prior: Prior, v, N, k, order=64):
    """(null term, signal term) of E||X - f_X(Y)||^2 at v_tilde = v / ln(N/k).

    The null term ``(N - k) E[f_X(Omega)^2]`` and the signal term
    ``E[(U - sqrt(k) f_X(U/sqrt(k) + Omega))^2]`` are both integrated over the
    scaled observation under the slab marginal, where they read
    ``E[m1^2 f_A (1 - f_A)]`` and ``E[(m2 - m1^2) + (1 - f_A)^2 m1^2]``.
    ``N`` and ``k`` may be arbitrarily large Python integers.
    """
    log_ratio = math.log(N) - math.log(k)
    log_odds = math.log(k) - math.log(N - k)
    vt = v / log_ratio

    def logit(yt):
        return activity_logit(prior, np.asarray(yt, dtype=np.float64), vt, log_odds)

    def integrands(yt):
        fa = expit(logit(yt))
        m1, m2 = slab_moments(prior, yt, vt)
        dens = np.exp(log_evidence(prior, yt, vt))
        null = dens * m1 * m1 * fa * (1.0 - fa)
        sig = dens * (np.maximum(m2 - m1 * m1, 0.0) + np.square(1.0 - fa) * m1 * m1)
        return np.stack([null, sig])

    comps = _slab_components(prior, vt)
    lo = min(mean - 14 * math.sqrt(var) for _, mean, var in comps)
    hi = max(mean + 14 * math.sqrt(var) for _, mean, var in comps)
    edges = [_graded_edges(lo, hi, _transitions(logit, lo, hi))]
    for _, mean, var in comps:
        edges.append(mean + math.sqrt(var) * np.linspace(-14, 14, 29))
    edges = np.unique(np.clip(np.concatenate(edges), lo, hi))

    results = [_panel_quad(integrands, edges, n) for n in (order, 2 * order)]
    return _check_doubling(results)


def _check_doubling(results):
    coarse, fine = results
    for x0, x1 in zip(coarse, fine):
        if abs(x1 - x0) > 1e-6 * abs(x1) and abs(x1 - x0) > 1e-14:
            raise PrecisionError(f"quadrature not converged: {x0!r} vs {x1!r}")
    return float(fine[0]), float(fine[1])


def lemma1_asymptote(prior: Prior, v):
    """Sublinear-sparsity limit of the expected error: E[U^2 1(U^2 < 2 v)]."""
    return float(truncated_second_moment(prior, 2.0 * v))


def lemma1_curve(prior: Prior, v, gamma, log2N_list, order=64):
    """Expected unnormalized error E||X - f_X(Y)||^2 for N = 2**log2N, k = round(N**gamma).

    Returns an array aligned with ``log2N_list``.
    """
    if not 0 <= gamma < 1:
        raise DomainError("gamma must lie in [0, 1)")
    if not v > 0:
        raise DomainError("v must be > 0")
    out = []
    for log2N in log2N_list:
        N = 2 ** int(log2N)
        k = max(1, round(2.0 ** (gamma * int(log2N))))
        null, sig = spike_slab_error_terms(prior, v, N, k, order)
        out.append(null + sig)
    return np.array(out)


def se_run_finite(channel: Channel, prior: Prior, delta, N, k, T=20, order=64):
    """State evolution with the exact finite-(N, k) inner error in place of its limit.

    The inner step uses ``E||X - f_X(Y)||^2`` at ``v = v_out / delta`` (the
    quantity of :func:`lemma1_curve`), which tracks Monte Carlo GAMP at desk
    scale where the sublinear-sparsity limit is still far away.  Returns
    ``v_in_0 .. v_in_T``.
    """
    if not delta > 0:
        raise DomainError("delta must be > 0")
    if not 1 <= k < N:
        raise DomainError("need 1 <= k < N")
    prior = _se_prior(channel, prior)
    v = prior.second_moment()
    out = [v]
    for _ in range(T):
        vo = float(se_outer(channel, min(v, 1.0) if channel.kind == "onebit" else v))
        v = float(sum(spike_slab_error_terms(prior, vo / delta, N, k, order)))
        out.append(v)
    return np.array(out)
