"""Bayesian GAMP for sublinear sparsity.

One iteration, in order::

    z_t      = A x_hat_t + (xi_in_{t-1} / xi_out_{t-1}) z_hat_{t-1}
    v_in_t   = v_out_{t-1} xi_in_{t-1}                (v_in_0 = P)
    z_hat_t  = f_out(z_t, y; v_in_t)
    xi_out_t = mean(d f_out / d z_t)
    x_t      = x_hat_t - A^T z_hat_t / (M xi_out_t)
    v_out_t  = ||z_hat_t||^2 / (M xi_out_t^2)
    x_hat_{t+1}, xi_in_t = inner_denoise(x_t, v_out_t)

The deterministic Onsager coefficient of the theory is replaced by the
empirical ``xi_in``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .denoise import inner_denoise, outer_denoise
from .model import Channel, Prior, ProblemDims, SignalInstance

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-12


class GampError(RuntimeError):
    """Numerical failure inside a GAMP iteration; ``equation`` names the step."""

    def __init__(self, message, equation=None):
        super().__init__(message)
        self.equation = equation


class DegenerateDenoiserError(GampError):
    pass


@dataclass
class GampState:
    t: int
    x_hat: np.ndarray
    z_msg: np.ndarray
    v_in: float
    z_hat: np.ndarray | None = None
    v_out: float | None = None
    xi_out: float | None = None
    xi_in: float | None = None
    xi_in_raw: float | None = None
    clamped: list = field(default_factory=list)


@dataclass
class GampTrace:
    """Per-iteration record of a GAMP run.

    ``use``, ``nse`` and ``support_ok`` are indexed by the estimate ``x_hat_t``,
    t = 0..T.  The message arrays are indexed by iteration t = 0..T-1; their
    last slot holds NaN, except ``v_in[T]`` which holds the prediction
    ``v_out_{T-1} xi_in_{T-1}`` of the final unnormalized square error.
    """

    v_in: np.ndarray
    v_out: np.ndarray
    xi_out: np.ndarray
    xi_in: np.ndarray
    z_mse: np.ndarray
    eq7_gap: np.ndarray
    use: np.ndarray
    nse: np.ndarray
    support_ok: np.ndarray
    x_hat: np.ndarray
    clamp_events: list
    error: GampError | None = None

    def __len__(self):
        return len(self.use)

    @property
    def iterations(self):
        return len(self.use) - 1


def gamp_init(dims: ProblemDims, prior: Prior) -> GampState:
    return GampState(
        t=0,
        x_hat=np.zeros(dims.N),
        z_msg=np.zeros(dims.M),
        v_in=prior.second_moment(),
    )


def _check_finite(name, equation, value):
    if not np.all(np.isfinite(value)):
        raise GampError(f"non-finite {name} in {equation}", equation)


def gamp_iterate(
    state: GampState,
    A: np.ndarray,
    y: np.ndarray,
    channel: Channel,
    prior: Prior,
    dims: ProblemDims,
    damping: float = 1.0,
    onsager: bool = True,
) -> GampState:
    M = dims.M
    if A.shape != (M, dims.N):
        raise ValueError(f"A has shape {A.shape}, expected {(M, dims.N)}")
    clamped = list(state.clamped)

    z_msg = A @ state.x_hat
    if state.t > 0:
        if onsager:
            z_msg = z_msg + (state.xi_in / state.xi_out) * state.z_hat
        v_in = state.v_out * state.xi_in
    else:
        v_in = state.v_in
    _check_finite("z", "z-update (Onsager-corrected A x_hat)", z_msg)
    if v_in <= VAR_FLOOR:
        clamped.append((state.t, "v_in", v_in))
        v_in = VAR_FLOOR

    out = outer_denoise(channel, z_msg, y, v_in)
    z_hat = out.value
    _check_finite("z_hat", "outer denoiser", z_hat)
    xi_out = float(np.mean(out.dz))
    if not abs(xi_out) >= 1e-12:
        raise DegenerateDenoiserError(f"|xi_out| = {abs(xi_out):.3g} < 1e-12", "xi_out")
    if damping != 1.0 and state.z_hat is not None:
        z_hat = damping * z_hat + (1.0 - damping) * state.z_hat

    x_msg = state.x_hat - (A.T @ z_hat) / (M * xi_out)
    _check_finite("x", "x-update (matched filter)", x_msg)
    v_out = float(z_hat @ z_hat) / (M * xi_out**2)
    if not v_out > VAR_FLOOR:
        clamped.append((state.t, "v_out", v_out))
        v_out = VAR_FLOOR

    x_new, xi_in_raw = inner_denoise(prior, dims, x_msg, v_out)
    _check_finite("x_hat", "inner denoiser", x_new)
    if damping != 1.0:
        x_new = damping * x_new + (1.0 - damping) * state.x_hat
    xi_in = max(xi_in_raw, VAR_FLOOR)
    if xi_in != xi_in_raw:
        clamped.append((state.t, "xi_in", xi_in_raw))

    return GampState(
        t=state.t + 1,
        x_hat=x_new,
        z_msg=z_msg,
        v_in=v_in,
        z_hat=z_hat,
        v_out=v_out,
        xi_out=xi_out,
        xi_in=xi_in,
        xi_in_raw=xi_in_raw,
        clamped=clamped,
    )


def gamp_run(
    A: np.ndarray,
    y: np.ndarray,
    channel: Channel,
    prior: Prior,
    dims: ProblemDims,
    T: int = 20,
    truth: SignalInstance | None = None,
    damping: float = 1.0,
    onsager: bool = True,
    raise_on_error: bool = True,
) -> GampTrace:
    """Run ``T`` iterations from the standard initialization.

    With ``raise_on_error=False`` a failing iteration ends the run and the
    partial trace is returned with ``trace.error`` set.
    """
    from .metrics import metric_normalized, metric_unnormalized, support_recovered

    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    nan = np.full(T + 1, np.nan)
    msgs = {key: nan.copy() for key in ("v_in", "v_out", "xi_out", "xi_in", "z_mse", "eq7_gap")}
    use, nse, support_ok = nan.copy(), nan.copy(), nan.copy()
    z_true = A @ truth.x if truth is not None else None

    def record_estimate(t, x_hat):
        if truth is not None:
            use[t] = metric_unnormalized(x_hat, truth.x)
            nse[t] = metric_normalized(x_hat, truth.x)
            support_ok[t] = support_recovered(x_hat, truth.support)

    state = gamp_init(dims, prior)
    record_estimate(0, state.x_hat)
    error = None
    done = T
    for t in range(T):
        try:
            state = gamp_iterate(state, A, y, channel, prior, dims, damping, onsager)
        except GampError as exc:
            if raise_on_error:
                raise
            log.warning("GAMP stopped at iteration %d: %s", t, exc)
            error = exc
            done = t
            break
        msgs["v_in"][t] = state.v_in
        msgs["v_out"][t] = state.v_out
        msgs["xi_out"][t] = state.xi_out
        msgs["xi_in"][t] = state.xi_in_raw
        if channel.kind == "linear":
            resid = state.z_msg - y
            msgs["eq7_gap"][t] = abs(state.v_out - float(resid @ resid) / dims.M) / state.v_out
        if z_true is not None:
            dz = state.z_msg - z_true
            msgs["z_mse"][t] = float(dz @ dz) / dims.M
        record_estimate(t + 1, state.x_hat)
    else:
        msgs["v_in"][T] = state.v_out * state.xi_in
    if done < T:
        msgs = {key: val[: done + 1] for key, val in msgs.items()}
        use, nse, support_ok = use[: done + 1], nse[: done + 1], support_ok[: done + 1]
    return GampTrace(**msgs, use=use, nse=nse, support_ok=support_ok, x_hat=state.x_hat, clamp_events=state.clamped, error=error)


__all__ = [
    "GampError",
    "DegenerateDenoiserError",
    "GampState",
    "GampTrace",
    "gamp_init",
    "gamp_iterate",
    "gamp_run",
]
