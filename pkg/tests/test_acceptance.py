"""Acceptance criteria, each run at its stated tolerance.

Every test prints one PASS/FAIL line (collected again in the terminal
summary).  Criteria that the faithful implementation cannot meet are marked
``xfail(strict=True)`` so they still run and still report FAIL.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from sublinear_gamp.baselines import FistaConfig, fista, omp, soft_threshold
from sublinear_gamp.config import config_from_dict
from sublinear_gamp.denoise import (
    InnerDenoiserParams,
    f_A,
    f_X,
    f_X_prime,
    outer_onebit,
    posterior_variance,
)
from sublinear_gamp.gamp import gamp_init, gamp_iterate, gamp_run
from sublinear_gamp.harness import run_experiment
from sublinear_gamp.model import (
    Channel,
    Prior,
    ProblemDims,
    apply_channel,
    sample_matrix,
    sample_signal,
    snr_db_to_sigma2,
    trial_rng,
)
from sublinear_gamp.sevo import (
    count_fixed_points,
    exit_chart,
    lemma1_asymptote,
    lemma1_curve,
    prop1_threshold,
    reconstruction_threshold,
    se_run,
    truncated_second_moment,
    weak_reconstruction_threshold,
)

GAUSS = Prior.gaussian(1.0)
SIGMA2_40DB = snr_db_to_sigma2(40)
LINEAR_40DB = Channel.linear(SIGMA2_40DB)
ONEBIT = Channel.onebit(0.0)

pytestmark = pytest.mark.acceptance


def weak_threshold():
    return weak_reconstruction_threshold(LINEAR_40DB, GAUSS, 0.05, 20.0, 1e-3).value


def summary_medians(result, metric):
    return {(round(r["delta_eff"], 12), r["algorithm"]): r[f"{metric}_median"] for r in result.summary}


def test_criterion_01_prop1(report):
    start = time.perf_counter()
    worst = 0.0
    for u in (1.0, 2.0):
        for sigma2 in (0.0, 0.1, 1.0):
            th = reconstruction_threshold(Channel.linear(sigma2), Prior.constant(u), 0.5, 10.0, 1e-3)
            worst = max(worst, abs(th.value - prop1_threshold(u, sigma2)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-3 and elapsed < 1.0
    assert report("1", ok, f"max |delta* - 2(1 + sigma2/u_min^2)| = {worst:.2e} (tol 1e-3), {elapsed:.2f} s (< 1 s)")


def test_criterion_02_se_linear_high_delta(report):
    start = time.perf_counter()
    lim = {d: se_run(LINEAR_40DB, GAUSS, d).v_in_limit for d in (1.0, 1.5)}
    count = count_fixed_points(exit_chart(LINEAR_40DB, GAUSS, 1.5))
    elapsed = time.perf_counter() - start
    ok = all(v < 1e-3 for v in lim.values()) and count == 1 and elapsed < 1.0
    detail = f"v_in_inf(1) = {lim[1.0]:.2e}, v_in_inf(1.5) = {lim[1.5]:.2e} (< 1e-3); fixed points at 1.5: {count}; {elapsed:.2f} s"
    assert report("2 [delta in {1, 1.5}]", ok, detail)


@pytest.mark.xfail(strict=True, reason="under ln(N/k) the recursion already has a unique, near-zero fixed point at delta = 0.5")
def test_criterion_02_se_linear_low_delta(report):
    start = time.perf_counter()
    lim = se_run(LINEAR_40DB, GAUSS, 0.5).v_in_limit
    count = count_fixed_points(exit_chart(LINEAR_40DB, GAUSS, 0.5))
    elapsed = time.perf_counter() - start
    ok = lim >= 0.1 and count >= 2 and elapsed < 1.0
    assert report("2 [delta = 0.5]", ok, f"v_in_inf = {lim:.2e} (>= 0.1), fixed points = {count} (>= 2); {elapsed:.2f} s")


def test_criterion_03_se_onebit(report):
    deltas = (1.0, 2.0, 4.0)
    counts = [count_fixed_points(exit_chart(ONEBIT, GAUSS, d)) for d in deltas]
    lims = [se_run(ONEBIT, GAUSS, d).v_in_limit for d in deltas]
    ok = counts == [2, 2, 2] and lims[0] > lims[1] > lims[2]
    assert report("3", ok, f"fixed points {counts} (all 2); v_in_inf {', '.join(f'{v:.3e}' for v in lims)} (strictly decreasing)")


def test_criterion_04_lemma1(report):
    start = time.perf_counter()
    grid = [20, 50, 100, 200, 500, 1000]
    ok, parts = True, []
    for v in (0.5, 1.0, 2.0):
        dev = np.abs(lemma1_curve(GAUSS, v, 0.25, grid) - lemma1_asymptote(GAUSS, v))
        ok &= bool(dev[5] < dev[3] < dev[0]) and bool(np.all(np.diff(dev) < 0))
        parts.append(f"v={v:g}: {dev[0]:.2e} -> {dev[3]:.2e} -> {dev[5]:.2e}")
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 10.0
    assert report("4", ok, f"deviation at log2N 20/100/1000 {'; '.join(parts)}; monotone on grid; {elapsed:.2f} s (< 10 s)")


def test_criterion_05_eq7_identity(report):
    worst, iterations = 0.0, 0
    cases = [(256, 4, 1.0, 1e-2), (1024, 8, 1.5, SIGMA2_40DB), (4096, 16, 2.0, SIGMA2_40DB), (2048, 32, 0.6, 1e-3)]
    for N, k, delta, sigma2 in cases:
        ch = Channel.linear(sigma2)
        for seed in range(5):
            dims = ProblemDims(N, k, delta)
            rng = trial_rng(seed, 5, N)
            truth = sample_signal(dims, GAUSS, rng)
            A = sample_matrix(dims, rng)
            y = apply_channel(ch, A @ truth.x, rng)
            tr = gamp_run(A, y, ch, GAUSS, dims, T=20, truth=truth, raise_on_error=False)
            gaps = tr.eq7_gap[np.isfinite(tr.eq7_gap)]
            worst = max(worst, float(np.max(gaps)))
            iterations += len(gaps)
    assert report("5", worst <= 1e-10, f"max relative gap {worst:.2e} over {iterations} linear iterations (tol 1e-10)")


def test_criterion_06_onsager_calibration(report):
    start = time.perf_counter()
    dims = ProblemDims(4096, 16, 2.0)
    trials, T = 200, 3
    mse = np.zeros(T + 1)
    v_in = np.zeros(T + 1)
    for trial in range(trials):
        rng = trial_rng(6, 0, trial)
        truth = sample_signal(dims, GAUSS, rng)
        A = sample_matrix(dims, rng)
        z = A @ truth.x
        y = apply_channel(LINEAR_40DB, z, rng)
        state = gamp_init(dims, GAUSS)
        for t in range(T + 1):
            state = gamp_iterate(state, A, y, LINEAR_40DB, GAUSS, dims)
            d = state.z_msg - z
            mse[t] += float(d @ d) / dims.M
            v_in[t] += state.v_in
    mse /= trials
    v_in /= trials
    rel = np.abs(mse[1:] - v_in[1:]) / v_in[1:]
    elapsed = time.perf_counter() - start
    ok = bool(np.all(rel <= 0.15)) and elapsed < 120
    detail = ", ".join(f"t={t}: mse {mse[t]:.3e} vs v_in {v_in[t]:.3e} ({100 * rel[t - 1]:.1f}%)" for t in (1, 2, 3))
    assert report("6", ok, f"{detail} (within 15%); {elapsed:.1f} s (< 120 s)")


def test_criterion_07_linear_desk_ordering(report, tmp_path):
    start = time.perf_counter()
    dw = weak_threshold()
    cfg = config_from_dict({
        "experiment": "gamp_sweep", "N": 4096, "k": 16, "deltas": [2 * dw, 0.5 * dw],
        "channel": {"kind": "linear", "snr_db": 40}, "trials": 100,
        "algorithms": ["gamp", {"name": "fista", "iterations": 1000}, "omp"],
        "output": str(tmp_path / "fig3"), "plot": False,
    })
    res = run_experiment(cfg)
    med = summary_medians(res, "use")
    hi, lo = (round(d, 12) for d in cfg.delta_effs())
    elapsed = time.perf_counter() - start
    ok = med[(hi, "gamp")] < med[(hi, "fista")] and med[(hi, "gamp")] < 1e-2 and med[(lo, "gamp")] >= 0.1 and elapsed < 900
    detail = (
        f"delta_w* = {dw:.4f}; at 2 delta_w*: GAMP {med[(hi, 'gamp')]:.2e} < FISTA {med[(hi, 'fista')]:.2e}, "
        f"OMP {med[(hi, 'omp')]:.2e}; at delta_w*/2: GAMP {med[(lo, 'gamp')]:.2e} (>= 0.1); {elapsed:.0f} s (< 900 s)"
    )
    assert report("7", ok, detail)


@pytest.fixture(scope="module")
def onebit_run(tmp_path_factory):
    start = time.perf_counter()
    cfg = config_from_dict({
        "experiment": "gamp_sweep", "N": 4096, "k": 16, "deltas": [2.0, 4.0, 6.0],
        "channel": {"kind": "onebit", "sigma2": 0.0}, "trials": 100,
        "algorithms": ["gamp", "biht", "glasso"],
        "output": str(tmp_path_factory.mktemp("fig6")), "plot": False,
    })
    res = run_experiment(cfg)
    return cfg, res, time.perf_counter() - start


def test_criterion_08_onebit_ordering(report, onebit_run):
    cfg, res, elapsed = onebit_run
    med = summary_medians(res, "nse")
    ok, parts = elapsed < 900, []
    for d in cfg.delta_effs():
        key = round(d, 12)
        g, b, l = med[(key, "gamp")], med[(key, "biht")], med[(key, "glasso")]
        ok &= g < b and g < l
        parts.append(f"delta={d:.2f}: GAMP {g:.2e}, BIHT {b:.2e}, GLasso {l:.2e}")
    assert report("8 [ordering]", ok, f"{'; '.join(parts)}; {elapsed:.0f} s (< 900 s)")


@pytest.mark.xfail(strict=True, reason="at N = 2^12 the sublinear limit is far away: Monte Carlo follows the finite-N recursion, not v_in_inf")
def test_criterion_08_onebit_se_agreement(report, onebit_run):
    cfg, res, _ = onebit_run
    d = cfg.delta_effs()[0]
    mc = summary_medians(res, "nse")[(round(d, 12), "gamp")]
    se = se_run(ONEBIT, GAUSS, d).v_in_limit
    ratio = max(mc / se, se / mc)
    assert report("8 [SE agreement]", ratio <= 2.0, f"delta={d:.3f}: GAMP median {mc:.3e} vs SE v_in_inf {se:.3e}, ratio {ratio:.2f} (<= 2)")


@pytest.mark.xfail(strict=True, reason="under ln(N/k) the weak threshold of the recursion is 0.428")
def test_criterion_09_weak_threshold(report):
    dw = weak_threshold()
    assert report("9", 1.2 <= dw <= 1.45, f"delta_w* = {dw:.4f} (window [1.2, 1.45]; soft criterion)")


def test_criterion_10_denoiser_properties(report):
    start = time.perf_counter()
    ok, notes = True, []
    priors = [GAUSS, Prior.constant(1.0), Prior.discrete([1.0, -3.0], [0.5, 0.5])]
    worst_fd = 0.0
    for prior in priors:
        for v in (0.01, 0.1, 1.0):
            p = InnerDenoiserParams(prior, 16, 4096, v)
            span = 10 * math.sqrt(prior.second_moment() / 16) + 10 * math.sqrt(p.v_kN)
            y = np.linspace(-span, span, 241)
            fa = f_A(p, math.sqrt(16) * y)
            ok &= bool(np.all((fa >= 0) & (fa <= 1)))
            ok &= bool(np.all(posterior_variance(p, y) >= 0))
            for yi in y:
                h = 1e-6 * max(1.0, abs(yi))
                fd = (float(f_X(p, yi + h)) - float(f_X(p, yi - h))) / (2 * h)
                an = float(f_X_prime(p, yi))
                worst_fd = max(worst_fd, abs(fd - an) / max(abs(an), 1e-3))
    ok &= worst_fd <= 1e-5
    notes.append(f"f_X' vs finite differences {worst_fd:.1e} (<= 1e-5)")

    z = np.concatenate([-np.geomspace(1e-3, 1e6, 300), np.geomspace(1e-3, 1e6, 300)])
    sym = outer_onebit(z, 1.0, 1.0, 0.0), outer_onebit(-z, -1.0, 1.0, 0.0)
    ok &= bool(np.array_equal(sym[0].value, -sym[1].value) and np.array_equal(sym[0].dz, sym[1].dz))
    ok &= all(bool(np.all(np.isfinite(e.value)) and np.all(np.isfinite(e.dz))) for e in sym)
    notes.append("1-bit symmetry exact, finite to |z| = 1e6")

    worst_q = 0.0
    for x in (0.01, 1.0, 3.7, 20.0):
        r = math.sqrt(x)
        val, _ = integrate.quad(lambda u: u * u * norm.pdf(u), -r, r, epsabs=1e-14, epsrel=1e-13)
        worst_q = max(worst_q, abs(float(truncated_second_moment(GAUSS, x)) - val))
    ok &= worst_q <= 1e-10
    notes.append(f"truncated second moment vs quadrature {worst_q:.1e} (<= 1e-10)")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 10
    assert report("10", bool(ok), f"{'; '.join(notes)}; f_A in [0, 1], v_post >= 0; {elapsed:.1f} s (< 10 s)")


def test_criterion_11_baseline_oracles(report):
    import itertools

    matches = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((16, 32))
        x = np.zeros(32)
        x[rng.choice(32, 2, replace=False)] = rng.standard_normal(2) / math.sqrt(2)
        y = A @ x + 1e-3 * rng.standard_normal(16)
        best = min(
            itertools.combinations(range(32), 2),
            key=lambda s: np.linalg.norm(y - A[:, s] @ np.linalg.lstsq(A[:, s], y, rcond=None)[0]),
        )
        matches += set(np.flatnonzero(omp(A, y, 2))) == set(best)

    scalar_err = 0.0
    for a, yv, lam in ((2.0, 3.0, 0.5), (-1.5, 0.7, 0.1), (0.3, -4.0, 0.05)):
        res = fista(np.array([[a]]), np.array([yv]), FistaConfig(lam, max_iters=500))
        scalar_err = max(scalar_err, abs(res.x[0] - float(soft_threshold(a * yv, lam)) / (a * a)))

    rng = np.random.default_rng(11)
    A = rng.standard_normal((40, 100))
    y = A[:, :5] @ rng.standard_normal(5) + 0.01 * rng.standard_normal(40)
    lam0 = np.max(np.abs(A.T @ y)) / 40
    zero_ok = all(np.all(fista(A, y, FistaConfig(lam, max_iters=200)).x == 0) for lam in (lam0, 3 * lam0))

    ok = matches >= 18 and scalar_err <= 1e-8 and zero_ok
    assert report("11", ok, f"OMP exhaustive oracle {matches}/20 (>= 18); FISTA scalar error {scalar_err:.1e} (<= 1e-8); zero solution exact: {zero_ok}")
