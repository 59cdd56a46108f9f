"""Seeded Monte Carlo and state-evolution experiments with CSV output.

Every trial draws its signal, matrix and noise from
``trial_rng(master_seed, delta_index, trial)``, so results do not depend on
scheduling.  Trials run on a process pool and are merged in
``(delta, trial)`` order.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import plots
from .baselines import (
    BihtConfig,
    FistaConfig,
    biht,
    fista,
    glasso,
    lambda_default,
    lambda_glasso_center,
    lambda_grid,
    omp,
)
from .config import ExperimentConfig, dump_config
from .gamp import gamp_run
from .metrics import metric_normalized, metric_unnormalized, support_recovered
from .model import sample_matrix, sample_signal, trial_rng
from .sevo import (
    BracketError,
    exit_chart,
    chart_fixed_points,
    lemma1_asymptote,
    lemma1_curve,
    prop1_threshold,
    reconstruction_threshold,
    se_run,
    weak_reconstruction_threshold,
)

log = logging.getLogger(__name__)

RAW_HEADER = "delta_eff,algorithm,trial,iter,use,nse,support_ok,seconds"
SUMMARY_HEADER = (
    "delta_eff,algorithm,iter,n,use_mean,use_median,use_p10,use_p90,"
    "nse_mean,nse_median,nse_p10,nse_p90,support_rate"
)
THREADS_ENV = "SUBLINEAR_GAMP_THREADS"
# pilot trials for the lambda sweep use their own streams
PILOT_KEY = 2**32


@dataclass(frozen=True)
class TrialRecord:
    """One (trial, algorithm, iteration) row of the raw CSV.

    Metrics of a diverged run are NaN and written as empty fields.
    """

    delta_eff: float
    algorithm: str
    trial: int
    iteration: int
    use: float
    nse: float
    support_ok: float
    seconds: float = math.nan

    def csv_row(self) -> str:
        ok = "" if math.isnan(self.support_ok) else str(int(self.support_ok))
        return ",".join(
            [
                _fmt(self.delta_eff),
                self.algorithm,
                str(self.trial),
                str(self.iteration),
                _fmt(self.use),
                _fmt(self.nse),
                ok,
                _fmt(self.seconds),
            ]
        )


def _fmt(value) -> str:
    if value is None or not math.isfinite(value):
        return ""
    return repr(float(value))


def _parse(text):
    return float(text) if text else math.nan


def read_raw_csv(path):
    """Parse a raw CSV back into TrialRecords (comment lines skipped)."""
    records = []
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    if not lines or lines[0] != RAW_HEADER:
        raise ValueError(f"{path}: not a raw trial CSV")
    for line in lines[1:]:
        d, alg, trial, it, use, nse, ok, sec = line.split(",")
        records.append(TrialRecord(float(d), alg, int(trial), int(it), _parse(use), _parse(nse), _parse(ok), _parse(sec)))
    return records


@dataclass
class ExperimentResult:
    files: dict
    records: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    info: dict = field(default_factory=dict)


def resolve_threads(requested=None) -> int:
    """--threads, else $SUBLINEAR_GAMP_THREADS, else 1."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV, "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    return 1


def _map(fn, tasks, threads):
    """Ordered map, on a process pool when ``threads > 1``."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# single trial


def _problem(cfg: ExperimentConfig, delta_index: int, trial_key: int):
    dims = cfg.dims(cfg.deltas[delta_index])
    rng = trial_rng(cfg.master_seed, delta_index, trial_key)
    truth = sample_signal(dims, cfg.prior_obj, rng)
    A = sample_matrix(dims, rng)
    y = cfg.channel_obj.apply(A @ truth.x, rng)
    return dims, truth, A, y


def _metrics(x_hat, truth):
    return (
        metric_unnormalized(x_hat, truth.x),
        metric_normalized(x_hat, truth.x),
        float(support_recovered(x_hat, truth.support)),
    )


def _run_algorithm(cfg, alg, dims, truth, A, y, lam):
    """Return ``{iteration: (use, nse, support_ok)}`` and the final iteration index."""
    record_all = cfg.record == "all"
    iters = alg.iters(dims.k)
    history = {}

    def keep(it, x):
        if record_all:
            history[it] = _metrics(x, truth)

    keep(0, np.zeros(dims.N))
    if alg.name == "gamp":
        trace = gamp_run(A, y, cfg.channel_obj, cfg.prior_obj, dims, T=iters, truth=truth, raise_on_error=False)
        steps = range(iters + 1) if record_all else [iters]
        for t in steps:
            if t < len(trace.use):
                history[t] = (trace.use[t], trace.nse[t], trace.support_ok[t])
            else:
                history[t] = (math.nan, math.nan, math.nan)
        return history, iters
    if alg.name == "omp":
        x = omp(A, y, iters, callback=keep)
    elif alg.name == "biht":
        x = biht(A, y, BihtConfig(dims.k, iters), callback=keep)
    else:
        solver = fista if alg.name == "fista" else glasso
        x = solver(A, y, FistaConfig(lam, max_iters=iters), callback=keep).x
    if record_all:
        # early-stopped runs hold their last estimate
        last = history[0]
        for it in range(iters + 1):
            last = history.setdefault(it, last)
    else:
        history[iters] = _metrics(x, truth)
    return history, iters


def simulate_trial(cfg: ExperimentConfig, lambdas: dict, task) -> list:
    """All algorithms on one seeded problem instance; returns TrialRecords."""
    delta_index, trial = task
    dims, truth, A, y = _problem(cfg, delta_index, trial)
    out = []
    for alg in cfg.algorithms:
        start = time.perf_counter()
        history, final = _run_algorithm(cfg, alg, dims, truth, A, y, lambdas.get((delta_index, alg.name)))
        elapsed = time.perf_counter() - start
        for it in sorted(history):
            use, nse, ok = history[it]
            seconds = elapsed if cfg.record_timing and it == final else math.nan
            out.append(TrialRecord(dims.delta_eff, alg.name, trial, it, use, nse, ok, seconds))
    return out


# ---------------------------------------------------------------------------
# lambda selection


def _lambda_candidates(cfg: ExperimentConfig, alg, dims):
    if alg.name == "fista":
        center = lambda_default(max(cfg.sigma2, 1e-300), dims.M, dims.N)
    else:
        center = lambda_glasso_center(dims.M, dims.N)
    return lambda_grid(center, alg.sweep_points, alg.sweep_decades)


def _pilot_run(cfg: ExperimentConfig, task):
    delta_index, alg_index, lam, j = task
    alg = cfg.algorithms[alg_index]
    dims, truth, A, y = _problem(cfg, delta_index, PILOT_KEY + j)
    solver = fista if alg.name == "fista" else glasso
    x = solver(A, y, FistaConfig(lam, max_iters=alg.iters(dims.k))).x
    return metric_unnormalized(x, truth.x) if cfg.channel == "linear" else metric_normalized(x, truth.x)


def select_lambdas(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Per-(delta, algorithm) lambda: fixed, default, or the grid value with the
    smallest median final metric over the pilot trials."""
    lambdas, tasks, grids = {}, [], {}
    for di, delta in enumerate(cfg.deltas):
        dims = cfg.dims(delta)
        for ai, alg in enumerate(cfg.algorithms):
            if alg.name not in ("fista", "glasso"):
                continue
            if isinstance(alg.lam, float):
                lambdas[(di, alg.name)] = alg.lam
            elif alg.lam == "default":
                lambdas[(di, alg.name)] = lambda_default(cfg.sigma2, dims.M, dims.N)
            else:
                grid = _lambda_candidates(cfg, alg, dims)
                grids[(di, ai)] = grid
                tasks += [(di, ai, float(lam), j) for lam in grid for j in range(alg.pilot_trials)]
    scores = _map(partial(_pilot_run, cfg), tasks, threads)
    by_key = {}
    for (di, ai, lam, _), score in zip(tasks, scores):
        by_key.setdefault((di, ai), {}).setdefault(lam, []).append(score)
    for (di, ai), table in by_key.items():
        medians = [float(np.median(table[float(lam)])) for lam in grids[(di, ai)]]
        best = int(np.argmin(medians))
        lambdas[(di, cfg.algorithms[ai].name)] = float(grids[(di, ai)][best])
        if best in (0, len(medians) - 1):
            log.warning("lambda for %s at delta=%g sits on the grid edge", cfg.algorithms[ai].name, cfg.deltas[di])
    return lambdas


# ---------------------------------------------------------------------------
# summaries


def summarize(records) -> list:
    """One row per (delta_eff, algorithm, iter), in first-appearance order.

    Statistics use the finite values only; ``n`` counts them.
    """
    groups = {}
    for r in records:
        groups.setdefault((r.delta_eff, r.algorithm, r.iteration), []).append(r)
    rows = []
    for (d, alg, it), recs in groups.items():
        use = np.array([r.use for r in recs])
        nse = np.array([r.nse for r in recs])
        ok = np.array([r.support_ok for r in recs])
        use, nse, ok = use[np.isfinite(use)], nse[np.isfinite(nse)], ok[np.isfinite(ok)]
        row = {"delta_eff": d, "algorithm": alg, "iter": it, "n": len(use)}
        for name, vals in (("use", use), ("nse", nse)):
            if len(vals):
                row[f"{name}_mean"] = float(np.mean(vals))
                row[f"{name}_median"] = float(np.median(vals))
                row[f"{name}_p10"] = float(np.percentile(vals, 10))
                row[f"{name}_p90"] = float(np.percentile(vals, 90))
            else:
                row.update({f"{name}_{s}": math.nan for s in ("mean", "median", "p10", "p90")})
        row["support_rate"] = float(np.mean(ok)) if len(ok) else math.nan
        rows.append(row)
    return rows


def _summary_line(row) -> str:
    cols = SUMMARY_HEADER.split(",")
    parts = []
    for c in cols:
        v = row[c]
        parts.append(v if isinstance(v, str) else str(v) if isinstance(v, int) else _fmt(v))
    return ",".join(parts)


# ---------------------------------------------------------------------------
# output


def _header(cfg: ExperimentConfig, what: str, extra=()):
    effs = ";".join(_fmt(d) for d in cfg.delta_effs())
    lines = [
        f"# sublinear_gamp {what} schema={cfg.schema_version} experiment={cfg.experiment}",
        f"# config_hash={cfg.hash()}",
        f"# master_seed={cfg.master_seed}",
        f"# delta_eff={effs}",
    ]
    lines += [f"# {item}" for item in extra]
    return lines


def _write(path: Path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _prepare_output(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    return out


def _table(cfg, out, name, header, rows, what, extra=()):
    path = out / name
    _write(path, _header(cfg, what, extra) + [header] + [",".join(r) for r in rows])
    return path


def _monte_carlo(cfg: ExperimentConfig, out: Path, threads: int) -> ExperimentResult:
    lambdas = select_lambdas(cfg, threads)
    tasks = [(di, t) for di in range(len(cfg.deltas)) for t in range(cfg.trials)]
    chunks = _map(partial(simulate_trial, cfg, lambdas), tasks, threads)
    records = [r for chunk in chunks for r in chunk]
    summary = summarize(records)

    lam_notes = [f"lambda[{cfg.deltas[di]:g},{name}]={_fmt(lam)}" for (di, name), lam in sorted(lambdas.items())]
    raw_path = out / "raw.csv"
    _write(raw_path, _header(cfg, "raw", lam_notes) + [RAW_HEADER] + [r.csv_row() for r in records])

    info = {"lambdas": {f"{cfg.deltas[di]:g}:{name}": lam for (di, name), lam in lambdas.items()}}
    se_rows = []
    for d in cfg.delta_effs():
        trace = se_run(cfg.channel_obj, cfg.prior_obj, d, T_max=cfg.T_max, tol=cfg.tol)
        se_rows.append([_fmt(d), _fmt(trace.v_in_limit), str(trace.fixed_point_count)])
    extra = []
    if cfg.channel == "linear":
        try:
            weak = weak_reconstruction_threshold(cfg.channel_obj, cfg.prior_obj, cfg.delta_lo, cfg.delta_hi, cfg.tol_delta)
            info["delta_weak"] = weak.value
            extra.append(f"delta_weak={_fmt(weak.value)}")
        except BracketError as exc:
            log.warning("weak threshold not bracketed: %s", exc)
    sum_path = out / "summary.csv"
    _write(sum_path, _header(cfg, "summary", extra) + [SUMMARY_HEADER] + [_summary_line(r) for r in summary])
    se_path = _table(cfg, out, "se.csv", "delta_eff,v_in_limit,fixed_points", se_rows, "state evolution")
    files = {"raw": raw_path, "summary": sum_path, "se": se_path}
    return ExperimentResult(files, records, summary, info)


def _se_chart(cfg: ExperimentConfig, out: Path) -> ExperimentResult:
    chart_rows, trace_rows, point_rows = [], [], []
    info = {"fixed_points": {}}
    for d in cfg.deltas:
        curves = exit_chart(cfg.channel_obj, cfg.prior_obj, d)
        count, tangency = chart_fixed_points(curves)
        trace = se_run(cfg.channel_obj, cfg.prior_obj, d, T_max=cfg.T_max, tol=cfg.tol, classify=False)
        info["fixed_points"][f"{d:g}"] = count
        # thin the chart to keep files small; all crossings were counted above
        step = max(1, len(curves.x) // 1000)
        for x, phi, psi in zip(curves.x[::step], curves.phi[::step], curves.psi[::step]):
            chart_rows.append([_fmt(d), _fmt(x), _fmt(phi), _fmt(psi) if math.isfinite(psi) else ""])
        for t, (vi, vo) in enumerate(zip(trace.v_in, np.append(trace.v_out, np.nan))):
            trace_rows.append([_fmt(d), str(t), _fmt(vi), _fmt(vo), _fmt(2 * vo / d)])
        point_rows.append([_fmt(d), _fmt(trace.v_in_limit), str(count), str(int(tangency)), str(int(trace.converged))])
    files = {
        "chart": _table(cfg, out, "chart.csv", "delta,x,phi,psi", chart_rows, "chart"),
        "trace": _table(cfg, out, "se_trace.csv", "delta,t,v_in,v_out,x", trace_rows, "state evolution"),
        "points": _table(cfg, out, "se_points.csv", "delta,v_in_limit,fixed_points,tangency,converged", point_rows, "fixed points"),
    }
    return ExperimentResult(files, info=info)


def _se_sweep(cfg: ExperimentConfig, out: Path) -> ExperimentResult:
    rows = []
    for d in cfg.deltas:
        trace = se_run(cfg.channel_obj, cfg.prior_obj, d, T_max=cfg.T_max, tol=cfg.tol)
        rows.append([_fmt(d), _fmt(trace.v_in_limit), str(trace.fixed_point_count), str(int(trace.converged)), str(len(trace.v_out))])
    path = _table(cfg, out, "se_sweep.csv", "delta,v_in_limit,fixed_points,converged,iterations", rows, "state evolution")
    return ExperimentResult({"se_sweep": path})


def _lemma1(cfg: ExperimentConfig, out: Path) -> ExperimentResult:
    rows = []
    prior = cfg.prior_obj
    for v in cfg.v_list:
        curve = lemma1_curve(prior, v, cfg.gamma, cfg.log2N_list)
        asym = lemma1_asymptote(prior, v)
        for n, val in zip(cfg.log2N_list, curve):
            k = max(1, round(2.0 ** (cfg.gamma * n)))
            rows.append([_fmt(v), str(n), str(k), _fmt(val), _fmt(asym)])
    path = _table(cfg, out, "lemma1.csv", "v,log2N,k,error,asymptote", rows, "lemma1", [f"gamma={cfg.gamma:g}"])
    return ExperimentResult({"lemma1": path})


def compute_thresholds(cfg: ExperimentConfig) -> dict:
    """delta* and delta_w* by bisection (None when not bracketed), plus the
    closed form for a constant-amplitude prior on the linear channel."""
    ch, prior = cfg.channel_obj, cfg.prior_obj
    result = {}
    for name, fn in (("delta_star", reconstruction_threshold), ("delta_weak", weak_reconstruction_threshold)):
        try:
            result[name] = fn(ch, prior, cfg.delta_lo, cfg.delta_hi, cfg.tol_delta)
        except BracketError as exc:
            log.info("%s: %s", name, exc)
            result[name] = None
    if ch.kind == "linear" and prior.kind == "constant":
        result["prop1"] = prop1_threshold(prior.u_min(), ch.sigma2)
    return result


def _threshold(cfg: ExperimentConfig, out: Path) -> ExperimentResult:
    found = compute_thresholds(cfg)
    rows = []
    for name, th in found.items():
        if th is None:
            rows.append([name, "", _fmt(cfg.delta_lo), _fmt(cfg.delta_hi)])
        elif isinstance(th, float):
            rows.append([name, _fmt(th), "", ""])
        else:
            rows.append([name, _fmt(th.value), _fmt(th.lo), _fmt(th.hi)])
    path = _table(cfg, out, "threshold.csv", "quantity,value,lo,hi", rows, "threshold")
    info = {k: (None if v is None else float(v)) for k, v in found.items()}
    return ExperimentResult({"threshold": path}, info=info)


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ExperimentResult:
    """Run ``cfg`` and write its CSV files (and a gnuplot script when
    ``cfg.plot``) under ``cfg.output``."""
    out = _prepare_output(cfg)
    threads = resolve_threads(threads if threads is not None else cfg.threads)
    started = time.perf_counter()
    if cfg.experiment in ("gamp_sweep", "convergence"):
        result = _monte_carlo(cfg, out, threads)
    elif cfg.experiment == "se_chart":
        result = _se_chart(cfg, out)
    elif cfg.experiment == "se_sweep":
        result = _se_sweep(cfg, out)
    elif cfg.experiment == "lemma1":
        result = _lemma1(cfg, out)
    else:
        result = _threshold(cfg, out)
    result.info["seconds"] = time.perf_counter() - started
    result.info.update(config_hash=cfg.hash(), master_seed=cfg.master_seed, delta_eff=cfg.delta_effs())
    (out / "config.json").write_text(dump_config(cfg), encoding="utf-8")
    (out / "info.json").write_text(json.dumps(result.info, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    if cfg.plot:
        script = plots.write_script(cfg, out, result.info)
        if script is not None:
            result.files["plot"] = script
    return result
