"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .baselines import ConvergenceError
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .gamp import GampError
from .harness import compute_thresholds, run_experiment
from .model import Channel, DomainError, parse_prior
from .plots import write_script
from .sevo import BracketError, PrecisionError, lemma1_asymptote, lemma1_curve, se_run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# desk-scale presets, one per plot script fig1.gp .. fig6.gp
BENCH_PRESETS = {
    1: {"experiment": "lemma1", "gamma": 0.25, "k": None, "prior": "gauss:1"},
    2: {"experiment": "se_chart", "channel": {"kind": "linear", "snr_db": 40}, "deltas": [0.5, 1.0, 1.5]},
    3: {
        "experiment": "gamp_sweep",
        "channel": {"kind": "linear", "snr_db": 40},
        "deltas": [0.4, 0.6, 0.8, 1.0, 1.2, 1.6, 2.0, 2.4],
        "algorithms": ["gamp", "fista", "omp"],
    },
    4: {
        "experiment": "convergence",
        "channel": {"kind": "linear", "snr_db": 40},
        "deltas": [1.5],
        "algorithms": ["gamp", {"name": "fista", "lambda": "default"}, "omp"],
    },
    5: {"experiment": "se_chart", "channel": {"kind": "onebit", "sigma2": 0.0}, "deltas": [1.0, 2.0, 4.0]},
    6: {
        "experiment": "gamp_sweep",
        "channel": {"kind": "onebit", "sigma2": 0.0},
        "deltas": [1.0, 2.0, 4.0, 6.0, 8.0],
        "algorithms": ["gamp", "biht", "glasso"],
    },
}


def _add_common(p, config=False):
    if config:
        p.add_argument("--config", metavar="PATH", help="JSON experiment config")
    p.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--trials", type=int, help="Monte Carlo trials per delta")
    p.add_argument("--threads", type=int, help="worker processes (default: $SUBLINEAR_GAMP_THREADS or 1)")
    p.add_argument("--delta", type=float, action="append", help="prefactor delta (repeatable)")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")


def _add_model(p):
    p.add_argument("--channel", choices=("linear", "onebit"), default="linear")
    p.add_argument("--prior", default="gauss:1", help="gauss:P, const:u or discrete:u1@p1,...")
    p.add_argument("--sigma2", type=float, default=None, help="noise variance")
    p.add_argument("--snr-db", type=float, default=None, help="1/sigma2 in dB (alternative to --sigma2)")


def _u64(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sublinear-gamp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("se", help="print state-evolution traces")
    _add_common(p)
    _add_model(p)
    p.add_argument("--T-max", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-12)

    p = sub.add_parser("run", help="run an experiment from a JSON config")
    _add_common(p, config=True)

    p = sub.add_parser("bench", help="run a desk-scale figure analogue")
    _add_common(p, config=False)
    p.add_argument("--figure", type=int, choices=sorted(BENCH_PRESETS), required=True)

    p = sub.add_parser("lemma1", help="expected finite-N error of the spike-and-slab estimator")
    _add_common(p)
    p.add_argument("--prior", default="gauss:1")
    p.add_argument("--gamma", type=float, default=0.25)
    p.add_argument("--v", type=float, action="append", help="noise level (repeatable)")
    p.add_argument("--log2n", type=int, action="append", help="log2 N (repeatable)")

    p = sub.add_parser("threshold", help="reconstruction thresholds by bisection")
    _add_common(p)
    _add_model(p)
    p.add_argument("--lo", type=float, default=0.05)
    p.add_argument("--hi", type=float, default=20.0)
    p.add_argument("--tol-delta", type=float, default=1e-3)

    p = sub.add_parser("plot", help="(re)write the gnuplot script for an output directory")
    p.add_argument("--out", metavar="DIR", required=True)
    p.add_argument("--quiet", action="store_true")
    return parser


def _say(args, text):
    if not args.quiet:
        print(text)


def _sigma2(args):
    if args.sigma2 is not None and args.snr_db is not None:
        raise ConfigError("--sigma2", "give --sigma2 or --snr-db, not both")
    if args.snr_db is not None:
        return 10.0 ** (-args.snr_db / 10.0)
    if args.sigma2 is not None:
        return args.sigma2
    return 1e-4 if args.channel == "linear" else 0.0


def _model(args):
    try:
        return Channel(args.channel, _sigma2(args)), parse_prior(args.prior)
    except DomainError as exc:
        raise ConfigError("--prior/--channel", str(exc)) from exc


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    return cfg.override(
        master_seed=args.seed,
        output=args.out,
        trials=args.trials,
        threads=args.threads,
        deltas=args.delta,
    )


def _report(args, result):
    for name, path in result.files.items():
        _say(args, f"{name}: {path}")
    for row in result.summary:
        if row["iter"] == max(r["iter"] for r in result.summary if r["algorithm"] == row["algorithm"]):
            _say(
                args,
                f"delta_eff={row['delta_eff']:.4f} {row['algorithm']:>6s} iter={row['iter']:4d} "
                f"median use={row['use_median']:.3e} median nse={row['nse_median']:.3e}",
            )


def cmd_se(args):
    channel, prior = _model(args)
    deltas = args.delta or [1.0]
    for d in deltas:
        if not d > 0:
            raise ConfigError("--delta", "must be > 0")
        trace = se_run(channel, prior, d, T_max=args.T_max, tol=args.tol)
        print(f"# SE trace: channel={channel.kind} sigma2={channel.sigma2:g} prior={prior.describe()} delta={d:g}")
        print("t,v_in,v_out")
        for t, vi in enumerate(trace.v_in):
            vo = trace.v_out[t] if t < len(trace.v_out) else float("nan")
            print(f"{t},{vi:.12e},{vo:.12e}")
        print(
            f"# limit v_in={trace.v_in_limit:.6e} fixed_points={trace.fixed_point_count} "
            f"converged={trace.converged} tangency={trace.tangency}"
        )
    return EXIT_OK


def cmd_run(args):
    if not args.config:
        raise ConfigError("--config", "a config file is required")
    cfg = _apply_overrides(load_config(args.config), args)
    result = run_experiment(cfg)
    _report(args, result)
    return EXIT_OK


def cmd_bench(args):
    raw = dict(BENCH_PRESETS[args.figure])
    raw["output"] = f"bench_fig{args.figure}"
    cfg = _apply_overrides(config_from_dict(raw), args)
    result = run_experiment(cfg)
    _report(args, result)
    return EXIT_OK


def cmd_lemma1(args):
    try:
        prior = parse_prior(args.prior)
    except DomainError as exc:
        raise ConfigError("--prior", str(exc)) from exc
    vs = args.v or [0.5, 1.0, 2.0]
    grid = args.log2n or [10, 20, 50, 100, 200, 500, 1000]
    print("v,log2N,error,asymptote")
    for v in vs:
        asym = lemma1_asymptote(prior, v)
        for n, val in zip(grid, lemma1_curve(prior, v, args.gamma, grid)):
            print(f"{v:g},{n},{val:.10e},{asym:.10e}")
    return EXIT_OK


def cmd_threshold(args):
    channel, prior = _model(args)
    raw = {
        "experiment": "threshold",
        "channel": {"kind": channel.kind, "sigma2": channel.sigma2},
        "prior": args.prior,
        "delta_lo": args.lo,
        "delta_hi": args.hi,
        "tol_delta": args.tol_delta,
    }
    found = compute_thresholds(config_from_dict(raw))

    def show(th):
        return f"not bracketed in [{args.lo:g}, {args.hi:g}]" if th is None else f"{float(th):.6f}"

    line = f"delta* = {show(found['delta_star'])}"
    if "prop1" in found:
        line += f"    closed form 2(1 + sigma2/u_min^2) = {found['prop1']:.6f}"
    print(line)
    print(f"delta_w* = {show(found['delta_weak'])}")
    return EXIT_OK


def cmd_plot(args):
    out = Path(args.out)
    try:
        cfg = load_config(out / "config.json")
        info = json.loads((out / "info.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError("--out", f"missing run output: {exc.filename}") from exc
    path = write_script(cfg, out, info)
    _say(args, f"plot: {path}" if path else "no figure for this experiment")
    return EXIT_OK


COMMANDS = {
    "se": cmd_se,
    "run": cmd_run,
    "bench": cmd_bench,
    "lemma1": cmd_lemma1,
    "threshold": cmd_threshold,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GampError as exc:
        print(f"numerical failure in {exc.equation or 'GAMP'}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PrecisionError as exc:
        print(f"numerical failure in the finite-N quadrature: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConvergenceError as exc:
        print(f"numerical failure in the FISTA step search: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (BracketError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
