"""Experiment configuration: a versioned JSON schema with field-level validation."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

from .model import Channel, DomainError, Prior, ProblemDims, parse_prior, snr_db_to_sigma2

SCHEMA_VERSION = 1
KINDS = ("se_chart", "se_sweep", "gamp_sweep", "convergence", "lemma1", "threshold")
ALGORITHMS = {
    "linear": ("gamp", "fista", "omp"),
    "onebit": ("gamp", "biht", "glasso"),
}
# defaults match the desk-scale protocol
DEFAULT_ITERATIONS = {"gamp": 20, "fista": 1000, "omp": None, "biht": 20, "glasso": 20}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class AlgorithmConfig:
    name: str
    iterations: int | None = None
    # "sweep", "default" or a positive number (FISTA and GLasso only)
    lam: str | float = "sweep"
    sweep_points: int = 12
    sweep_decades: float = 3.0
    pilot_trials: int = 10

    def iters(self, k: int) -> int:
        if self.iterations is not None:
            return self.iterations
        return k if self.name == "omp" else DEFAULT_ITERATIONS[self.name]


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    deltas: tuple = ()
    N: int = 4096
    k: int | None = 16
    gamma: float | None = None
    channel: str = "linear"
    sigma2: float = 1e-4
    prior: str = "gauss:1"
    algorithms: tuple = ()
    trials: int = 100
    master_seed: int = 0
    output: str = "out"
    threads: int | None = None
    record: str = "final"
    record_timing: bool = False
    plot: bool = True
    v_list: tuple = (0.5, 1.0, 2.0)
    log2N_list: tuple = (10, 20, 50, 100, 200, 500, 1000)
    delta_lo: float = 0.05
    delta_hi: float = 20.0
    tol_delta: float = 1e-3
    T_max: int = 10_000
    tol: float = 1e-12
    schema_version: int = SCHEMA_VERSION

    # -- derived objects -------------------------------------------------
    @property
    def channel_obj(self) -> Channel:
        return Channel(self.channel, self.sigma2)

    @property
    def prior_obj(self) -> Prior:
        return parse_prior(self.prior)

    @property
    def sparsity(self) -> int:
        if self.k is not None:
            return self.k
        return max(1, round(self.N**self.gamma))

    def dims(self, delta) -> ProblemDims:
        return ProblemDims(self.N, self.sparsity, float(delta))

    def delta_effs(self):
        if self.experiment in ("gamp_sweep", "convergence"):
            return [self.dims(d).delta_eff for d in self.deltas]
        return [float(d) for d in self.deltas]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["deltas"] = list(self.deltas)
        out["v_list"] = list(self.v_list)
        out["log2N_list"] = list(self.log2N_list)
        out["algorithms"] = [_algorithm_dict(a) for a in self.algorithms]
        return out

    def hash(self) -> str:
        """SHA-256 of the canonical JSON, excluding fields that do not change results."""
        d = self.to_dict()
        for key in ("output", "threads", "plot"):
            d.pop(key)
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def override(self, **changes) -> ExperimentConfig:
        changes = {k: v for k, v in changes.items() if v is not None}
        if "deltas" in changes:
            changes["deltas"] = tuple(float(d) for d in changes["deltas"])
        return validate(replace(self, **changes))


def _algorithm_dict(a: AlgorithmConfig) -> dict:
    d = asdict(a)
    d["lambda"] = d.pop("lam")
    return d


def _require(cond, field_name, message):
    if not cond:
        raise ConfigError(field_name, message)


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _number(raw, key, default, positive=False, nonneg=False):
    value = raw.get(key, default)
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), key, f"expected a number, got {value!r}")
    _require(math.isfinite(value), key, "must be finite")
    if positive:
        _require(value > 0, key, "must be > 0")
    if nonneg:
        _require(value >= 0, key, "must be >= 0")
    return float(value)


def _integer(raw, key, default, minimum=None):
    value = raw.get(key, default)
    _require(_is_int(value), key, f"expected an integer, got {value!r}")
    if minimum is not None:
        _require(value >= minimum, key, f"must be >= {minimum}")
    return value


def _parse_channel(raw):
    entry = raw.get("channel", "linear")
    if isinstance(entry, str):
        entry = {"kind": entry}
    _require(isinstance(entry, dict), "channel", "expected a string or an object")
    kind = entry.get("kind", "linear")
    _require(kind in ALGORITHMS, "channel.kind", f"must be one of {sorted(ALGORITHMS)}")
    if "snr_db" in entry:
        _require("sigma2" not in entry, "channel", "give sigma2 or snr_db, not both")
        snr = _number(entry, "snr_db", None)
        return kind, snr_db_to_sigma2(snr)
    default = 1e-4 if kind == "linear" else 0.0
    return kind, _number(entry, "sigma2", raw.get("sigma2", default), nonneg=True)


def _parse_algorithms(raw, channel):
    allowed = ALGORITHMS[channel]
    items = raw.get("algorithms", ["gamp"])
    _require(isinstance(items, list) and items, "algorithms", "expected a non-empty list")
    out, seen = [], set()
    for i, item in enumerate(items):
        where = f"algorithms[{i}]"
        if isinstance(item, str):
            item = {"name": item}
        _require(isinstance(item, dict), where, "expected a name or an object")
        name = item.get("name")
        _require(name in allowed, f"{where}.name", f"must be one of {list(allowed)} for the {channel} channel")
        _require(name not in seen, f"{where}.name", f"duplicate algorithm {name!r}")
        seen.add(name)
        unknown = set(item) - {"name", "iterations", "lambda", "sweep_points", "sweep_decades", "pilot_trials"}
        _require(not unknown, where, f"unknown keys {sorted(unknown)}")
        iters = item.get("iterations")
        if iters is not None:
            _require(_is_int(iters) and iters >= 1, f"{where}.iterations", "must be an integer >= 1")
        lam = item.get("lambda", "sweep")
        if isinstance(lam, str):
            _require(lam in ("sweep", "default"), f"{where}.lambda", "must be 'sweep', 'default' or a number > 0")
            if lam == "default":
                _require(name == "fista", f"{where}.lambda", "'default' applies to FISTA on the linear channel only")
        else:
            _require(isinstance(lam, (int, float)) and lam > 0, f"{where}.lambda", "must be 'sweep', 'default' or a number > 0")
            lam = float(lam)
        out.append(
            AlgorithmConfig(
                name=name,
                iterations=iters,
                lam=lam,
                sweep_points=_integer(item, "sweep_points", 12, minimum=2),
                sweep_decades=_number(item, "sweep_decades", 3.0, positive=True),
                pilot_trials=_integer(item, "pilot_trials", 10, minimum=1),
            )
        )
    return tuple(out)


def _float_list(raw, key, default, positive=True):
    values = raw.get(key, default)
    _require(isinstance(values, (list, tuple)) and len(values) > 0, key, "expected a non-empty list")
    for i, v in enumerate(values):
        _require(isinstance(v, (int, float)) and not isinstance(v, bool), f"{key}[{i}]", f"expected a number, got {v!r}")
        _require(math.isfinite(v) and (v > 0 or not positive), f"{key}[{i}]", "must be finite and > 0")
    return tuple(float(v) for v in values)


_TOP_KEYS = {
    "schema_version", "experiment", "deltas", "N", "k", "gamma", "channel", "sigma2", "prior",
    "algorithms", "trials", "master_seed", "output", "threads", "record", "record_timing", "plot",
    "v_list", "log2N_list", "delta_lo", "delta_hi", "tol_delta", "T_max", "tol",
}


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate a config from parsed JSON."""
    _require(isinstance(raw, dict), "<root>", "expected a JSON object")
    version = raw.get("schema_version", SCHEMA_VERSION)
    _require(version == SCHEMA_VERSION, "schema_version", f"unsupported version {version!r} (expected {SCHEMA_VERSION})")
    unknown = set(raw) - _TOP_KEYS
    _require(not unknown, "<root>", f"unknown keys {sorted(unknown)}")
    kind = raw.get("experiment")
    _require(kind in KINDS, "experiment", f"must be one of {list(KINDS)}")
    channel, sigma2 = _parse_channel(raw)

    k, gamma = raw.get("k"), raw.get("gamma")
    if gamma is not None:
        _require(k is None, "gamma", "give k or gamma, not both")
        gamma = _number(raw, "gamma", None)
        _require(0 <= gamma < 1, "gamma", "must lie in [0, 1)")
    elif k is None:
        k = 16
    else:
        k = _integer(raw, "k", None, minimum=1)

    needs_deltas = kind not in ("lemma1", "threshold")
    deltas = _float_list(raw, "deltas", None) if needs_deltas or "deltas" in raw else ()
    prior = raw.get("prior", "gauss:1")
    _require(isinstance(prior, str), "prior", "expected a string such as 'gauss:1'")
    try:
        parse_prior(prior)
    except DomainError as exc:
        raise ConfigError("prior", str(exc)) from exc
    threads = raw.get("threads")
    if threads is not None:
        threads = _integer(raw, "threads", None, minimum=1)
    output = raw.get("output", "out")
    _require(isinstance(output, str) and output, "output", "expected a path")
    record = raw.get("record", "all" if kind == "convergence" else "final")
    _require(record in ("final", "all"), "record", "must be 'final' or 'all'")
    for key in ("record_timing", "plot"):
        _require(isinstance(raw.get(key, False), bool), key, "expected true or false")
    seed = raw.get("master_seed", 0)
    _require(_is_int(seed) and 0 <= seed < 2**64, "master_seed", "must be an integer in [0, 2^64)")

    cfg = ExperimentConfig(
        experiment=kind,
        deltas=deltas,
        N=_integer(raw, "N", 4096, minimum=2),
        k=k,
        gamma=gamma,
        channel=channel,
        sigma2=sigma2,
        prior=prior,
        algorithms=_parse_algorithms(raw, channel) if kind in ("gamp_sweep", "convergence") else (),
        trials=_integer(raw, "trials", 100, minimum=1),
        master_seed=seed,
        output=output,
        threads=threads,
        record=record,
        record_timing=raw.get("record_timing", False),
        plot=raw.get("plot", True),
        v_list=_float_list(raw, "v_list", [0.5, 1.0, 2.0]),
        log2N_list=tuple(int(v) for v in _float_list(raw, "log2N_list", [10, 20, 50, 100, 200, 500, 1000])),
        delta_lo=_number(raw, "delta_lo", 0.05, positive=True),
        delta_hi=_number(raw, "delta_hi", 20.0, positive=True),
        tol_delta=_number(raw, "tol_delta", 1e-3, positive=True),
        T_max=_integer(raw, "T_max", 10_000, minimum=1),
        tol=_number(raw, "tol", 1e-12, positive=True),
    )
    return validate(cfg)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Cross-field checks; returns ``cfg`` unchanged."""
    _require(cfg.trials >= 1, "trials", "must be >= 1")
    if cfg.threads is not None:
        _require(cfg.threads >= 1, "threads", "must be >= 1")
    _require(cfg.delta_lo < cfg.delta_hi, "delta_lo", "must be < delta_hi")
    if cfg.experiment not in ("lemma1", "threshold"):
        _require(len(cfg.deltas) > 0, "deltas", "must be non-empty")
        _require(all(d > 0 for d in cfg.deltas), "deltas", "must be > 0")
    if cfg.experiment in ("gamp_sweep", "convergence"):
        k = cfg.sparsity
        _require(1 <= k < cfg.N, "k", f"need 1 <= k < N, got k={k}, N={cfg.N}")
        for a in cfg.algorithms:
            if a.name in ("fista", "glasso") and a.lam == "sweep":
                _require(a.pilot_trials >= 1, "pilot_trials", "must be >= 1")
            if a.name == "fista" and a.lam == "default":
                _require(cfg.sigma2 > 0, "algorithms.lambda", "'default' needs sigma2 > 0")
        for d in cfg.deltas:
            M = cfg.dims(d).M
            if any(a.name == "omp" for a in cfg.algorithms):
                _require(k <= M, "deltas", f"OMP needs M >= k; delta={d} gives M={M}")
    if cfg.experiment in ("lemma1",):
        _require(cfg.gamma is not None, "gamma", "lemma1 needs gamma")
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read a JSON config file; missing files and bad JSON raise ConfigError."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError("--config", f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON in {path}: {exc}") from exc
    return config_from_dict(raw)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
