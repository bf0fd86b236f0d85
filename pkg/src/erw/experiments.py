"""Experiment configuration, dispatch, and table output.

A configuration is a flat JSON object.  Each experiment has a fixed set of
required and optional keys; anything else is rejected so that typos fail
loudly instead of silently falling back to defaults.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

import erw
from erw import analysis, core, rmf, stats
from erw.errors import ConfigError, DomainError, ResourceLimitError
from erw.rng import MASK64, Stream

EXPERIMENTS = ("simulate", "exact", "moments", "hitting", "curve", "transience", "lil", "rmf")

_COMMON = {"experiment", "output_path"}
_REQUIRED = {
    "simulate": {"p", "horizon", "master_seed"},
    "exact": {"p", "n"},
    "moments": {"p", "horizon"},
    "hitting": {"p", "m", "x", "cap", "trials", "master_seed"},
    "curve": {"p", "horizons", "trials", "master_seed"},
    "transience": {"p", "horizon", "trials", "master_seed"},
    "lil": {"p", "horizon", "trials", "master_seed"},
    "rmf": {"p", "M", "total_steps", "trials", "master_seed"},
}
_OPTIONAL = {
    "simulate": {"r", "trials", "mode"},
    "exact": {"r"},
    "moments": {"r"},
    "hitting": {"compare_bound"},
    "curve": {"r"},
    "transience": {"r", "epsilon"},
    "lil": {"r"},
    "rmf": {"mode"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    p: float | None = None
    r: float | None = None
    M: int | None = None
    total_steps: int | None = None
    n: int | None = None
    horizon: int | None = None
    horizons: str | None = None
    cap: int | None = None
    m: int | None = None
    x: int | None = None
    trials: int | None = None
    master_seed: int | None = None
    mode: str | None = None
    epsilon: float | None = None
    compare_bound: bool | None = None
    output_path: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def params(self) -> core.WalkParams:
        return core.WalkParams(self.p, 0.5 if self.r is None else self.r)

    @property
    def horizon_list(self) -> list[int]:
        return _parse_horizons(self.horizons)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_INT_KEYS = {"M", "total_steps", "n", "horizon", "cap", "m", "x", "trials", "master_seed"}
_FLOAT_KEYS = {"p", "r", "epsilon"}
_STR_KEYS = {"experiment", "horizons", "mode", "output_path"}
_BOOL_KEYS = {"compare_bound"}


def _parse_horizons(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",")]
    except ValueError:
        raise ConfigError(f"horizons must be comma-separated integers, got {text!r}", key="horizons") from None
    if not values or any(v < 1 for v in values) or any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("horizons must be positive and strictly increasing", key="horizons")
    return values


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigError(f"duplicate key {k!r}", key=k)
        out[k] = v
    return out


def _coerce(key: str, value):
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key!r} must be an integer, got {value!r}", key=key)
    elif key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key!r} must be a number, got {value!r}", key=key)
        value = float(value)
    elif key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigError(f"{key!r} must be a string, got {value!r}", key=key)
    elif key in _BOOL_KEYS:
        if not isinstance(value, bool):
            raise ConfigError(f"{key!r} must be true or false, got {value!r}", key=key)
    return value


def _validate(cfg: ExperimentConfig) -> None:
    """Range checks (config errors) then experiment preconditions (domain/resource errors)."""
    for key in ("p", "r"):
        v = getattr(cfg, key)
        if v is not None and not 0.0 <= v <= 1.0:
            raise ConfigError(f"{key!r} must lie in [0, 1], got {v!r}", key=key)
    for key in ("trials", "horizon", "cap", "n"):
        v = getattr(cfg, key)
        if v is not None and v < 1:
            raise ConfigError(f"{key!r} must be >= 1, got {v!r}", key=key)
    if cfg.total_steps is not None and cfg.total_steps < 0:
        raise ConfigError("'total_steps' must be >= 0", key="total_steps")
    if cfg.master_seed is not None and not 0 <= cfg.master_seed <= MASK64:
        raise ConfigError("'master_seed' must be a 64-bit unsigned integer", key="master_seed")
    if cfg.epsilon is not None and not cfg.epsilon > 0:
        raise ConfigError("'epsilon' must be > 0", key="epsilon")
    if cfg.mode is not None and cfg.mode not in core.MODES:
        raise ConfigError(f"'mode' must be one of {core.MODES}, got {cfg.mode!r}", key="mode")
    if cfg.horizons is not None:
        _parse_horizons(cfg.horizons)

    e = cfg.experiment
    if e == "exact" and cfg.n > core.MAX_EXACT_HORIZON:
        raise ResourceLimitError(f"exact enumeration is capped at n={core.MAX_EXACT_HORIZON}, got {cfg.n}")
    if e == "rmf" and cfg.M < 2:
        raise DomainError(f"rmf needs M >= 2 (an influencer distinct from the mover), got M={cfg.M}")
    if e == "hitting":
        if cfg.m < 1 or cfg.x == 0:
            raise DomainError("hitting needs m >= 1 and x != 0")
        core.check_reachable(cfg.x, cfg.m)
        if cfg.compare_bound and not cfg.p < 1.0 / 6.0:
            raise DomainError(f"return-time bound is undefined for p >= 1/6 (p={cfg.p})")
    if e == "transience" and not cfg.p > 0.75:
        raise DomainError(f"transience needs p > 3/4, got p={cfg.p}")


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if "experiment" not in raw:
        raise ConfigError("missing required key 'experiment'", key="experiment")
    experiment = raw["experiment"]
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}", key="experiment")
    allowed = _COMMON | _REQUIRED[experiment] | _OPTIONAL[experiment]
    for key, value in raw.items():
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}", key=key)
        if key not in allowed:
            raise ConfigError(f"key {key!r} is not used by experiment {experiment!r}", key=key)
        if isinstance(value, (dict, list)) or value is None:
            raise ConfigError(f"{key!r} must be a scalar value", key=key)
    for key in sorted(_REQUIRED[experiment] - raw.keys()):
        raise ConfigError(f"missing required key {key!r} for experiment {experiment!r}", key=key)
    cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in raw.items()})
    _validate(cfg)
    return cfg


# -- results ------------------------------------------------------------------


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[tuple]
    metadata: dict = field(default_factory=dict)
    elapsed: float = 0.0  # wall-clock seconds; never emitted, so outputs stay byte-identical

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"row {row!r} does not match columns {self.columns!r}")


def _summary_row(s) -> tuple:
    return (s.count, s.mean, s.stderr, s.ci_low, s.ci_high, s.censored_count)


_SUMMARY_COLUMNS = ["count", "mean", "stderr", "ci_low", "ci_high", "censored_count"]


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ResultTable:
    _validate(cfg)
    start = time.perf_counter()
    e = cfg.experiment
    seed = cfg.master_seed

    if e == "simulate":
        rows = []
        for t in range(cfg.trials or 1):
            traj = core.sample_trajectory(cfg.params, cfg.horizon, cfg.mode or "marginal", Stream.for_trial(seed, t))
            rows.extend((t, k + 1, int(x)) for k, x in enumerate(traj.positions))
        table = ResultTable(["trial", "k", "x"], rows)
    elif e == "exact":
        pmf = core.exact_distribution(cfg.params, cfg.n)
        table = ResultTable(["x", "mass"], [(int(x), float(m)) for x, m in zip(pmf.support, pmf.mass)])
    elif e == "moments":
        means = analysis.mean_sequence(cfg.params, cfg.horizon)
        table = ResultTable(["n", "mean"], [(k + 1, float(v)) for k, v in enumerate(means)])
    elif e == "hitting":
        s = stats.hitting_time_trials(cfg.m, cfg.x, cfg.params, cfg.cap, cfg.trials, seed, threads)
        cols, row = list(_SUMMARY_COLUMNS), _summary_row(s)
        if cfg.compare_bound:
            cols.append("bound")
            row += (stats.bound_positive_recurrence(cfg.p, cfg.x),)
        table = ResultTable(cols, [row])
    elif e == "curve":
        c = stats.return_probability_curve(cfg.params, cfg.horizon_list, cfg.trials, seed, threads)
        table = ResultTable(
            ["horizon", "no_return_fraction", "trials"],
            [(int(h), float(f), c.trials) for h, f in zip(c.horizons, c.no_return)],
        )
    elif e == "transience":
        eps = 0.1 if cfg.epsilon is None else cfg.epsilon
        est = stats.transience_mass_estimate(cfg.params, cfg.horizon, cfg.trials, seed, eps, threads)
        table = ResultTable(
            ["horizon", *_SUMMARY_COLUMNS, "epsilon", "fraction_above"],
            [(est.horizon, *_summary_row(est.summary), est.epsilon, est.fraction_above)],
        )
    elif e == "lil":
        diags = stats.lil_diagnostics(cfg.params, cfg.horizon, cfg.trials, seed, threads)
        table = ResultTable(
            ["trial", "zero_hits", "last_return", "sign_changes", "max_lil_stat", "max_lil_critical"],
            [
                (t, d.zero_hits, d.last_return, d.sign_changes, d.max_lil_stat, d.max_lil_critical)
                for t, d in enumerate(diags)
            ],
        )
    elif e == "rmf":
        est = rmf.rmf_estimate(rmf.RmfParams(cfg.M, cfg.p, cfg.total_steps), cfg.trials, seed, cfg.mode or "marginal", threads)
        table = ResultTable(
            ["run", "mean_ratio", "mean_abs_ratio"],
            [(t, float(a), float(b)) for t, (a, b) in enumerate(zip(est.run_ratio, est.run_abs_ratio))],
        )
    else:  # pragma: no cover - parse_config rejects unknown experiments
        raise ConfigError(f"unknown experiment {e!r}", key="experiment")

    table.metadata = {"config": cfg.to_dict(), "code_version": erw.__version__, "master_seed": seed}
    table.elapsed = time.perf_counter() - start
    return table


# -- emit ---------------------------------------------------------------------


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _json_value(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if math.isnan(v) or math.isinf(v) else v
    return v


def emit(table: ResultTable, fmt: str = "csv") -> bytes:
    """Serialise ``table``; CSV carries rows only, JSON also carries the metadata."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_csv_cell(v) for v in row])
        return buf.getvalue().encode()
    if fmt == "json":
        doc = {
            "metadata": table.metadata,
            "rows": [{c: _json_value(v) for c, v in zip(table.columns, row)} for row in table.rows],
        }
        return (json.dumps(doc, allow_nan=False) + "\n").encode()
    raise ConfigError(f"unknown output format {fmt!r}", key="format")


def write_output(data: bytes, path: str) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(f"cannot write results to {path!r}: {exc.strerror or exc}") from exc
