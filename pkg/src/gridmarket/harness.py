"""Run orchestration: config files, the run loop, sweeps, and exports.

Config files are flat ``key = value`` text (``#`` starts a comment). Keys and
defaults:

    n_middlemen = 10            n_users = 100
    supply_per_tick = 40        ticks_per_slow_step = 10000
    n_slow_steps = 2000         initial_cash = 21        (or 21,22,... per middleman)
    initial_price = uniform:0.5:1.5                      (or a single number)
    safety_margin_fraction = 0.1
    s_tol = 0.5                 c_tol = 0.5              (or uniform:lo:hi)
    rng_seed = 0                first_tick_bid_policy = user-count

A run writes, per record: an index CSV (one row per slow step), a histogram
CSV of positive index changes, a JSON summary, and a plot-data JSON holding
the half-log panel (linear bins over all changes) and the log-log panel
(geometric bins over positive changes). All outputs are byte-deterministic
functions of (config, seed); wall-clock duration stays in memory only.
"""

from __future__ import annotations

import glob as globlib
import json
import math
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from ._kernel import run_fast_window
from .dynamics import BRANCH_ADOPT, BRANCH_HALVE, BRANCH_HOLD, CAUSE_PRICE, CAUSE_SERVICE, slow_step
from .model import ConfigError, SimConfig, UniformSpec, init_market
from .stats import (
    AbsorbingDetection,
    DeltaDistribution,
    FitRefusedError,
    IndexSeries,
    TailFit,
    compute_deltas,
    detect_absorbing_state,
    fit_hill,
    fit_loglog,
    log_binned_histogram,
)

DEFAULT_DETECTION_WINDOW = 50

INDEX_CSV_HEADER = ("slow_step,index,switches_service,switches_price,"
                    "branch_halve,branch_hold,branch_adopt")
HISTOGRAM_CSV_HEADER = "bin_lo,bin_hi,count,density"


@dataclass(frozen=True)
class StepSummary:
    """Per-slow-step aggregates kept in the run record."""

    slow_step: int
    index: float
    switches_service: int
    switches_price: int
    branch_halve: int
    branch_hold: int
    branch_adopt: int
    user_entropy: float          # natural-log entropy of the user shares
    max_user_share: float


@dataclass
class RunRecord:
    config: SimConfig
    seed: int
    index_series: IndexSeries
    summaries: tuple
    deltas: DeltaDistribution
    hill_fit: TailFit
    loglog_fit: TailFit
    absorbing: AbsorbingDetection
    stopped_early_at: int        # -1 when the run went the full length
    duration_seconds: float


@dataclass(frozen=True)
class RunFailure:
    config: SimConfig
    seed: int
    error: str


def _parse_scalar_or_uniform(key: str, raw: str):
    if raw.startswith("uniform:"):
        parts = raw.split(":")
        if len(parts) != 3:
            raise ConfigError(f"{key}: expected uniform:LOW:HIGH, got {raw!r}")
        try:
            return UniformSpec(float(parts[1]), float(parts[2]))
        except ValueError:
            raise ConfigError(f"{key}: non-numeric uniform bounds in {raw!r}") from None
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number or uniform:LOW:HIGH, got {raw!r}") from None


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def _parse_cash(key: str, raw: str):
    if "," in raw:
        try:
            return tuple(float(part) for part in raw.split(","))
        except ValueError:
            raise ConfigError(f"{key}: non-numeric entry in {raw!r}") from None
    return _parse_float(key, raw)


_PARSERS = {
    "n_middlemen": _parse_int,
    "n_users": _parse_int,
    "supply_per_tick": _parse_int,
    "ticks_per_slow_step": _parse_int,
    "n_slow_steps": _parse_int,
    "initial_cash": _parse_cash,
    "initial_price": _parse_scalar_or_uniform,
    "safety_margin_fraction": _parse_float,
    "s_tol": _parse_scalar_or_uniform,
    "c_tol": _parse_scalar_or_uniform,
    "rng_seed": _parse_int,
    "first_tick_bid_policy": lambda key, raw: raw,
}


def parse_config(source: str) -> SimConfig:
    """Parse key-value config text into a validated SimConfig.

    Unknown keys, malformed values, and invariant violations raise
    :class:`ConfigError` naming the offending key.
    """
    values = {}
    for lineno, line in enumerate(source.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key: {key!r}")
        values[key] = _PARSERS[key](key, raw)

    config = SimConfig(**values)
    config.validate()
    return config


def load_config(path: str) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _entropy(counts) -> float:
    total = sum(counts)
    if total == 0:
        return 0.0
    h = 0.0
    for c in counts:
        if c > 0:
            share = c / total
            h -= share * math.log(share)
    return h


def _summarize(record) -> StepSummary:
    branches = {BRANCH_HALVE: 0, BRANCH_HOLD: 0, BRANCH_ADOPT: 0}
    for upd in record.updates:
        branches[upd.branch] += 1
    svc = sum(1 for s in record.switches if s.cause == CAUSE_SERVICE)
    prc = sum(1 for s in record.switches if s.cause == CAUSE_PRICE)
    total_users = sum(record.user_counts)
    return StepSummary(
        slow_step=record.slow_step,
        index=record.index,
        switches_service=svc,
        switches_price=prc,
        branch_halve=branches[BRANCH_HALVE],
        branch_hold=branches[BRANCH_HOLD],
        branch_adopt=branches[BRANCH_ADOPT],
        user_entropy=_entropy(record.user_counts),
        max_user_share=max(record.user_counts) / total_users if total_users else 0.0,
    )


def run_simulation(config: SimConfig, early_stop: bool = False,
                   early_stop_window: int = DEFAULT_DETECTION_WINDOW,
                   detection_window: int = DEFAULT_DETECTION_WINDOW) -> RunRecord:
    """Run the full two-timescale loop and assemble the record.

    Each slow step advances ``ticks_per_slow_step`` fast ticks through the
    compiled window loop (bit-identical to that many ``fast_tick`` calls),
    then applies the slow map. With ``early_stop`` the run ends once the
    market has been absorbed for ``early_stop_window`` consecutive steps.
    """
    t0 = time.perf_counter()
    state = init_market(config)
    records = []
    streak = 0
    streak_index = None
    stopped_at = -1

    for _ in range(config.n_slow_steps):
        run_fast_window(state, config.ticks_per_slow_step)
        rec = slow_step(state)
        records.append(rec)

        monopoly = max(rec.user_counts) == config.n_users
        quiet = len(rec.switches) == 0
        if monopoly and quiet and (streak == 0 or rec.index == streak_index):
            if streak == 0:
                streak_index = rec.index
            streak += 1
        elif monopoly and quiet:
            streak = 1
            streak_index = rec.index
        else:
            streak = 0
            streak_index = None
        if early_stop and streak >= early_stop_window:
            stopped_at = rec.slow_step
            break

    series = IndexSeries(steps=tuple(r.slow_step for r in records),
                         values=tuple(r.index for r in records))
    deltas = (compute_deltas(series) if len(series) >= 2
              else DeltaDistribution(deltas=()))
    positive = deltas.positive()

    def _try(fit, *args, **kwargs):
        try:
            return fit(*args, **kwargs)
        except (FitRefusedError, ValueError):
            return None

    hill = _try(fit_hill, positive) if positive.size else None
    loglog = _try(fit_loglog, positive) if positive.size else None
    absorbing = detect_absorbing_state(records, detection_window)

    return RunRecord(
        config=config,
        seed=config.rng_seed,
        index_series=series,
        summaries=tuple(_summarize(r) for r in records),
        deltas=deltas,
        hill_fit=hill,
        loglog_fit=loglog,
        absorbing=absorbing,
        stopped_early_at=stopped_at,
        duration_seconds=time.perf_counter() - t0,
    )


def is_undersupply(config: SimConfig) -> bool:
    """Supply below the expected demand of n_users/2 GCUs per tick."""
    return config.supply_per_tick < 0.5 * config.n_users


def sweep(configs, seeds, early_stop: bool = False,
          early_stop_window: int = DEFAULT_DETECTION_WINDOW):
    """Run the cartesian product of configs and seeds.

    Failures are captured per run. Deltas of all undersupply runs are pooled
    and the pooled positive tail fitted both ways (None when it cannot be).
    Returns (records, pooled_deltas, pooled_fits).
    """
    configs = list(configs)
    seeds = list(seeds)
    if not configs or not seeds:
        raise ValueError("sweep needs at least one config and one seed")

    records = []
    pooled = []
    for config in configs:
        for seed in seeds:
            run_cfg = replace(config, rng_seed=seed)
            try:
                rec = run_simulation(run_cfg, early_stop=early_stop,
                                     early_stop_window=early_stop_window)
            except Exception as exc:  # noqa: BLE001 - a bad run must not kill the sweep
                records.append(RunFailure(config=run_cfg, seed=seed, error=str(exc)))
                continue
            records.append(rec)
            if is_undersupply(run_cfg):
                pooled.extend(rec.deltas.deltas)

    pooled_deltas = DeltaDistribution(deltas=tuple(pooled)) if pooled else None
    pooled_fits = None
    if pooled_deltas is not None:
        positive = pooled_deltas.positive()
        try:
            pooled_fits = {"hill": fit_hill(positive), "loglog": fit_loglog(positive)}
        except (FitRefusedError, ValueError):
            pooled_fits = None
    return records, pooled_deltas, pooled_fits


def _config_to_dict(config: SimConfig) -> dict:
    def enc(v):
        if isinstance(v, UniformSpec):
            return {"uniform": [v.low, v.high]}
        if isinstance(v, tuple):
            return list(v)
        return v

    return {
        "n_middlemen": config.n_middlemen,
        "n_users": config.n_users,
        "supply_per_tick": config.supply_per_tick,
        "ticks_per_slow_step": config.ticks_per_slow_step,
        "n_slow_steps": config.n_slow_steps,
        "initial_cash": enc(config.initial_cash),
        "initial_price": enc(config.initial_price),
        "safety_margin_fraction": config.safety_margin_fraction,
        "s_tol": enc(config.s_tol),
        "c_tol": enc(config.c_tol),
        "rng_seed": config.rng_seed,
        "first_tick_bid_policy": config.first_tick_bid_policy,
    }


def tail_fit_to_dict(fit) -> dict:
    if fit is None:
        return None
    return {
        "estimator": fit.estimator,
        "exponent": fit.exponent,
        "stderr": fit.stderr,
        "xmin": fit.xmin,
        "n_tail": fit.n_tail,
        "slope": None if math.isnan(fit.slope) else fit.slope,
        "drift_ratio": None if math.isnan(fit.drift_ratio) else fit.drift_ratio,
        "flagged_non_power_law": fit.flagged_non_power_law,
    }


def _index_csv_lines(record: RunRecord):
    yield INDEX_CSV_HEADER
    for s in record.summaries:
        yield (f"{s.slow_step},{s.index!r},{s.switches_service},{s.switches_price},"
               f"{s.branch_halve},{s.branch_hold},{s.branch_adopt}")


def _histogram_csv_lines(values):
    yield HISTOGRAM_CSV_HEADER
    if values.size == 0:
        return
    hist = log_binned_histogram(values)
    edges = hist.edges
    for i, (count, dens) in enumerate(zip(hist.counts, hist.densities)):
        yield f"{edges[i]!r},{edges[i + 1]!r},{count},{dens!r}"


def _plot_data(record: RunRecord) -> dict:
    deltas = np.asarray(record.deltas.deltas)
    half_log = {"bin_centers": [], "density": []}
    if deltas.size:
        counts, edges = np.histogram(deltas, bins=60)
        centers = 0.5 * (edges[:-1] + edges[1:])
        widths = np.diff(edges)
        dens = counts / (widths * deltas.size)
        half_log = {"bin_centers": [float(c) for c in centers],
                    "density": [float(d) for d in dens]}
    log_log = {"bin_centers": [], "density": []}
    positive = record.deltas.positive()
    if positive.size:
        hist = log_binned_histogram(positive)
        log_log = {"bin_centers": [float(c) for c in hist.centers()],
                   "density": list(hist.densities)}
    return {"half_log": half_log, "log_log": log_log}


def _summary_dict(record: RunRecord) -> dict:
    return {
        "config": _config_to_dict(record.config),
        "seed": record.seed,
        "n_slow_steps_run": len(record.index_series),
        "stopped_early_at": record.stopped_early_at,
        "n_deltas": len(record.deltas),
        "n_positive_deltas": int(record.deltas.positive().size),
        "tail_fits": {
            "hill": tail_fit_to_dict(record.hill_fit),
            "loglog": tail_fit_to_dict(record.loglog_fit),
        },
        "absorbing": {
            "found": record.absorbing.found,
            "step": record.absorbing.step,
            "longest_run": record.absorbing.longest_run,
        },
        "final_index": record.index_series.values[-1],
        "total_switches": sum(s.switches_service + s.switches_price
                              for s in record.summaries),
    }


def export(records, directory: str):
    """Write per-run CSV/JSON artifacts; returns the written paths.

    Files are named run{i:03d}_seed{seed}. Failed runs export a single
    failure JSON. Everything already written is removed if any write fails.
    """
    os.makedirs(directory, exist_ok=True)
    written = []

    def _write(name: str, text: str):
        path = os.path.join(directory, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        written.append(path)

    try:
        for i, record in enumerate(records):
            prefix = f"run{i:03d}_seed{record.seed}"
            if isinstance(record, RunFailure):
                payload = {"config": _config_to_dict(record.config),
                           "seed": record.seed, "error": record.error}
                _write(f"{prefix}_failure.json",
                       json.dumps(payload, indent=2, sort_keys=True) + "\n")
                continue
            _write(f"{prefix}_index.csv",
                   "\n".join(_index_csv_lines(record)) + "\n")
            _write(f"{prefix}_histogram.csv",
                   "\n".join(_histogram_csv_lines(record.deltas.positive())) + "\n")
            _write(f"{prefix}_summary.json",
                   json.dumps(_summary_dict(record), indent=2, sort_keys=True) + "\n")
            _write(f"{prefix}_plotdata.json",
                   json.dumps(_plot_data(record), indent=2, sort_keys=True) + "\n")
    except Exception:
        for path in written:
            try:
                os.unlink(path)
            except OSError:
                pass
        raise
    return written


def export_pooled(pooled_deltas, pooled_fits, directory: str):
    """Write the sweep-level pooled histogram and tail-fit summary."""
    os.makedirs(directory, exist_ok=True)
    written = []
    positive = pooled_deltas.positive() if pooled_deltas is not None else np.array([])

    path = os.path.join(directory, "pooled_histogram.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(_histogram_csv_lines(positive)) + "\n")
    written.append(path)

    payload = {
        "n_deltas": len(pooled_deltas) if pooled_deltas is not None else 0,
        "n_positive_deltas": int(positive.size),
        "tail_fits": None if pooled_fits is None else {
            name: tail_fit_to_dict(fit) for name, fit in pooled_fits.items()
        },
    }
    path = os.path.join(directory, "pooled_summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    written.append(path)
    return written


def read_index_csv(path: str):
    """Re-parse an exported index CSV into (steps, values, full rows)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != INDEX_CSV_HEADER:
        raise ValueError(f"{path}: not an index CSV")
    steps = []
    values = []
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        steps.append(int(parts[0]))
        values.append(float(parts[1]))
        rows.append(parts)
    return steps, values, rows


def find_index_csvs(directory: str):
    return sorted(globlib.glob(os.path.join(directory, "*_index.csv")))
