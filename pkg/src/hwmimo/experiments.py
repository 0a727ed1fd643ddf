"""Batch experiment runner: parses a JSON experiment description, runs
closed-form antenna sweeps and Monte Carlo validation, and emits
plot-ready CSV plus a run manifest.

Everything downstream of the parsed configuration is deterministic in
the master seed: re-running the same configuration produces
byte-identical CSV regardless of the worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .config import ConfigError, HardwareProfile, ScalingExponents, validate
from .estimation import EstimatorContext
from .montecarlo import TrialPlan, empirical_network_rates
from .rates import (apply_scaling, default_t_grid, mrc_cell_asymptotic,
                    mrc_cell_sinr, rate_from_sinr_samples)
from .scenario import build_scenario

MC_MAX_ANTENNAS = 2048
CSV_COLUMNS = ("n_antennas", "pilot_kind", "filter", "hw_mode",
               "sum_rate_closed_form", "sum_rate_mc", "mc_stderr")


@dataclass(frozen=True)
class HardwareSpec:
    """One named hardware mode: a fixed profile or N-scaled exponents."""

    name: str
    profile: HardwareProfile | None = None
    scaling: ScalingExponents | None = None

    def at(self, num_antennas: int) -> HardwareProfile:
        if self.profile is not None:
            return self.profile
        return apply_scaling(self.scaling, num_antennas)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    drops: int
    overrides: dict
    hardware: tuple              # HardwareSpec, ...
    antennas: tuple
    pilot_kinds: tuple
    filters: tuple
    sweep_t_step: int
    trials: int
    mc_t_step: int
    mode: str                    # closed | mc | both
    csv_name: str
    per_user_csv_name: str | None
    precision: int
    include_asymptotic: bool
    workers: int = 1


def _require(cfg: dict, path: str, default=None, required=False):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigError(f"missing required config field '{path}'")
            return default
        node = node[part]
    return node


def parse_config(doc: dict, seed=None, trials=None, mode=None,
                 workers=None) -> ExperimentConfig:
    """Validate a parsed JSON experiment description.

    The optional arguments are command-line overrides and take
    precedence over the file contents.
    """
    if not isinstance(doc, dict):
        raise ConfigError("experiment config must be a JSON object")

    hw_specs = []
    hw_list = _require(doc, "hardware", required=True)
    if not isinstance(hw_list, list) or not hw_list:
        raise ConfigError("'hardware' must be a non-empty list of profiles")
    for i, entry in enumerate(hw_list):
        name = entry.get("name", f"hw{i}")
        scaled_keys = {"tau1", "tau2", "tau3", "kappa0", "xi0", "delta0"}
        fixed_keys = {"kappa", "xi", "delta"}
        if entry.keys() & scaled_keys and entry.keys() & fixed_keys:
            raise ConfigError(
                f"hardware[{i}] ({name}): mixes fixed fields "
                f"{sorted(entry.keys() & fixed_keys)} with scaling fields "
                f"{sorted(entry.keys() & scaled_keys)}")
        try:
            if entry.keys() & scaled_keys:
                scaling = ScalingExponents(
                    tau1=float(entry.get("tau1", 0.0)),
                    tau2=float(entry.get("tau2", 0.0)),
                    tau3=float(entry.get("tau3", 0.0)),
                    kappa0=float(entry.get("kappa0", 0.0)),
                    xi0=float(entry.get("xi0", 1.0)),
                    delta0=float(entry.get("delta0", 0.0)))
                hw_specs.append(HardwareSpec(name=name, scaling=scaling))
            else:
                profile = HardwareProfile(
                    delta=float(entry.get("delta", 0.0)),
                    kappa=float(entry.get("kappa", 0.0)),
                    xi=float(entry.get("xi", 1.0)))
                hw_specs.append(HardwareSpec(name=name, profile=profile))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"hardware[{i}] ({name}): {exc}") from exc
    if len({spec.name for spec in hw_specs}) != len(hw_specs):
        raise ConfigError("hardware profile names must be unique")

    antennas = _require(doc, "sweep.antennas", required=True)
    if not isinstance(antennas, list) or not antennas:
        raise ConfigError("'sweep.antennas' must be a non-empty list")
    antennas = tuple(int(n) for n in antennas)
    if any(n < 1 for n in antennas) or list(antennas) != sorted(set(antennas)):
        raise ConfigError("'sweep.antennas' must be ascending positive integers")

    pilot_kinds = tuple(_require(doc, "sweep.pilot_kinds", default=["spatial_dft"]))
    for kind in pilot_kinds:
        if kind not in ("spatial_dft", "temporal"):
            raise ConfigError(f"'sweep.pilot_kinds': unknown kind {kind!r}")
    filters = tuple(_require(doc, "sweep.filters", default=["mrc"]))
    for f in filters:
        if f not in ("mrc", "approx_mmse"):
            raise ConfigError(f"'sweep.filters': unknown filter {f!r}")

    mode = mode or _require(doc, "mode", default="closed")
    if mode not in ("closed", "mc", "both"):
        raise ConfigError(f"mode must be closed|mc|both, got {mode!r}")
    trials = int(trials if trials is not None
                 else _require(doc, "mc.trials", default=10000))
    if mode in ("mc", "both"):
        if trials < 1:
            raise ConfigError("mc.trials must be >= 1")
        if max(antennas) > MC_MAX_ANTENNAS:
            raise ConfigError(
                f"Monte Carlo with {max(antennas)} antennas is infeasible "
                f"(limit {MC_MAX_ANTENNAS}); use mode=closed for large-array sweeps")
    if mode == "closed" and filters == ("approx_mmse",):
        raise ConfigError("approx_mmse has no closed form; use mode=mc or both")

    return ExperimentConfig(
        seed=int(seed if seed is not None else _require(doc, "scenario.seed", default=1)),
        drops=int(_require(doc, "scenario.drops", default=1)),
        overrides=dict(_require(doc, "scenario.overrides", default={})),
        hardware=tuple(hw_specs),
        antennas=antennas,
        pilot_kinds=pilot_kinds,
        filters=filters,
        sweep_t_step=int(_require(doc, "sweep.t_step", default=25)),
        trials=trials,
        mc_t_step=int(_require(doc, "mc.t_step", default=250)),
        mode=mode,
        csv_name=str(_require(doc, "output.path", default="results.csv")),
        per_user_csv_name=_require(doc, "output.per_user_path", default=None),
        precision=int(_require(doc, "output.precision", default=12)),
        include_asymptotic=bool(_require(doc, "output.include_asymptotic", default=False)),
        workers=int(workers if workers is not None
                    else _require(doc, "workers", default=1)))


def format_number(x, precision: int) -> str:
    """Decimal rendering for CSV cells: '' for missing, 'inf' for infinity."""
    if x is None:
        return ""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.{precision}g}"


def emit_csv(header, rows, path, precision: int = 12) -> None:
    """Write an RFC-4180 CSV file with deterministic number formatting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([
                format_number(cell, precision) if isinstance(cell, (int, float, np.floating))
                and not isinstance(cell, bool) else ("" if cell is None else str(cell))
                for cell in row])


def _closed_form_rates(scenario, hw: HardwareProfile, antennas, t_grid,
                       want_asymptotic: bool):
    """Per-user closed-form MRC rates (L, K, NN) and asymptotic rates (L, K)."""
    stats, book = scenario.stats, scenario.book
    dims = stats.dims
    L, K = dims.num_cells, dims.users_per_cell
    ctx = EstimatorContext.build(stats, book, hw)
    rates = np.zeros((L, K, len(antennas)))
    asym = np.zeros((L, K))
    for j in range(L):
        table = np.stack([mrc_cell_sinr(ctx, j, int(t), antennas) for t in t_grid],
                         axis=1)  # (K, S, NN)
        for k in range(K):
            for ni in range(len(antennas)):
                rates[j, k, ni] = rate_from_sinr_samples(
                    t_grid, table[k, :, ni], dims.block_len, dims.pilot_len)
        if want_asymptotic:
            lim = np.stack([mrc_cell_asymptotic(ctx, j, int(t)) for t in t_grid],
                           axis=1)  # (K, S)
            for k in range(K):
                if np.isinf(lim[k]).any():
                    asym[j, k] = math.inf
                else:
                    asym[j, k] = rate_from_sinr_samples(
                        t_grid, lim[k], dims.block_len, dims.pilot_len)
    return rates, asym


@dataclass
class RunResult:
    csv_path: str
    manifest_path: str
    per_user_path: str | None
    rows: list


def run(config: ExperimentConfig, out_dir: str) -> RunResult:
    """Execute the configured sweep and write CSV + manifest into out_dir."""
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    antennas = list(config.antennas)
    want_closed = config.mode in ("closed", "both")
    want_mc = config.mode in ("mc", "both")

    # accumulators over drops: {(kind, hw, filter, N): [values per drop]}
    closed_acc: dict = {}
    asym_acc: dict = {}
    mc_acc: dict = {}
    mc_se_acc: dict = {}
    per_user_closed: dict = {}
    per_user_mc: dict = {}

    for drop in range(config.drops):
        drop_seed = config.seed + drop
        for kind in config.pilot_kinds:
            scenario = build_scenario(drop_seed, overrides=config.overrides,
                                      pilot_kind=kind)
            dims = scenario.stats.dims
            sweep_grid = default_t_grid(dims, config.sweep_t_step)
            mc_grid = default_t_grid(dims, config.mc_t_step)
            for spec in config.hardware:
                if want_closed and "mrc" in config.filters:
                    if spec.profile is not None:
                        # one context serves the whole antenna sweep
                        rates, asym = _closed_form_rates(
                            scenario, spec.profile, antennas, sweep_grid,
                            config.include_asymptotic)
                    else:
                        parts = [_closed_form_rates(scenario, spec.at(n), [n],
                                                    sweep_grid, config.include_asymptotic)
                                 for n in antennas]
                        rates = np.concatenate([p[0] for p in parts], axis=2)
                        asym = parts[-1][1]
                    for ni, n in enumerate(antennas):
                        key = (kind, spec.name, "mrc", n)
                        closed_acc.setdefault(key, []).append(float(rates[:, :, ni].sum()))
                        per_user_closed.setdefault(key, []).append(rates[:, :, ni])
                        if config.include_asymptotic:
                            asym_acc.setdefault(key, []).append(float(asym.sum()))
                if want_mc:
                    for n in antennas:
                        stats_n = replace(scenario.stats,
                                          dims=replace(dims, num_antennas=n))
                        hw_n = spec.at(n)
                        stats_n, book_n, hw_n = validate(stats_n, scenario.book,
                                                         hw_n, strict=False)
                        plan = TrialPlan(trials=config.trials, master_seed=drop_seed,
                                         t_samples=tuple(int(t) for t in mc_grid),
                                         filter_kind=config.filters[0])
                        results = empirical_network_rates(
                            plan, stats_n, book_n, hw_n,
                            filters=config.filters, workers=config.workers)
                        for f in config.filters:
                            key = (kind, spec.name, f, n)
                            res = results[f]
                            mc_acc.setdefault(key, []).append(float(res.rate.sum()))
                            batch_sums = res.rate_batch.reshape(res.rate_batch.shape[0], -1).sum(axis=1)
                            se = float(np.std(batch_sums, ddof=1) / math.sqrt(len(batch_sums)))
                            mc_se_acc.setdefault(key, []).append(se)
                            per_user_mc.setdefault(key, []).append(res.rate)

    header = list(CSV_COLUMNS)
    if config.include_asymptotic:
        header.append("sum_rate_asymptotic")
    rows = []
    for kind in config.pilot_kinds:
        for spec in config.hardware:
            for f in config.filters:
                for n in antennas:
                    key = (kind, spec.name, f, n)
                    closed = None
                    if f == "mrc" and key in closed_acc:
                        closed = sum(closed_acc[key]) / len(closed_acc[key])
                    mc = se = None
                    if key in mc_acc:
                        mc = sum(mc_acc[key]) / len(mc_acc[key])
                        se = math.sqrt(sum(s ** 2 for s in mc_se_acc[key])) / len(mc_se_acc[key])
                    if closed is None and mc is None:
                        continue
                    row = [n, kind, f, spec.name, closed, mc, se]
                    if config.include_asymptotic:
                        row.append(sum(asym_acc[key]) / len(asym_acc[key])
                                   if key in asym_acc else None)
                    rows.append(row)

    csv_path = os.path.join(out_dir, config.csv_name)
    emit_csv(header, rows, csv_path, config.precision)

    per_user_path = None
    if config.per_user_csv_name:
        per_user_path = os.path.join(out_dir, config.per_user_csv_name)
        pu_rows = []
        for kind in config.pilot_kinds:
            for spec in config.hardware:
                for f in config.filters:
                    for n in antennas:
                        key = (kind, spec.name, f, n)
                        closed = per_user_closed.get(key)
                        mc = per_user_mc.get(key)
                        if closed is None and mc is None:
                            continue
                        some = closed if closed is not None else mc
                        L, K = some[0].shape
                        for j in range(L):
                            for k in range(K):
                                c = (sum(a[j, k] for a in closed) / len(closed)
                                     if closed is not None and f == "mrc" else None)
                                m = (sum(a[j, k] for a in mc) / len(mc)
                                     if mc is not None else None)
                                pu_rows.append([n, kind, f, spec.name, j, k, c, m])
        emit_csv(["n_antennas", "pilot_kind", "filter", "hw_mode", "cell", "user",
                  "rate_closed_form", "rate_mc"], pu_rows, per_user_path,
                 config.precision)

    manifest_path = os.path.join(out_dir, "manifest.json")
    manifest = {
        "version": __version__,
        "seed": config.seed,
        "drops": config.drops,
        "mode": config.mode,
        "trials": config.trials if want_mc else None,
        "antennas": list(config.antennas),
        "pilot_kinds": list(config.pilot_kinds),
        "filters": list(config.filters),
        "hardware": [spec.name for spec in config.hardware],
        "outputs": [os.path.basename(csv_path)]
                   + ([os.path.basename(per_user_path)] if per_user_path else []),
        "wall_time_s": round(time.time() - started, 3),
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return RunResult(csv_path=csv_path, manifest_path=manifest_path,
                     per_user_path=per_user_path, rows=rows)
