"""Config-driven experiment sweeps writing CSV tables.

Three batch drivers cover the standard study designs: a size/noise sweep
(risk, recovery distance, distillation quality per over-realized size), a
noise-robustness table of relative improvements, and the phase-transition
statistic (minimum atom usage) across model sizes.

Output layout per driver, inside ``output_dir``:

========================  ====================================================
``<name>_rows.csv``       one row per grid cell and repeat (deterministic)
``<name>_summary.csv``    mean / 25th / 75th percentile per cell and metric
``<name>_timings.csv``    wall-clock seconds per row (non-deterministic,
                          kept out of the main table so identical configs
                          produce byte-identical results)
========================  ====================================================

Rows are appended one complete line at a time as cells finish, so a killed
run leaves a readable prefix.  Percentiles use the nearest-rank method:
the q-th percentile of n sorted values is the value at index
ceil(q/100 * n) - 1, which is platform-stable (no interpolation).

Repeats and grid cells are mutually independent: each derives its model,
data and training streams from ``base_seed + repeat`` alone, so any subset
of cells can be recomputed in isolation (cells are processed sequentially
here; results do not depend on that order).
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .coding import L0Constrained, L1Penalized, LossSpec, empirical_risk
from .distill import oracle_prune, prune_by_usage, selection_overlap
from .learning import TrainConfig, TrainReport, ksvd_train, odl_train
from .metrics import dict_distance, min_usage_statistic
from .model import Dictionary, GenerativeModel, SampleSet, gen_dictionary, sample_batch
from .mtx import format_float

__all__ = [
    "Algorithm",
    "ExperimentConfig",
    "SweepRow",
    "run_sweep",
    "run_noise_sweep",
    "run_phase_transition",
]

# Per-repeat stream separation: the repeat seed draws the ground-truth
# dictionary, and these offsets give the train/test sets their own
# non-overlapping generator seeds.
_TRAIN_SEED_OFFSET = 10_000
_TEST_SEED_OFFSET = 77_777

_SWEEP_HEADER = (
    "p_prime,sigma,seed,train_risk,test_risk,dist_over_realized,"
    "dist_distilled,dist_traditional,min_usage,oracle_overlap"
)
_NOISE_HEADER = (
    "sigma,seed,p_prime,dist_traditional,dist_over_realized,dist_distilled,"
    "improvement_over_realized,improvement_distilled,flag"
)
_PHASE_HEADER = "p_prime,d,k,seed,min_usage"
_SUMMARY_HEADER = "p_prime,sigma,metric,mean,p25,p75"


class Algorithm(Enum):
    """Trainer/coder pairings offered by the drivers."""

    ODL_OMP = "odl_omp"
    ODL_LASSO = "odl_lasso"
    KSVD = "ksvd"


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment's full description; defaults give the baseline regime.

    The baseline: 50x70 ground truth, sparsity 3, 300 training and 1000
    held-out samples, online training for 2000 iterations, 20 repeats.
    ``p_prime_grid`` defaults to the standard size sweep.  ``ksvd_sweeps``
    replaces ``iterations`` when ``algorithm`` is KSVD (a sweep recodes all
    samples, so far fewer are needed); ``lasso_lambda`` is only read by the
    l1 coder.
    """

    d: int = 50
    p: int = 70
    k: int = 3
    n_train: int = 300
    n_test: int = 1000
    p_prime_grid: tuple = (70, 100, 140, 200, 300, 500)
    sigma_grid: tuple = (0.0,)
    algorithm: Algorithm = Algorithm.ODL_OMP
    repeats: int = 20
    base_seed: int = 0
    output_dir: str = "results"
    iterations: int = 2000
    batch_size: int = 32
    lasso_lambda: float = 0.1
    ksvd_sweeps: int = 30

    def __post_init__(self):
        object.__setattr__(self, "p_prime_grid", tuple(int(v) for v in self.p_prime_grid))
        object.__setattr__(self, "sigma_grid", tuple(float(v) for v in self.sigma_grid))
        if isinstance(self.algorithm, str):
            object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if not self.p_prime_grid or not self.sigma_grid:
            raise ValueError("p_prime_grid and sigma_grid must be non-empty")
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        for name in ("d", "p", "k", "n_train", "n_test", "iterations", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if any(s < 0 for s in self.sigma_grid):
            raise ValueError("sigma_grid entries must be >= 0")
        if any(pp < 1 for pp in self.p_prime_grid):
            raise ValueError("p_prime_grid entries must be >= 1")

    def coder(self) -> LossSpec:
        if self.algorithm is Algorithm.ODL_LASSO:
            return L1Penalized(self.lasso_lambda)
        return L0Constrained(self.k)


@dataclass(frozen=True)
class SweepRow:
    """One (size, noise, repeat) cell of the main sweep."""

    p_prime: int
    sigma: float
    seed: int
    train_risk: float
    test_risk: float
    dist_over_realized: float
    dist_distilled: float
    dist_traditional: float
    min_usage: int
    oracle_overlap: float
    wall_time_s: float

    def __post_init__(self):
        for name in (
            "train_risk",
            "test_risk",
            "dist_over_realized",
            "dist_distilled",
            "dist_traditional",
        ):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.min_usage < 0:
            raise ValueError(f"min_usage must be >= 0, got {self.min_usage}")


def _prepare_output(output_dir: str | os.PathLike) -> str:
    """Create the output directory and prove it is writable before training."""
    out = os.fspath(output_dir)
    os.makedirs(out, exist_ok=True)
    probe = os.path.join(out, ".write_probe")
    with open(probe, "w", encoding="utf-8") as fh:
        fh.write("ok\n")
    os.remove(probe)
    return out


def _start_csv(path: str, header: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")


def _append_line(path: str, line: str) -> None:
    # One complete line per call: a crash never leaves a partial row.
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format_float(v)


def nearest_rank(values, q: float) -> float:
    """q-th percentile by the nearest-rank rule on sorted values."""
    ordered = sorted(float(v) for v in values)
    if not ordered:
        raise ValueError("percentile of empty collection")
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


def _summary_lines(cells: dict, metric_names: tuple) -> list:
    lines = []
    for (p_prime, sigma), metric_values in cells.items():
        for name in metric_names:
            vals = metric_values[name]
            mean = sum(vals) / len(vals)
            lines.append(
                f"{p_prime},{format_float(sigma)},{name},{format_float(mean)},"
                f"{format_float(nearest_rank(vals, 25))},{format_float(nearest_rank(vals, 75))}"
            )
    return lines


def _make_data(cfg: ExperimentConfig, sigma: float, repeat: int):
    seed = cfg.base_seed + repeat
    D0 = gen_dictionary(cfg.d, cfg.p, seed)
    model = GenerativeModel(D0, cfg.k, noise_sigma=sigma)
    train = sample_batch(model, cfg.n_train, seed + _TRAIN_SEED_OFFSET)
    test = sample_batch(model, cfg.n_test, seed + _TEST_SEED_OFFSET)
    return seed, D0, train, test


def _train(cfg: ExperimentConfig, train: SampleSet, p_prime: int, seed: int) -> TrainReport:
    if cfg.algorithm is Algorithm.KSVD:
        tc = TrainConfig(
            p_prime=p_prime, iterations=cfg.ksvd_sweeps, coder=cfg.coder(),
            batch_size=cfg.batch_size, seed=seed,
        )
        return ksvd_train(train, tc)
    tc = TrainConfig(
        p_prime=p_prime, iterations=cfg.iterations, coder=cfg.coder(),
        batch_size=cfg.batch_size, seed=seed,
    )
    return odl_train(train, tc)


def run_sweep(cfg: ExperimentConfig) -> list:
    """Size/noise sweep: train, distill, and evaluate every grid cell.

    Returns the list of :class:`SweepRow` and writes ``sweep_rows.csv``,
    ``sweep_summary.csv`` and ``sweep_timings.csv``.  The traditional
    baseline (a run at the original size ``p``) is trained once per
    (sigma, repeat) and shared across the ``p_prime`` grid.
    """
    if any(pp < cfg.p for pp in cfg.p_prime_grid):
        raise ValueError("run_sweep distills to p: p_prime_grid entries must be >= p")
    out = _prepare_output(cfg.output_dir)
    rows_path = os.path.join(out, "sweep_rows.csv")
    timings_path = os.path.join(out, "sweep_timings.csv")
    _start_csv(rows_path, _SWEEP_HEADER)
    _start_csv(timings_path, "p_prime,sigma,seed,wall_time_s")

    rows: list[SweepRow] = []
    baseline: dict = {}  # (sigma, repeat) -> (TrainReport, dist_traditional)
    cells: dict = {}
    metric_names = (
        "train_risk", "test_risk", "dist_over_realized", "dist_distilled",
        "dist_traditional", "min_usage", "oracle_overlap",
    )
    for p_prime in cfg.p_prime_grid:
        for sigma in cfg.sigma_grid:
            for repeat in range(cfg.repeats):
                t0 = time.perf_counter()
                seed, D0, train, test = _make_data(cfg, sigma, repeat)
                key = (sigma, repeat)
                if key not in baseline:
                    rep_p = _train(cfg, train, cfg.p, seed)
                    baseline[key] = (rep_p, dict_distance(D0, rep_p.dictionary))
                if p_prime == cfg.p:
                    report = baseline[key][0]
                else:
                    report = _train(cfg, train, p_prime, seed)
                coder = cfg.coder()
                pruned = prune_by_usage(report, cfg.p)
                oracle = oracle_prune(report, D0, cfg.p)
                row = SweepRow(
                    p_prime=p_prime,
                    sigma=sigma,
                    seed=seed,
                    train_risk=empirical_risk(train, report.dictionary, coder),
                    test_risk=empirical_risk(test, report.dictionary, coder),
                    dist_over_realized=dict_distance(D0, report.dictionary),
                    dist_distilled=dict_distance(D0, pruned.dictionary),
                    dist_traditional=baseline[key][1],
                    min_usage=min_usage_statistic(report),
                    oracle_overlap=selection_overlap(pruned, oracle),
                    wall_time_s=time.perf_counter() - t0,
                )
                rows.append(row)
                _append_line(rows_path, ",".join([
                    str(row.p_prime), format_float(row.sigma), str(row.seed),
                    format_float(row.train_risk), format_float(row.test_risk),
                    format_float(row.dist_over_realized),
                    format_float(row.dist_distilled),
                    format_float(row.dist_traditional),
                    str(row.min_usage), format_float(row.oracle_overlap),
                ]))
                _append_line(timings_path, ",".join([
                    str(row.p_prime), format_float(row.sigma), str(row.seed),
                    format_float(row.wall_time_s),
                ]))
                cell = cells.setdefault((p_prime, sigma), {m: [] for m in metric_names})
                for m in metric_names:
                    cell[m].append(float(getattr(row, m)))

    summary_path = os.path.join(out, "sweep_summary.csv")
    _start_csv(summary_path, _SUMMARY_HEADER)
    for line in _summary_lines(cells, metric_names):
        _append_line(summary_path, line)
    return rows


def run_noise_sweep(cfg: ExperimentConfig) -> list:
    """Relative improvement over the traditional baseline per noise level.

    The over-realized size is the first ``p_prime_grid`` entry.  Each row
    reports (dist_trad - dist_x) / dist_trad for the over-realized and
    distilled estimates; a zero-distance baseline would divide by zero, so
    such rows report improvement 0 with flag ``degenerate_baseline``.
    Writes ``noise_rows.csv``, ``noise_summary.csv``, ``noise_timings.csv``
    and returns the row tuples.
    """
    if any(pp < cfg.p for pp in cfg.p_prime_grid):
        raise ValueError("run_noise_sweep distills to p: p_prime_grid entries must be >= p")
    out = _prepare_output(cfg.output_dir)
    rows_path = os.path.join(out, "noise_rows.csv")
    timings_path = os.path.join(out, "noise_timings.csv")
    _start_csv(rows_path, _NOISE_HEADER)
    _start_csv(timings_path, "sigma,seed,wall_time_s")

    p_over = cfg.p_prime_grid[0]
    rows = []
    cells: dict = {}
    metric_names = ("improvement_over_realized", "improvement_distilled")
    for sigma in cfg.sigma_grid:
        for repeat in range(cfg.repeats):
            t0 = time.perf_counter()
            seed, D0, train, _ = _make_data(cfg, sigma, repeat)
            rep_p = _train(cfg, train, cfg.p, seed)
            dist_trad = dict_distance(D0, rep_p.dictionary)
            rep_over = rep_p if p_over == cfg.p else _train(cfg, train, p_over, seed)
            dist_over = dict_distance(D0, rep_over.dictionary)
            dist_dist = dict_distance(D0, prune_by_usage(rep_over, cfg.p).dictionary)
            if dist_trad == 0.0:
                imp_over, imp_dist, flag = 0.0, 0.0, "degenerate_baseline"
            else:
                imp_over = (dist_trad - dist_over) / dist_trad
                imp_dist = (dist_trad - dist_dist) / dist_trad
                flag = ""
            rows.append((sigma, seed, p_over, dist_trad, dist_over, dist_dist,
                         imp_over, imp_dist, flag))
            _append_line(rows_path, ",".join([
                format_float(sigma), str(seed), str(p_over),
                format_float(dist_trad), format_float(dist_over),
                format_float(dist_dist), format_float(imp_over),
                format_float(imp_dist), flag,
            ]))
            _append_line(timings_path, ",".join([
                format_float(sigma), str(seed),
                format_float(time.perf_counter() - t0),
            ]))
            cell = cells.setdefault((p_over, sigma), {m: [] for m in metric_names})
            cell["improvement_over_realized"].append(imp_over)
            cell["improvement_distilled"].append(imp_dist)

    summary_path = os.path.join(out, "noise_summary.csv")
    _start_csv(summary_path, _SUMMARY_HEADER)
    for line in _summary_lines(cells, metric_names):
        _append_line(summary_path, line)
    return rows


def run_phase_transition(cfg: ExperimentConfig) -> list:
    """Minimum atom usage per model size: the size-estimation statistic.

    Uses the first ``sigma_grid`` entry.  Unlike the other drivers this one
    allows ``p_prime`` below ``p`` (no distillation happens), which is where
    the statistic's collapse around the true size becomes visible.  Writes
    ``phase_rows.csv``, ``phase_summary.csv``, ``phase_timings.csv``.
    """
    out = _prepare_output(cfg.output_dir)
    rows_path = os.path.join(out, "phase_rows.csv")
    timings_path = os.path.join(out, "phase_timings.csv")
    _start_csv(rows_path, _PHASE_HEADER)
    _start_csv(timings_path, "p_prime,seed,wall_time_s")

    sigma = cfg.sigma_grid[0]
    rows = []
    cells: dict = {}
    for p_prime in cfg.p_prime_grid:
        for repeat in range(cfg.repeats):
            t0 = time.perf_counter()
            seed, _, train, _ = _make_data(cfg, sigma, repeat)
            report = _train(cfg, train, p_prime, seed)
            mu = min_usage_statistic(report)
            rows.append((p_prime, cfg.d, cfg.k, seed, mu))
            _append_line(rows_path, f"{p_prime},{cfg.d},{cfg.k},{seed},{mu}")
            _append_line(timings_path, ",".join([
                str(p_prime), str(seed), format_float(time.perf_counter() - t0),
            ]))
            cells.setdefault((p_prime, sigma), {"min_usage": []})["min_usage"].append(mu)

    summary_path = os.path.join(out, "phase_summary.csv")
    _start_csv(summary_path, _SUMMARY_HEADER)
    for line in _summary_lines(cells, ("min_usage",)):
        _append_line(summary_path, line)
    return rows
