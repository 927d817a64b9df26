"""Batch experiment drivers: config handling, CSV layout, reproducibility."""

import math
import os

import numpy as np
import pytest

import oracles
from overdict import (
    Algorithm,
    ExperimentConfig,
    L0Constrained,
    L1Penalized,
    SweepRow,
    run_noise_sweep,
    run_phase_transition,
    run_sweep,
)
from overdict.experiments import nearest_rank
from overdict.mtx import format_float

# One small-but-real grid shared by several tests below.  d=8/p=10 with 60
# samples keeps each training run under half a second.
SMALL = dict(
    d=8, p=10, k=2, n_train=60, n_test=30, p_prime_grid=(12,),
    sigma_grid=(0.0,), repeats=2, base_seed=0, iterations=150,
)


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    cfg = ExperimentConfig(output_dir=str(out), **SMALL)
    rows = run_sweep(cfg)
    return cfg, rows, out


# ---------------------------------------------------------------------------
# configuration


def test_config_defaults_pin_baseline_regime():
    cfg = ExperimentConfig()
    assert (cfg.d, cfg.p, cfg.k) == (50, 70, 3)
    assert (cfg.n_train, cfg.n_test) == (300, 1000)
    assert cfg.p_prime_grid == (70, 100, 140, 200, 300, 500)
    assert cfg.sigma_grid == (0.0,)
    assert cfg.algorithm is Algorithm.ODL_OMP
    assert (cfg.repeats, cfg.iterations, cfg.batch_size) == (20, 2000, 32)
    assert cfg.lasso_lambda == 0.1
    assert cfg.ksvd_sweeps == 30


def test_config_coerces_grids_and_algorithm():
    cfg = ExperimentConfig(p_prime_grid=[70.0, 100], sigma_grid=[0, 1],
                           algorithm="ksvd")
    assert cfg.p_prime_grid == (70, 100)
    assert cfg.sigma_grid == (0.0, 1.0)
    assert all(isinstance(v, int) for v in cfg.p_prime_grid)
    assert all(isinstance(v, float) for v in cfg.sigma_grid)
    assert cfg.algorithm is Algorithm.KSVD


def test_config_coder_follows_algorithm():
    assert ExperimentConfig(k=4).coder() == L0Constrained(4)
    assert ExperimentConfig(algorithm=Algorithm.KSVD, k=2).coder() == L0Constrained(2)
    lasso = ExperimentConfig(algorithm=Algorithm.ODL_LASSO, lasso_lambda=0.3).coder()
    assert lasso == L1Penalized(0.3)


@pytest.mark.parametrize(
    "kwargs,fragment",
    [
        (dict(p_prime_grid=()), "non-empty"),
        (dict(sigma_grid=()), "non-empty"),
        (dict(repeats=0), "repeats"),
        (dict(d=0), "d"),
        (dict(n_train=0), "n_train"),
        (dict(sigma_grid=(-0.1,)), ">= 0"),
        (dict(p_prime_grid=(0,)), ">= 1"),
    ],
)
def test_config_rejects_bad_values(kwargs, fragment):
    with pytest.raises(ValueError, match=fragment):
        ExperimentConfig(**kwargs)


def test_sweep_row_rejects_bad_metrics():
    good = dict(p_prime=12, sigma=0.0, seed=0, train_risk=0.1, test_risk=0.2,
                dist_over_realized=0.1, dist_distilled=0.1,
                dist_traditional=0.2, min_usage=3, oracle_overlap=0.9,
                wall_time_s=1.0)
    SweepRow(**good)
    with pytest.raises(ValueError, match="train_risk"):
        SweepRow(**{**good, "train_risk": -0.5})
    with pytest.raises(ValueError, match="dist_distilled"):
        SweepRow(**{**good, "dist_distilled": float("nan")})
    with pytest.raises(ValueError, match="min_usage"):
        SweepRow(**{**good, "min_usage": -1})


# ---------------------------------------------------------------------------
# size sweep


def test_sweep_rejects_sizes_below_true_size(tmp_path):
    cfg = ExperimentConfig(output_dir=str(tmp_path), **{**SMALL, "p_prime_grid": (8,)})
    with pytest.raises(ValueError, match="must be >= p"):
        run_sweep(cfg)
    cfg = ExperimentConfig(output_dir=str(tmp_path), **{**SMALL, "p_prime_grid": (8,)})
    with pytest.raises(ValueError, match="must be >= p"):
        run_noise_sweep(cfg)


def test_sweep_row_per_cell_and_headers(small_sweep):
    cfg, rows, out = small_sweep
    assert len(rows) == len(cfg.p_prime_grid) * len(cfg.sigma_grid) * cfg.repeats
    assert all(isinstance(r, SweepRow) for r in rows)
    assert [r.seed for r in rows] == [0, 1]
    lines = (out / "sweep_rows.csv").read_text().strip().split("\n")
    assert lines[0] == (
        "p_prime,sigma,seed,train_risk,test_risk,dist_over_realized,"
        "dist_distilled,dist_traditional,min_usage,oracle_overlap"
    )
    assert len(lines) == 1 + len(rows)
    # The first data line reproduces the first row field-for-field.
    r = rows[0]
    assert lines[1] == ",".join([
        str(r.p_prime), format_float(r.sigma), str(r.seed),
        format_float(r.train_risk), format_float(r.test_risk),
        format_float(r.dist_over_realized), format_float(r.dist_distilled),
        format_float(r.dist_traditional), str(r.min_usage),
        format_float(r.oracle_overlap),
    ])


def test_sweep_timings_kept_out_of_main_table(small_sweep):
    cfg, rows, out = small_sweep
    lines = (out / "sweep_timings.csv").read_text().strip().split("\n")
    assert lines[0] == "p_prime,sigma,seed,wall_time_s"
    assert len(lines) == 1 + len(rows)
    for ln, row in zip(lines[1:], rows):
        parts = ln.split(",")
        assert float(parts[3]) >= 0.0
        assert row.wall_time_s >= 0.0
    assert "wall_time" not in (out / "sweep_rows.csv").read_text()


def test_sweep_summary_matches_nearest_rank_oracle(small_sweep):
    cfg, rows, out = small_sweep
    lines = (out / "sweep_summary.csv").read_text().strip().split("\n")
    assert lines[0] == "p_prime,sigma,metric,mean,p25,p75"
    by_metric = {ln.split(",")[2]: ln.split(",") for ln in lines[1:]}
    for metric in ("train_risk", "dist_over_realized", "dist_distilled",
                   "dist_traditional", "min_usage", "oracle_overlap"):
        vals = [float(getattr(r, metric)) for r in rows]
        parts = by_metric[metric]
        assert float(parts[0]) == 12 and float(parts[1]) == 0.0
        assert float(parts[3]) == pytest.approx(sum(vals) / len(vals), rel=1e-15)
        assert float(parts[4]) == oracles.percentile_nearest_rank(vals, 25)
        assert float(parts[5]) == oracles.percentile_nearest_rank(vals, 75)


def test_sweep_pruning_cannot_reduce_recovery_distance(small_sweep):
    # Dropping atoms shrinks each true atom's candidate set, so the distilled
    # distance can never undercut the over-realized one.
    _, rows, _ = small_sweep
    for r in rows:
        assert r.dist_distilled >= r.dist_over_realized - 1e-12


def test_sweep_metrics_are_plausible(small_sweep):
    _, rows, _ = small_sweep
    for r in rows:
        assert 0.0 <= r.oracle_overlap <= 1.0
        assert 0.0 <= r.dist_over_realized <= 2.0
        assert r.min_usage >= 0
        assert r.train_risk <= r.test_risk + 0.5  # same model; no wild gap


def test_sweep_rerun_is_byte_identical(small_sweep, tmp_path):
    cfg, rows, out = small_sweep
    cfg2 = ExperimentConfig(output_dir=str(tmp_path), **SMALL)
    rows2 = run_sweep(cfg2)
    for name in ("sweep_rows.csv", "sweep_summary.csv"):
        assert (out / name).read_bytes() == (tmp_path / name).read_bytes()
    for a, b in zip(rows, rows2):
        for field in ("train_risk", "test_risk", "dist_over_realized",
                      "dist_distilled", "dist_traditional", "min_usage",
                      "oracle_overlap"):
            assert getattr(a, field) == getattr(b, field)


# ---------------------------------------------------------------------------
# noise sweep


def test_noise_rows_agree_with_sweep_at_zero_noise(small_sweep, tmp_path):
    # Both drivers derive their data and training streams from the same
    # per-repeat seeds, so the shared distance columns must match bitwise.
    cfg, srows, _ = small_sweep
    nrows = run_noise_sweep(ExperimentConfig(output_dir=str(tmp_path), **SMALL))
    assert len(nrows) == len(srows)
    for sr, nr in zip(srows, nrows):
        sigma, seed, p_over, dist_trad, dist_over, dist_dist, imp_over, imp_dist, flag = nr
        assert (sigma, seed, p_over) == (sr.sigma, sr.seed, sr.p_prime)
        assert dist_trad == sr.dist_traditional
        assert dist_over == sr.dist_over_realized
        assert dist_dist == sr.dist_distilled
        assert flag == ""
        assert imp_over == pytest.approx((dist_trad - dist_over) / dist_trad, rel=1e-15)
        assert imp_dist == pytest.approx((dist_trad - dist_dist) / dist_trad, rel=1e-15)
    lines = (tmp_path / "noise_rows.csv").read_text().strip().split("\n")
    assert lines[0] == (
        "sigma,seed,p_prime,dist_traditional,dist_over_realized,dist_distilled,"
        "improvement_over_realized,improvement_distilled,flag"
    )
    assert len(lines) == 1 + len(nrows)


def test_noise_flags_zero_distance_baseline(tmp_path):
    # A 1-atom, 1-dimensional model is recovered exactly (the only unit
    # vectors are +-1), which would put zero in the improvement denominator.
    cfg = ExperimentConfig(
        d=1, p=1, k=1, n_train=40, n_test=10, p_prime_grid=(1,),
        sigma_grid=(0.0,), repeats=3, base_seed=0, iterations=60,
        output_dir=str(tmp_path),
    )
    rows = run_noise_sweep(cfg)
    assert len(rows) == 3
    for sigma, seed, p_over, dist_trad, dist_over, dist_dist, imp_over, imp_dist, flag in rows:
        assert dist_trad == 0.0
        assert (imp_over, imp_dist) == (0.0, 0.0)
        assert flag == "degenerate_baseline"
    text = (tmp_path / "noise_rows.csv").read_text()
    assert text.count("degenerate_baseline") == 3


def test_noise_summary_covers_improvements(tmp_path):
    run_noise_sweep(ExperimentConfig(output_dir=str(tmp_path), **SMALL))
    lines = (tmp_path / "noise_summary.csv").read_text().strip().split("\n")
    metrics = {ln.split(",")[2] for ln in lines[1:]}
    assert metrics == {"improvement_over_realized", "improvement_distilled"}


# ---------------------------------------------------------------------------
# phase transition


def test_phase_allows_sizes_below_true_size(tmp_path):
    cfg = ExperimentConfig(
        output_dir=str(tmp_path), **{**SMALL, "p_prime_grid": (6, 10), "iterations": 120}
    )
    rows = run_phase_transition(cfg)
    assert [(r[0], r[1], r[2], r[3]) for r in rows] == [
        (6, 8, 2, 0), (6, 8, 2, 1), (10, 8, 2, 0), (10, 8, 2, 1)]
    for _, _, _, _, min_usage in rows:
        assert isinstance(min_usage, (int, np.integer)) and min_usage >= 0
    lines = (tmp_path / "phase_rows.csv").read_text().strip().split("\n")
    assert lines[0] == "p_prime,d,k,seed,min_usage"
    assert lines[1:] == [",".join(str(v) for v in r) for r in rows]
    summary = (tmp_path / "phase_summary.csv").read_text()
    assert "min_usage" in summary


def test_phase_usage_concentrates_when_size_is_tight(tmp_path):
    # With fewer atoms than the truth every atom must work more, so the
    # minimum usage at p'=6 exceeds the one at p'=10 for the same data.
    cfg = ExperimentConfig(
        output_dir=str(tmp_path), **{**SMALL, "p_prime_grid": (6, 10), "iterations": 120}
    )
    rows = run_phase_transition(cfg)
    usage = {}
    for p_prime, _, _, seed, min_usage in rows:
        usage[(p_prime, seed)] = min_usage
    for seed in (0, 1):
        assert usage[(6, seed)] > usage[(10, seed)]


# ---------------------------------------------------------------------------
# failure handling


def test_output_dir_must_be_creatable(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory\n")
    cfg = ExperimentConfig(
        d=2, p=2, k=1, n_train=5, n_test=5, p_prime_grid=(2,), repeats=1,
        iterations=5, output_dir=str(blocker / "sub"),
    )
    with pytest.raises(OSError):
        run_sweep(cfg)
    with pytest.raises(OSError):
        run_noise_sweep(cfg)
    with pytest.raises(OSError):
        run_phase_transition(cfg)


# ---------------------------------------------------------------------------
# percentile helper


def test_nearest_rank_hand_values():
    values = [3, 1, 4, 2]
    assert nearest_rank(values, 25) == 1
    assert nearest_rank(values, 50) == 2
    assert nearest_rank(values, 75) == 3
    assert nearest_rank(values, 100) == 4
    assert nearest_rank([7.0], 25) == 7.0
    assert nearest_rank([7.0], 75) == 7.0


def test_nearest_rank_matches_oracle_on_random_data(rng):
    for n in (1, 2, 5, 17):
        vals = rng.normal(size=n).tolist()
        for q in (1, 25, 50, 75, 99, 100):
            assert nearest_rank(vals, q) == oracles.percentile_nearest_rank(vals, q)


def test_nearest_rank_rejects_empty():
    with pytest.raises(ValueError, match="empty"):
        nearest_rank([], 50)
