"""Command-line entry point.

Subcommands map one-to-one onto the library's pipeline stages::

    gen      write a ground-truth dictionary and train/test signal sets
    train    learn a dictionary from a signal file
    distill  prune a trained dictionary to a target size by usage
    eval     risk (and distance, given a reference) of a dictionary
    bounds   Monte-Carlo distance-sandwich quantities for a dictionary pair
    sweep    size/noise experiment table
    noise    noise-robustness improvement table
    phase    minimum-usage phase-transition table

Every subcommand accepts ``--config`` (a flat ``key = value`` text file),
``--set key=value`` overrides, ``--seed`` (shorthand for base_seed) and
``--out``.  Grid-valued keys take comma-separated entries.  On success the
exit code is 0; any failure prints a single JSON error line to stderr and
exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

import numpy as np

from .coding import empirical_risk
from .distill import prune_by_usage, save_distill_result
from .experiments import (
    Algorithm,
    ExperimentConfig,
    run_noise_sweep,
    run_phase_transition,
    run_sweep,
)
from .learning import TrainConfig, ksvd_train, odl_train, save_train_report
from .metrics import (
    atom_diagnostics,
    dict_distance,
    lemma1_check,
    write_atom_diagnostics,
    write_bound_reports,
)
from .model import Dictionary, GenerativeModel, SampleSet, gen_dictionary, sample_batch
from .mtx import format_float, load_matrix, save_matrix

__all__ = ["main"]

# Keys accepted from config files / --set, beyond ExperimentConfig fields.
_EXTRA_KEYS = {"n_mc": 100_000}
_GRID_KEYS = {"p_prime_grid", "sigma_grid"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _GRID_KEYS:
        return tuple(float(v) if "." in v or "e" in v.lower() else int(v)
                     for v in raw.split(",") if v.strip())
    if key == "algorithm":
        return Algorithm(raw)
    if key == "output_dir":
        return raw
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def _read_config_file(path: str) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = text.split("=", 1)
            values[key.strip()] = raw
    return values


def _load_config(args) -> tuple:
    """Merge defaults <- config file <- --set overrides <- --seed/--out."""
    known = {f.name for f in fields(ExperimentConfig)}
    raw: dict = {}
    if args.config:
        raw.update(_read_config_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set needs key=value, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value
    extras = dict(_EXTRA_KEYS)
    cfg_kwargs = {}
    for key, value in raw.items():
        if key in known:
            cfg_kwargs[key] = _parse_value(key, str(value))
        elif key in extras:
            extras[key] = int(str(value).strip())
        else:
            raise ValueError(f"unknown config key {key!r}")
    if args.seed is not None:
        cfg_kwargs["base_seed"] = args.seed
    if args.out is not None:
        cfg_kwargs["output_dir"] = args.out
    return ExperimentConfig(**cfg_kwargs), extras


def _load_dictionary(path: str) -> Dictionary:
    return Dictionary(load_matrix(path))


def _load_signals(path: str) -> SampleSet:
    return SampleSet(load_matrix(path))


def _cmd_gen(args) -> int:
    cfg, _ = _load_config(args)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    D0 = gen_dictionary(cfg.d, cfg.p, cfg.base_seed)
    model = GenerativeModel(D0, cfg.k, noise_sigma=cfg.sigma_grid[0])
    train = sample_batch(model, cfg.n_train, cfg.base_seed + 10_000)
    test = sample_batch(model, cfg.n_test, cfg.base_seed + 77_777)
    save_matrix(os.path.join(out, "dictionary.mtx"), D0.atoms)
    save_matrix(os.path.join(out, "train_signals.mtx"), train.signals)
    save_matrix(os.path.join(out, "test_signals.mtx"), test.signals)
    print(f"wrote dictionary.mtx, train_signals.mtx, test_signals.mtx to {out}")
    return 0


def _cmd_train(args) -> int:
    cfg, _ = _load_config(args)
    samples = _load_signals(args.data)
    p_prime = args.p_prime if args.p_prime is not None else cfg.p_prime_grid[0]
    tc = TrainConfig(
        p_prime=p_prime,
        iterations=cfg.ksvd_sweeps if cfg.algorithm is Algorithm.KSVD else cfg.iterations,
        coder=cfg.coder(),
        batch_size=cfg.batch_size,
        seed=cfg.base_seed,
    )
    trainer = ksvd_train if cfg.algorithm is Algorithm.KSVD else odl_train
    report = trainer(samples, tc)
    os.makedirs(cfg.output_dir, exist_ok=True)
    save_train_report(report, cfg.output_dir, args.stem)
    print(f"wrote {args.stem}_dictionary.mtx, {args.stem}_usage.csv, "
          f"{args.stem}_loss.csv to {cfg.output_dir} "
          f"(status: {','.join(report.status) or 'clean'})")
    return 0


def _read_usage_csv(path: str) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "atom_index,count":
        raise ValueError(f"{path}: expected header 'atom_index,count'")
    counts = {}
    for ln in lines[1:]:
        idx, cnt = ln.split(",")
        counts[int(idx)] = int(cnt)
    return np.array([counts[i] for i in range(len(counts))], dtype=np.int64)


def _cmd_distill(args) -> int:
    cfg, _ = _load_config(args)
    # Reconstruct the minimum TrainReport surface pruning needs.
    from .learning import TrainReport

    dictionary = _load_dictionary(args.dictionary)
    usage = _read_usage_csv(args.usage)
    report = TrainReport(
        dictionary=dictionary, usage=usage, loss_trace=np.zeros(1), status=()
    )
    p_target = args.p_target if args.p_target is not None else cfg.p
    result = prune_by_usage(report, p_target)
    os.makedirs(cfg.output_dir, exist_ok=True)
    save_distill_result(result, cfg.output_dir, args.stem)
    print(f"wrote {args.stem}_dictionary.mtx, {args.stem}_kept.csv to {cfg.output_dir}")
    return 0


def _cmd_eval(args) -> int:
    cfg, _ = _load_config(args)
    D = _load_dictionary(args.dictionary)
    samples = _load_signals(args.data)
    lines = [("risk", empirical_risk(samples, D, cfg.coder()))]
    if args.ref:
        D0 = _load_dictionary(args.ref)
        lines.append(("dict_distance", dict_distance(D0, D)))
    os.makedirs(cfg.output_dir, exist_ok=True)
    out_path = os.path.join(cfg.output_dir, "eval.csv")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("metric,value\n")
        for name, value in lines:
            fh.write(f"{name},{format_float(value)}\n")
    for name, value in lines:
        print(f"{name} = {format_float(value)}")
    return 0


def _cmd_bounds(args) -> int:
    cfg, extras = _load_config(args)
    D0 = _load_dictionary(args.ref)
    Dhat = _load_dictionary(args.dictionary)
    report = lemma1_check(D0, Dhat, cfg.k, n_mc=extras["n_mc"], seed=cfg.base_seed)
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_bound_reports(os.path.join(cfg.output_dir, "bounds.csv"), [report])
    written = "bounds.csv"
    if args.usage:
        usage = _read_usage_csv(args.usage)
        diags = atom_diagnostics(Dhat, D0, usage)
        write_atom_diagnostics(
            os.path.join(cfg.output_dir, "atom_diagnostics.csv"), diags
        )
        written += ", atom_diagnostics.csv"
    print(f"wrote {written} to {cfg.output_dir} "
          f"(dist={format_float(report.dist)}, lower={format_float(report.lower)}, "
          f"upper={format_float(report.upper)})")
    return 0


def _cmd_sweep(args) -> int:
    cfg, _ = _load_config(args)
    rows = run_sweep(cfg)
    print(f"wrote {len(rows)} rows to {cfg.output_dir}/sweep_rows.csv")
    return 0


def _cmd_noise(args) -> int:
    cfg, _ = _load_config(args)
    rows = run_noise_sweep(cfg)
    print(f"wrote {len(rows)} rows to {cfg.output_dir}/noise_rows.csv")
    return 0


def _cmd_phase(args) -> int:
    cfg, _ = _load_config(args)
    rows = run_phase_transition(cfg)
    print(f"wrote {len(rows)} rows to {cfg.output_dir}/phase_rows.csv")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="overdict",
        description="Over-realized dictionary learning: training, distillation, "
        "recovery metrics and experiment sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--out", help="override output_dir")

    p = sub.add_parser("gen", help="generate ground truth and signal sets")
    common(p)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="learn a dictionary from signals")
    common(p)
    p.add_argument("--data", required=True, help="signal matrix (MTX1)")
    p.add_argument("--p-prime", type=int, dest="p_prime",
                   help="estimated dictionary size (default: first grid entry)")
    p.add_argument("--stem", default="model", help="output filename stem")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("distill", help="prune a trained dictionary by usage")
    common(p)
    p.add_argument("--dictionary", required=True, help="trained dictionary (MTX1)")
    p.add_argument("--usage", required=True, help="usage CSV (atom_index,count)")
    p.add_argument("--p-target", type=int, dest="p_target",
                   help="target size (default: config p)")
    p.add_argument("--stem", default="distilled", help="output filename stem")
    p.set_defaults(func=_cmd_distill)

    p = sub.add_parser("eval", help="risk (and distance vs a reference)")
    common(p)
    p.add_argument("--dictionary", required=True, help="dictionary to evaluate (MTX1)")
    p.add_argument("--data", required=True, help="signal matrix (MTX1)")
    p.add_argument("--ref", help="ground-truth dictionary (MTX1) for distance")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bounds", help="distance-sandwich bound quantities")
    common(p)
    p.add_argument("--dictionary", required=True, help="estimate (MTX1)")
    p.add_argument("--ref", required=True, help="ground truth (MTX1)")
    p.add_argument("--usage", help="usage CSV enables per-atom diagnostics")
    p.set_defaults(func=_cmd_bounds)

    for name, fn, help_text in (
        ("sweep", _cmd_sweep, "size/noise sweep tables"),
        ("noise", _cmd_noise, "noise-robustness improvement tables"),
        ("phase", _cmd_phase, "minimum-usage phase-transition tables"),
    ):
        p = sub.add_parser(name, help=help_text)
        common(p)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # single machine-readable line, nonzero exit
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
