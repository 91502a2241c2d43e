"""Command-line interface: the full workflow behind one executable.

Subcommands: synth-gen, train, predict, evaluate, tune-lambda,
export-responses, gradcheck. Outputs are written atomically (temp file +
rename) so interrupted runs never leave partial artifacts, and every
artifact embeds the resolved config hash. Errors exit nonzero with a single
machine-parseable line ``<CODE>: message`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_datasets, load_experiment_config
from .dataset import engineer_features, load_csv, write_csv, chronological_split, assign_folds
from .errors import ArgumentError, PikanError
from .gradcheck import REL_TOLERANCE, run_gradient_checks
from .kan import KanModel
from .metrics import benchmark, reports_to_csv, export_responses, responses_to_csv
from .pipeline import ChainedTrainResult, chained_predict, chained_train, tune_lambda_fleet
from .serialize import load_chained, save_chained
from .synth import generate
from .config import synth_vessel_configs


def _atomic(path: Path, write_fn) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def _train_one_vessel(args) -> tuple[str, ChainedTrainResult, object, object]:
    ds, cfg = args
    train_ds, test_ds = chronological_split(ds, cfg.train_fraction)
    folds = assign_folds(train_ds, cfg.folds)
    result = chained_train(train_ds, folds, cfg.pipeline_config())
    return ds.vessel_id, result, train_ds, test_ds


def cmd_synth_gen(cfg: ExperimentConfig, out: str | None) -> int:
    out_dir = Path(out or cfg.out_dir)
    for sc in synth_vessel_configs(cfg):
        ds = generate(sc)
        _atomic(out_dir / f"{sc.vessel_id}.csv", lambda p, d=ds: write_csv(d, p))
        print(f"synth-gen: wrote {out_dir / (sc.vessel_id + '.csv')} ({ds.n_rows} rows)")
    return 0


def cmd_train(cfg: ExperimentConfig, out: str | None, jobs: int) -> int:
    out_dir = Path(out or cfg.out_dir)
    datasets = load_datasets(cfg)
    work = [(ds, cfg) for ds in datasets]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_one_vessel, work))
    else:
        results = [_train_one_vessel(w) for w in work]

    for vessel, result, train_ds, test_ds in results:
        _atomic(out_dir / f"models_{vessel}.json",
                lambda p, m=result.models: save_chained(m, p))
        _atomic(out_dir / f"oof_{vessel}.csv",
                lambda p, t=result.oof: t.to_csv(p, cfg.config_hash))
        for stage, log in result.logs.items():
            _atomic(out_dir / f"train_log_{vessel}_{stage}.csv",
                    lambda p, lg=log: lg.to_csv(p))
        _atomic(out_dir / f"train_{vessel}.csv", lambda p, d=train_ds: write_csv(d, p))
        _atomic(out_dir / f"test_{vessel}.csv", lambda p, d=test_ds: write_csv(d, p))
        print(f"train: vessel {vessel}: models, OOF table, and logs in {out_dir}")
    return 0


def cmd_predict(models_path: str, features_path: str, out: str) -> int:
    models = load_chained(models_path)
    ds = engineer_features(load_csv(features_path, require_targets=False))
    rpm_hat, power_hat, fuel_hat = chained_predict(models, ds)

    def write(p: Path) -> None:
        from .dataset import INTERVAL_SECONDS, KW_TO_W

        with open(p, "w", encoding="utf-8") as fh:
            if models.config_hash:
                fh.write(f"# config_hash={models.config_hash}\n")
            fh.write("timestamp,predicted_rpm,predicted_shaft_power,predicted_fuel_consumed\n")
            for rec, r, pw, f in zip(ds.records, rpm_hat, power_hat, fuel_hat):
                fh.write(
                    f"{rec.timestamp.strftime('%Y-%m-%dT%H:%M:%SZ')},"
                    f"{r!r},{pw / KW_TO_W!r},{f * INTERVAL_SECONDS!r}\n"
                )

    _atomic(Path(out), write)
    print(f"predict: wrote {out} ({ds.n_rows} rows)")
    return 0


def cmd_evaluate(models_paths: list[str], test_paths: list[str], out: str,
                 table_out: str | None) -> int:
    all_models = [load_chained(p) for p in models_paths]
    tests = {}
    for p in test_paths:
        ds = engineer_features(load_csv(p))
        tests[ds.vessel_id] = ds

    by_method: dict[str, dict[str, object]] = {}
    for m in all_models:
        matches = [v for v in tests if v == m.vessel_id]
        if not matches and len(all_models) == 1:
            matches = list(tests)  # ad hoc pairing when ids do not line up
        for vessel in matches:
            by_method.setdefault(m.method, {})[vessel] = m
    if not by_method:
        raise ArgumentError(
            "no model/test pairs: vessel ids in model files must match test file stems"
        )
    reports, table = benchmark(by_method, tests)
    config_hash = all_models[0].config_hash
    _atomic(Path(out), lambda p: reports_to_csv(reports, p, config_hash))
    print(table)
    if table_out:
        _atomic(Path(table_out), lambda p: Path(p).write_text(table + "\n", encoding="utf-8"))
    print(f"evaluate: wrote {out} ({len(reports)} report rows)")
    return 0


def cmd_tune_lambda(cfg: ExperimentConfig, out: str | None) -> int:
    out_dir = Path(out or cfg.out_dir)
    datasets = load_datasets(cfg)
    result = tune_lambda_fleet(
        datasets, cfg.lambda_candidates, cfg.pipeline_config(), cfg.train_fraction
    )

    def write_medians(p: Path) -> None:
        with open(p, "w", encoding="utf-8") as fh:
            fh.write(f"# config_hash={cfg.config_hash}\n")
            fh.write("lambda,median_val_mae\n")
            for c, m in zip(result.candidates, result.medians):
                fh.write(f"{c!r},{m!r}\n")

    _atomic(out_dir / "lambda_medians.csv", write_medians)
    _atomic(
        out_dir / "tune_result.json",
        lambda p: Path(p).write_text(
            json.dumps(
                {
                    "lambda_star": result.lambda_star,
                    "candidates": result.candidates,
                    "medians": result.medians,
                    "config_hash": cfg.config_hash,
                },
                sort_keys=True,
                indent=1,
            )
            + "\n",
            encoding="utf-8",
        ),
    )
    print(f"tune-lambda: lambda_star={result.lambda_star!r} (medians in {out_dir})")
    return 0


def cmd_export_responses(models_path: str, out: str, grid_size: int) -> int:
    models = load_chained(models_path)
    responses = {}
    for stage in ("rpm", "power", "fuel"):
        model = getattr(models, stage)
        if isinstance(model, KanModel):
            responses[stage] = export_responses(model, grid_size)
    if not responses:
        raise ArgumentError(
            f"method {models.method!r} has no univariate responses to export"
        )
    _atomic(Path(out), lambda p: responses_to_csv(responses, p, models.config_hash))
    print(f"export-responses: wrote {out}")
    return 0


def cmd_gradcheck(seed: int) -> int:
    report = run_gradient_checks(seeds=[seed])
    status = "PASS" if report.passed else "FAIL"
    print(
        f"gradcheck: max relative error {report.max_rel_err:.3e} "
        f"(tolerance {REL_TOLERANCE:.0e}): {status}"
    )
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pikan",
        description="Vessel shaft RPM / shaft power / fuel consumption modeling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")

    p = sub.add_parser("synth-gen", help="generate synthetic vessel CSVs")
    add_config(p)
    p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("train", help="train chained models per vessel")
    add_config(p)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="max parallel vessel workers")

    p = sub.add_parser("predict", help="chained predictions for a feature CSV")
    p.add_argument("--models", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="benchmark models against test CSVs")
    p.add_argument("--models", required=True, nargs="+")
    p.add_argument("--test", required=True, nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--table", default=None, help="also write the text table here")

    p = sub.add_parser("tune-lambda", help="fleet-wide physics-weight sweep")
    add_config(p)
    p.add_argument("--out", default=None)

    p = sub.add_parser("export-responses", help="univariate response curves")
    p.add_argument("--models", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid-size", type=int, default=100)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth-gen":
            cfg = load_experiment_config(args.config, args.seed)
            return cmd_synth_gen(cfg, args.out)
        if args.command == "train":
            cfg = load_experiment_config(args.config, args.seed)
            return cmd_train(cfg, args.out, args.jobs)
        if args.command == "predict":
            return cmd_predict(args.models, args.features, args.out)
        if args.command == "evaluate":
            return cmd_evaluate(args.models, args.test, args.out, args.table)
        if args.command == "tune-lambda":
            cfg = load_experiment_config(args.config, args.seed)
            return cmd_tune_lambda(cfg, args.out)
        if args.command == "export-responses":
            return cmd_export_responses(args.models, args.out, args.grid_size)
        if args.command == "gradcheck":
            return cmd_gradcheck(args.seed)
        raise ArgumentError(f"unknown command {args.command!r}")
    except PikanError as exc:
        print(exc.oneline(), file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"E_IO: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
