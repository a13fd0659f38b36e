"""Command-line driver: simulate datasets, profile, calibrate, check coverage.

Every command reads one JSON config and works inside one output directory,
so a run is fully described by the files it leaves behind.  Exit codes:
0 success, 2 config error, 3 optimizer failure, 4 calibration failure, 5 IO.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .calibrate import (
    CalibrationError,
    calibrate_delta,
    confidence_set,
    quantile_bootstrap_ci,
    validate_coverage,
    write_calibration_csv,
    write_calibration_json,
)
from .core import evaluate_profile, fit_mgle, read_profile_csv, write_profile_csv
from .experiment import ConfigError, ExperimentConfig, config_hash, load_config
from .models.cmp import read_count_dataset, write_count_dataset
from .models.randomwalk import read_lifetime_csv, write_lifetime_csv
from .optim import OptimResult
from .stats import RngStream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OPTIMIZER = 3
EXIT_CALIBRATION = 4
EXIT_IO = 5


class OptimizerFailure(RuntimeError):
    """The descent did not converge within its restart budget."""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_run_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg.raw)
    return out


def _record_provenance(out: Path, cfg: ExperimentConfig, command: str, started: str) -> None:
    # timestamps make this the one file exempt from byte-level replay checks
    path = out / "provenance.json"
    record = {
        "command": command,
        "seed": cfg.seed,
        "true_params": [float(v) for v in cfg.true_params],
        "started": started,
        "finished": _now(),
    }
    doc = {"config_hash": config_hash(cfg.raw), "model": cfg.model_name, "runs": []}
    if path.exists():
        with open(path) as fh:
            prior = json.load(fh)
        if prior.get("config_hash") == doc["config_hash"]:
            doc = prior
    doc["runs"] = doc.get("runs", []) + [record]
    _write_json(path, doc)


def _save_dataset(cfg: ExperimentConfig, dataset, path: Path) -> None:
    if cfg.model_name == "cmp":
        write_count_dataset(dataset, path)
    else:
        write_lifetime_csv(path, dataset)


def _load_dataset(cfg: ExperimentConfig, path: Path):
    if not path.exists():
        raise OSError(f"dataset file {path} not found; run `glp simulate` first")
    if cfg.model_name == "cmp":
        return read_count_dataset(path)
    return read_lifetime_csv(path)


def _load_mgle(out: Path) -> OptimResult:
    path = out / "mgle.json"
    if not path.exists():
        raise OSError(f"{path} not found; run `glp profile` first")
    with open(path) as fh:
        doc = json.load(fh)
    return OptimResult(
        point=np.asarray(doc["point"], dtype=float),
        value=float(doc["value"]),
        evals=int(doc["evals"]),
        converged=bool(doc["converged"]),
    )


def cmd_simulate(cfg: ExperimentConfig, threads: int) -> None:
    out = _prepare_run_dir(cfg)
    started = _now()
    model = cfg.build_model()
    dataset = model.simulate(cfg.true_params, model.default_size, RngStream(cfg.seed))
    _save_dataset(cfg, dataset, out / cfg.dataset_filename())
    _record_provenance(out, cfg, "simulate", started)
    print(f"wrote {out / cfg.dataset_filename()}")


def cmd_profile(cfg: ExperimentConfig, threads: int) -> None:
    out = _prepare_run_dir(cfg)
    started = _now()
    model = cfg.build_model()
    dataset = _load_dataset(cfg, out / cfg.dataset_filename())
    mgle = fit_mgle(model, dataset, cfg.optimizer)
    if not mgle.converged:
        raise OptimizerFailure(
            f"MGLE fit did not converge after {cfg.optimizer.restarts} restarts "
            f"({mgle.evals} evaluations, best loss {mgle.value:.6g} "
            f"at {mgle.point.tolist()})"
        )
    _write_json(
        out / "mgle.json",
        {
            "point": mgle.point.tolist(),
            "value": mgle.value,
            "evals": mgle.evals,
            "converged": mgle.converged,
        },
    )
    for spec in cfg.interest:
        curve = evaluate_profile(
            model,
            dataset,
            spec.partition(model.space.dim),
            spec.grid,
            cfg.optimizer,
            mgle=mgle,
            n_workers=threads,
        )
        write_profile_csv(curve, out / f"profile_{spec.name}.csv")
        print(f"wrote {out / f'profile_{spec.name}.csv'}")
    _record_provenance(out, cfg, "profile", started)


def cmd_calibrate(cfg: ExperimentConfig, threads: int) -> None:
    out = _prepare_run_dir(cfg)
    started = _now()
    model = cfg.build_model()
    dataset = _load_dataset(cfg, out / cfg.dataset_filename())
    mgle = _load_mgle(out)
    for spec in cfg.interest:
        profile_path = out / f"profile_{spec.name}.csv"
        if not profile_path.exists():
            raise OSError(f"{profile_path} not found; run `glp profile` first")
        curve = read_profile_csv(profile_path)
        curve = dataclasses.replace(curve, mgle_loss=mgle.value, mgle_point=mgle.point)
        partition = spec.partition(model.space.dim)
        cal = calibrate_delta(
            model,
            dataset,
            partition,
            spec.grid,
            cfg.calibration,
            cfg.optimizer,
            mgle=mgle,
            observed_profile=curve,
            n_workers=threads,
        )
        cs = confidence_set(curve, cal.delta_star, cal.tau_alpha)
        qlo, qhi = quantile_bootstrap_ci(
            cal.bootstrap_mgles, cfg.calibration.alpha, spec.index
        )
        write_calibration_json(cal, out / f"calibration_{spec.name}.json")
        write_calibration_csv(cal, out / f"coverage_curve_{spec.name}.csv")
        _write_json(
            out / f"confidence_set_{spec.name}.json",
            {
                "parameter": spec.name,
                "delta_star": cs.delta_star,
                "tau_alpha": cs.tau_alpha,
                "interval": list(cs.interval),
                "hit_lower_bound": cs.hit_lower_bound,
                "hit_upper_bound": cs.hit_upper_bound,
                "quantile_bootstrap_interval": [qlo, qhi],
            },
        )
        print(
            f"{spec.name}: delta*={cal.delta_star:.6g} "
            f"interval=({cs.interval[0]:.6g}, {cs.interval[1]:.6g})"
        )
    _record_provenance(out, cfg, "calibrate", started)


def _delta_star_for(cfg: ExperimentConfig, out: Path, name: str) -> float:
    path = out / f"calibration_{name}.json"
    if path.exists():
        with open(path) as fh:
            return float(json.load(fh)["delta_star"])
    if name in cfg.coverage_delta_star:
        return cfg.coverage_delta_star[name]
    raise ConfigError(
        f"no delta* for {name!r}: run `glp calibrate` or set coverage.delta_star"
    )


def cmd_coverage(cfg: ExperimentConfig, threads: int) -> None:
    out = _prepare_run_dir(cfg)
    started = _now()
    model = cfg.build_model()
    names = model.space.names
    rows = []
    for spec in cfg.interest:
        delta_star = _delta_star_for(cfg, out, spec.name)
        partition = spec.partition(model.space.dim)
        for theta in cfg.coverage_true_params:
            report = validate_coverage(
                model,
                np.asarray(theta, dtype=float),
                partition,
                delta_star,
                cfg.coverage_alphas,
                cfg.coverage_B,
                cfg.optimizer,
                seed=cfg.coverage_seed,
                n_workers=threads,
            )
            for alpha, observed in zip(report.alphas, report.observed):
                rows.append(
                    [spec.name]
                    + [f"{v:.17g}" for v in theta]
                    + [f"{alpha:.17g}", f"{observed:.17g}", report.b_effective]
                )
    import csv as _csv

    with open(out / "coverage.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["parameter", *names, "alpha", "observed_coverage", "B_effective"])
        w.writerows(rows)
    _record_provenance(out, cfg, "coverage", started)
    print(f"wrote {out / 'coverage.csv'}")


_COMMANDS = {
    "simulate": cmd_simulate,
    "profile": cmd_profile,
    "calibrate": cmd_calibrate,
    "coverage": cmd_coverage,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glp",
        description="Generalised likelihood profiles: simulate, profile, "
        "calibrate, and validate coverage.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument(
            "--threads",
            type=int,
            default=1,
            help="worker threads (speed only; results are identical)",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = dataclasses.replace(cfg, out_dir=args.out)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        _COMMANDS[args.command](cfg, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OptimizerFailure as exc:
        print(f"optimizer failure: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZER
    except CalibrationError as exc:
        print(f"calibration failure: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
