"""Command-line interface.

``fairrank run`` executes an experiment grid over a dataset (loaded
from disk or generated from a named preset) and writes per-run results,
seed-aggregated results, parameter checkpoints, and a manifest that
replays the run byte-for-byte. ``fairrank plotdata`` turns a results
file into the flat tables the standard plots are drawn from.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from itertools import product
from pathlib import Path

import numpy as np

from .datagen import PRESETS, generate, preset
from .errors import FairRankError, MissingColumns, ParseError
from .graph import ReviewGraph
from .graph_io import read_graph
from .metrics import MetricsReport
from .nn import save_params
from .train import TrainedModels, TrainingConfig, run_experiment

SEED_ENV_VAR = "FAIRRANK_SEED"

DETECTOR_CHOICES = ("gnn", "gnn-s1tr", "gnn-s0te", "gnn-s1te")
APRIME_CHOICES = ("wo", "random", "gt", "pretrained", "joint")
ANALYSES = ("auc_vs_delta", "noise_curve", "sensitivity")

RESULT_COLUMNS = [
    "run_id", "dataset", "p", "detector_variant", "aprime_source", "seed",
    "k", "rho", "alpha", "lambda",
    "ndcg_all", "ndcg_protected", "ndcg_favored", "delta_ndcg",
    "afrr_mixed", "afrr_pure", "auc_aprime",
]
METRIC_COLUMNS = RESULT_COLUMNS[10:]
CELL_COLUMNS = [
    "dataset", "p", "detector_variant", "aprime_source", "k", "rho",
    "alpha", "lambda",
]

_CONFIG_KEYS = (
    "data", "gen", "out", "seeds", "p", "detector", "aprime", "k", "rho",
    "alpha", "lambda", "epochs", "jobs",
)

_RUN_DEFAULTS = {
    "seeds": "1",
    "p": "20",
    "detector": "gnn-s1tr",
    "aprime": "joint",
    "k": "50",
    "rho": "0.5",
    "alpha": "0.8",
    "lambda": "5.0",
    "epochs": "300",
    "jobs": "1",
    "out": "out",
}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _report_row(report: MetricsReport) -> list[str]:
    values = {
        "run_id": report.run_id,
        "dataset": report.dataset,
        "p": report.p,
        "detector_variant": report.detector_variant,
        "aprime_source": report.aprime_source,
        "seed": report.seed,
        "k": report.k,
        "rho": report.rho,
        "alpha": report.alpha,
        "lambda": report.lam,
        "ndcg_all": report.ndcg_all,
        "ndcg_protected": report.ndcg_protected,
        "ndcg_favored": report.ndcg_favored,
        "delta_ndcg": report.delta_ndcg,
        "afrr_mixed": report.afrr_mixed,
        "afrr_pure": report.afrr_pure,
        "auc_aprime": report.auc_aprime,
    }
    return [_fmt(values[col]) for col in RESULT_COLUMNS]


def detector_to_variant(detector: str) -> str | None:
    if detector not in DETECTOR_CHOICES:
        raise ValueError(
            f"detector must be one of {DETECTOR_CHOICES}, got {detector!r}"
        )
    return None if detector == "gnn" else detector[len("gnn-"):]


def read_config_file(path: str) -> dict[str, str]:
    """Flat key=value options; same keys as the run flags."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"expected key=value, got {line!r}", line=lineno)
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _CONFIG_KEYS:
                raise ParseError(
                    f"unknown option {key!r} (expected one of {_CONFIG_KEYS})",
                    line=lineno,
                )
            out[key] = value
    return out


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"--{what} expects comma-separated numbers, got {text!r}")
    if not values:
        raise ValueError(f"--{what} must not be empty")
    return values


def _parse_ints(text: str, what: str) -> list[int]:
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"--{what} expects comma-separated integers, got {text!r}")
    if not values:
        raise ValueError(f"--{what} must not be empty")
    return values


def _parse_names(text: str, what: str, choices: tuple[str, ...]) -> list[str]:
    values = [tok.strip() for tok in text.split(",") if tok.strip()]
    if not values:
        raise ValueError(f"--{what} must not be empty")
    for v in values:
        if v not in choices:
            raise ValueError(f"--{what}: {v!r} is not one of {choices}")
    return values


def base_seed_from_env() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")


def _load_dataset(gen: str | None, data: str | None) -> tuple[str, ReviewGraph]:
    if (gen is None) == (data is None):
        raise ValueError("exactly one of --gen and --data is required")
    if gen is not None:
        if gen not in PRESETS:
            raise ValueError(
                f"unknown preset {gen!r}; choose from {tuple(PRESETS)}"
            )
        g, _ = generate(preset(gen))
        return gen, g
    path = Path(data)
    return path.name or str(path), read_graph(str(path))


def plan_runs(manifest: dict) -> list[TrainingConfig]:
    """Expand a manifest into the ordered list of run configs."""
    grid = manifest["grid"]
    base = manifest["base_seed"]
    configs = []
    for p, detector, aprime, k, rho in product(
        grid["p"], grid["detector"], grid["aprime"], grid["k"], grid["rho"]
    ):
        for seed in range(base, base + manifest["seeds"]):
            configs.append(
                TrainingConfig(
                    epochs=manifest["epochs"],
                    lam=manifest["lambda"],
                    percentile=p,
                    aprime_source=aprime,
                    mixup_variant=detector_to_variant(detector),
                    alpha=manifest["alpha"],
                    k=k,
                    rho=rho,
                    seed=seed,
                ).resolve()
            )
    return configs


def _execute_one(args: tuple[TrainingConfig, ReviewGraph, str]):
    cfg, g, dataset = args
    return run_experiment(cfg, g, dataset)


def execute_runs(
    configs: list[TrainingConfig], g: ReviewGraph, dataset: str, jobs: int = 1
) -> list[tuple[MetricsReport, TrainedModels]]:
    tasks = [(cfg, g, dataset) for cfg in configs]
    if jobs <= 1 or len(tasks) <= 1:
        return [_execute_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_execute_one, tasks))


def write_results(path: Path, rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        writer.writerows(rows)


def write_aggregate(path: Path, rows: list[list[str]]) -> None:
    """Mean/std (population) over seeds for every grid cell."""
    header = list(CELL_COLUMNS) + ["n_seeds"]
    for metric in METRIC_COLUMNS:
        header += [f"{metric}_mean", f"{metric}_std"]

    col_index = {c: i for i, c in enumerate(RESULT_COLUMNS)}
    cells: dict[tuple, list[list[str]]] = {}
    order: list[tuple] = []
    for row in rows:
        key = tuple(row[col_index[c]] for c in CELL_COLUMNS)
        if key not in cells:
            cells[key] = []
            order.append(key)
        cells[key].append(row)

    out_rows = []
    for key in order:
        group = cells[key]
        out = list(key) + [str(len(group))]
        for metric in METRIC_COLUMNS:
            raw = [r[col_index[metric]] for r in group]
            if any(v == "" for v in raw):
                out += ["", ""]
            else:
                vals = np.array([float(v) for v in raw])
                out += [repr(float(vals.mean())), repr(float(vals.std(ddof=0)))]
        out_rows.append(out)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(out_rows)


def write_manifest(path: Path, manifest: dict) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_checkpoints(
    directory: Path, results: list[tuple[MetricsReport, TrainedModels]]
) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for report, models in results:
        save_params(models.detector, str(directory / f"{report.run_id}.detector.txt"))
        if models.inferencer is not None:
            save_params(
                models.inferencer,
                str(directory / f"{report.run_id}.inferencer.txt"),
            )


def cmd_run(args: argparse.Namespace) -> int:
    if args.manifest is not None:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
        out_dir = Path(args.out if args.out is not None else _RUN_DEFAULTS["out"])
        jobs = int(args.jobs) if args.jobs is not None else 1
    else:
        options = dict(_RUN_DEFAULTS)
        options.update({"data": None, "gen": None})
        if args.config is not None:
            options.update(read_config_file(args.config))
        for key in _CONFIG_KEYS:
            flag_value = getattr(args, "lambda_" if key == "lambda" else key)
            if flag_value is not None:
                options[key] = str(flag_value)
        manifest = {
            "data": options["data"] or None,
            "gen": options["gen"] or None,
            "base_seed": base_seed_from_env(),
            "seeds": int(options["seeds"]),
            "epochs": int(options["epochs"]),
            "alpha": float(options["alpha"]),
            "lambda": float(options["lambda"]),
            "grid": {
                "p": _parse_floats(options["p"], "p"),
                "detector": _parse_names(
                    options["detector"], "detector", DETECTOR_CHOICES
                ),
                "aprime": _parse_names(options["aprime"], "aprime", APRIME_CHOICES),
                "k": _parse_ints(options["k"], "k"),
                "rho": _parse_floats(options["rho"], "rho"),
            },
        }
        out_dir = Path(options["out"])
        jobs = int(options["jobs"])

    dataset, g = _load_dataset(manifest["gen"], manifest["data"])
    configs = plan_runs(manifest)
    results = execute_runs(configs, g, dataset, jobs=jobs)

    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [_report_row(report) for report, _ in results]
    write_results(out_dir / "results.csv", rows)
    write_aggregate(out_dir / "aggregate.csv", rows)
    write_manifest(out_dir / "manifest.json", manifest)
    write_checkpoints(out_dir / "checkpoints", results)
    print(f"wrote {len(rows)} runs to {out_dir}")
    return 0


def _read_results(path: str, needed: list[str]) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumns(f"{path} is empty (no header row)")
        missing = [c for c in needed if c not in header]
        if missing:
            raise MissingColumns(
                f"{path} lacks required columns {missing}; found {header}"
            )
        records = [dict(zip(header, row)) for row in reader]
    return header, records


def _write_table(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


_PAIR_KEY = ["dataset", "p", "detector_variant", "k", "rho", "alpha", "lambda", "seed"]


def emit_auc_vs_delta(records: list[dict]) -> tuple[list[str], list[list[str]]]:
    """Per-seed scatter of inference quality against fairness change.

    Pairs each joint run with the pretrained run of the same cell and
    seed; the gap columns are joint-minus-pretrained AUC and
    pretrained-minus-joint delta-NDCG.
    """
    header = _PAIR_KEY + [
        "auc_joint", "auc_pretrained", "auc_gap",
        "delta_joint", "delta_pretrained", "delta_gap",
    ]
    by_key: dict[tuple, dict[str, dict]] = {}
    order: list[tuple] = []
    for rec in records:
        source = rec["aprime_source"]
        if source not in ("joint", "pretrained"):
            continue
        key = tuple(rec[c] for c in _PAIR_KEY)
        if key not in by_key:
            by_key[key] = {}
            order.append(key)
        by_key[key][source] = rec
    rows = []
    for key in order:
        pair = by_key[key]
        if "joint" not in pair or "pretrained" not in pair:
            continue
        jt, pt = pair["joint"], pair["pretrained"]
        if jt["auc_aprime"] == "" or pt["auc_aprime"] == "":
            continue
        auc_joint = float(jt["auc_aprime"])
        auc_pre = float(pt["auc_aprime"])
        delta_joint = float(jt["delta_ndcg"])
        delta_pre = float(pt["delta_ndcg"])
        rows.append(
            list(key)
            + [
                repr(auc_joint), repr(auc_pre), repr(auc_joint - auc_pre),
                repr(delta_joint), repr(delta_pre), repr(delta_pre - delta_joint),
            ]
        )
    return header, rows


_SOURCE_ORDER = ("wo", "random", "pretrained", "joint", "gt")


def emit_noise_curve(records: list[dict]) -> tuple[list[str], list[list[str]]]:
    """Fairness gap per column source, ordered by decreasing noise."""
    header = ["aprime_source", "n_runs", "delta_ndcg_mean", "delta_ndcg_std"]
    rows = []
    for source in _SOURCE_ORDER:
        vals = np.array(
            [
                float(rec["delta_ndcg"])
                for rec in records
                if rec["aprime_source"] == source
            ]
        )
        if vals.size == 0:
            continue
        rows.append(
            [
                source,
                str(vals.size),
                repr(float(vals.mean())),
                repr(float(vals.std(ddof=0))),
            ]
        )
    return header, rows


def emit_sensitivity(records: list[dict]) -> tuple[list[str], list[list[str]]]:
    """Mean inference AUC per (k, rho) cell."""
    header = ["k", "rho", "n_runs", "auc_aprime_mean"]
    cells: dict[tuple[float, float], list[float]] = {}
    for rec in records:
        if rec["auc_aprime"] == "":
            continue
        key = (float(rec["k"]), float(rec["rho"]))
        cells.setdefault(key, []).append(float(rec["auc_aprime"]))
    rows = []
    for key in sorted(cells):
        vals = np.array(cells[key])
        rows.append(
            [
                _fmt(int(key[0])) if key[0].is_integer() else repr(key[0]),
                repr(key[1]),
                str(vals.size),
                repr(float(vals.mean())),
            ]
        )
    return header, rows


_ANALYSIS_NEEDS = {
    "auc_vs_delta": _PAIR_KEY + ["aprime_source", "auc_aprime", "delta_ndcg"],
    "noise_curve": ["aprime_source", "delta_ndcg"],
    "sensitivity": ["k", "rho", "auc_aprime"],
}

_ANALYSIS_FUNCS = {
    "auc_vs_delta": emit_auc_vs_delta,
    "noise_curve": emit_noise_curve,
    "sensitivity": emit_sensitivity,
}


def cmd_plotdata(args: argparse.Namespace) -> int:
    _, records = _read_results(args.results, _ANALYSIS_NEEDS[args.analysis])
    header, rows = _ANALYSIS_FUNCS[args.analysis](records)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"{args.analysis}.csv"
    _write_table(out_path, header, rows)
    print(f"wrote {len(rows)} rows to {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairrank",
        description="Fairness-aware graph spam detection experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment grid")
    src = run.add_argument_group("dataset (exactly one)")
    src.add_argument("--data", help="directory holding nodes.tsv / edges.tsv")
    src.add_argument("--gen", help=f"generate a preset dataset {tuple(PRESETS)}")
    run.add_argument("--seeds", type=int, help="number of seeds per grid cell")
    run.add_argument("--p", help="comma-separated favored percentiles")
    run.add_argument(
        "--detector", help=f"comma-separated detector variants {DETECTOR_CHOICES}"
    )
    run.add_argument(
        "--aprime", help=f"comma-separated column sources {APRIME_CHOICES}"
    )
    run.add_argument("--k", help="comma-separated replication counts")
    run.add_argument("--rho", help="comma-separated edge drop rates")
    run.add_argument("--alpha", type=float, help="mixup blend weight")
    run.add_argument(
        "--lambda", dest="lambda_", type=float, help="ranking regularizer weight"
    )
    run.add_argument("--epochs", type=int, help="training epochs")
    run.add_argument("--out", help="output directory")
    run.add_argument("--jobs", type=int, help="parallel worker processes")
    run.add_argument("--config", help="key=value defaults file")
    run.add_argument(
        "--manifest", help="replay a previous run's manifest.json exactly"
    )
    run.set_defaults(func=cmd_run)

    plot = sub.add_parser("plotdata", help="extract plot-ready tables")
    plot.add_argument("--results", required=True, help="results.csv from a run")
    plot.add_argument("--analysis", required=True, choices=ANALYSES)
    plot.add_argument("--out", required=True, help="output directory")
    plot.set_defaults(func=cmd_plotdata)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FairRankError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
