"""Command-line interface.

Subcommands: generate, fit, predict, evaluate, reduce, select. Exit codes:
0 success, 2 usage/config/schema problems, 3 I/O failures, 4 numerical
aborts. stdout carries only machine-readable summaries; progress and
diagnostics go to stderr (verbosity via UMMASO_LOG in {quiet, info, debug}).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from . import dataset as ds
from . import lasso as ls
from . import metrics as mt
from . import pipeline as pl
from . import umap as um
from .config import parse_cli_config, pipeline_config_from_dict
from .errors import ConfigError, DataFormatError, NumericalError, StageError
from .sarn import network as nw

logger = logging.getLogger(__name__)

SOIL_FEATURE_NAMES = ["N", "P", "K", "pH", "EC"]
SOIL_CLASS_NAMES = ["Less Fertile", "Fertile", "Highly Fertile"]
SOIL_CENTERS = [
    [40.0, 20.0, 15.0, 5.2, 0.35],
    [75.0, 45.0, 35.0, 6.4, 0.7],
    [110.0, 70.0, 60.0, 7.6, 1.2],
]
SOIL_NOISE_STD = 6.0


def _configure_logging() -> None:
    levels = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    name = os.environ.get("UMMASO_LOG", "quiet").strip().lower()
    logging.basicConfig(stream=sys.stderr, level=levels.get(name, logging.WARNING))


def _load_json_file(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config root must be an object")
    return doc


def _read_feature_csv(path: str, feature_names: list[str]) -> np.ndarray:
    """Read the named feature columns from a CSV; extra columns are ignored."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file, missing header row")
        header = [h.strip() for h in header]
        column_of = {}
        for name in feature_names:
            if name not in header:
                raise DataFormatError(f"{path}: missing feature column '{name}'")
            column_of[name] = header.index(name)
        rows = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: row {row_no} has {len(row)} cells, expected {len(header)}"
                )
            values = []
            for name in feature_names:
                cell = row[column_of[name]]
                try:
                    value = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: non-numeric value '{cell}' at row {row_no}, "
                        f"column {column_of[name] + 1}"
                    ) from None
                values.append(value)
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: zero data rows")
    return np.asarray(rows, dtype=np.float64)


def _metrics_line(report: mt.MetricsReport) -> str:
    return (
        f"accuracy={report.accuracy:.4f} "
        f"precision={report.precision_macro:.4f} "
        f"recall={report.recall_macro:.4f} "
        f"kappa={report.kappa:.4f}"
    )


def cmd_generate(args) -> int:
    try:
        per_class = [int(v) for v in args.per_class.split(",") if v != ""]
    except ValueError:
        raise ConfigError(f"--per-class must be comma-separated integers, got '{args.per_class}'") from None
    if not per_class:
        raise ConfigError("--per-class must list at least one count")
    if args.centers is not None:
        doc = _load_json_file(args.centers)
        if "centers" not in doc:
            raise ConfigError(f"{args.centers}: missing 'centers' key")
        centers = np.asarray(doc["centers"], dtype=np.float64)
        feature_names = doc.get("feature_names")
        class_names = doc.get("class_names")
    else:
        centers = np.asarray(SOIL_CENTERS)
        feature_names = SOIL_FEATURE_NAMES
        class_names = SOIL_CLASS_NAMES
    if len(per_class) != centers.shape[0]:
        raise ConfigError(
            f"--per-class lists {len(per_class)} counts but there are "
            f"{centers.shape[0]} class centers"
        )
    config = ds.SynthConfig(
        samples_per_class=per_class,
        class_centers=centers,
        noise_std=args.noise_std,
        seed=args.seed if args.seed is not None else 0,
    )
    data = ds.synth_generate(config, feature_names, class_names)
    ds.write_csv(data, args.out, label_column=args.label_column or "fertility")
    logger.info("wrote %d rows to %s", data.n_samples, args.out)
    print("per_class_counts=" + ",".join(str(int(c)) for c in data.class_counts()))
    return 0


def cmd_fit(args) -> int:
    config_doc = _load_json_file(args.config) if args.config else {}
    config, io = parse_cli_config(config_doc)
    data_path = args.data or io["data"]
    out_dir = args.out or io["out"]
    label_column = args.label_column or io["label_column"]
    if data_path is None:
        raise ConfigError("no input data: pass --data or set 'data' in the config")
    if out_dir is None:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    data = ds.load_csv(data_path, label_column=label_column)
    logger.info("loaded %d rows, %d features", data.n_samples, data.n_features)
    artifacts = pl.run(data, config)
    pl.save_artifacts(artifacts, out_dir)
    print(_metrics_line(artifacts.metrics_report))
    return 0


def cmd_predict(args) -> int:
    artifacts = pl.load_artifacts(args.artifacts)
    X = _read_feature_csv(args.data, artifacts.feature_names)
    feats = pl.transform_new(artifacts, X)
    probs, labels = nw.predict(artifacts.model, feats)
    n_classes = probs.shape[1]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        header = ["row_index"] + [f"p_class_{c}" for c in range(n_classes)]
        fh.write(",".join(header + ["predicted_label"]) + "\n")
        for r in range(probs.shape[0]):
            cells = [str(r)] + [repr(float(p)) for p in probs[r]] + [str(int(labels[r]))]
            fh.write(",".join(cells) + "\n")
    print(f"rows={probs.shape[0]}")
    return 0


def cmd_evaluate(args) -> int:
    data = ds.load_csv(args.data, label_column=args.label_column or "fertility")
    predicted = []
    with open(args.predictions, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or "predicted_label" not in header:
            raise DataFormatError(
                f"{args.predictions}: missing 'predicted_label' column"
            )
        col = header.index("predicted_label")
        for row_no, row in enumerate(reader, start=2):
            try:
                predicted.append(int(row[col]))
            except (ValueError, IndexError):
                raise DataFormatError(
                    f"{args.predictions}: bad predicted_label at row {row_no}"
                ) from None
    if len(predicted) != data.n_samples:
        raise DataFormatError(
            f"prediction count {len(predicted)} does not match data rows {data.n_samples}"
        )
    predicted = np.asarray(predicted, dtype=np.int64)
    n_classes = int(max(data.labels.max(), predicted.max())) + 1
    report = mt.evaluate(data.labels, predicted, n_classes)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(mt.report_to_dict(report), fh, sort_keys=True, indent=1)
    if args.csv:
        mt.report_to_csv(report, args.csv)
    print(_metrics_line(report))
    return 0


def cmd_reduce(args) -> int:
    config_doc = _load_json_file(args.config) if args.config else {}
    config, io = parse_cli_config(config_doc)
    label_column = args.label_column or io["label_column"]
    master = args.seed if args.seed is not None else config.seed
    umap_cfg = replace(config.umap, seed=master + pl.SEED_UMAP)
    data = ds.load_csv(args.data, label_column=label_column)
    standardized, _ = ds.standardize(data)
    _, embedding = um.embed(standardized.features, umap_cfg)
    um.embedding_to_csv(embedding.coordinates, data.labels, args.out)
    print(f"rows={data.n_samples} dims={umap_cfg.out_dim}")
    return 0


def cmd_select(args) -> int:
    config_doc = _load_json_file(args.config) if args.config else {}
    config, io = parse_cli_config(config_doc)
    label_column = args.label_column or io["label_column"]
    data = ds.load_csv(args.data, label_column=label_column)
    standardized, _ = ds.standardize(data)
    response = standardized.labels.astype(np.float64)
    grid = ls.lambda_grid(
        standardized.features, response - response.mean(), config.lasso.grid_count
    )
    path = ls.fit_path(standardized.features, response, grid)
    ranking = ls.rank_features(path, standardized.feature_names)
    selected = ls.select(path, config.lasso.strategy)
    os.makedirs(args.out, exist_ok=True)
    ls.path_to_csv(path, os.path.join(args.out, "lasso_path.csv"))
    with open(os.path.join(args.out, "ranking.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "order": ranking.order,
                "entry_lambdas": [
                    v if v is not None else "never" for v in ranking.entry_lambdas
                ],
                "names": ranking.names,
                "selected_indices": selected,
            },
            fh,
            sort_keys=True,
            indent=1,
        )
    print("ranking=" + ",".join(str(j) for j in ranking.order))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument(
        "--label-column", default=None, help="label column name (default: fertility)"
    )

    parser = argparse.ArgumentParser(
        prog="ummaso",
        description="Soil-fertility style pipeline: UMAP + LASSO + sparse attention network",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic dataset CSV")
    p.add_argument("--per-class", default="700,200,100", help="comma-separated counts")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--noise-std", type=float, default=SOIL_NOISE_STD)
    p.add_argument("--centers", help="JSON file with class centers (default: soil schema)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", parents=[common], help="run the full pipeline")
    p.add_argument("--data", help="labeled CSV (or 'data' key in the config)")
    p.add_argument("--out", help="artifacts directory (or 'out' key in the config)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="predict with saved artifacts")
    p.add_argument("--artifacts", required=True, help="artifacts directory from fit")
    p.add_argument("--data", required=True, help="feature CSV matching the schema")
    p.add_argument("--out", required=True, help="predictions CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against labels")
    p.add_argument("--predictions", required=True, help="predictions CSV from predict")
    p.add_argument("--data", required=True, help="labeled CSV with the true labels")
    p.add_argument("--out", default="metrics.json", help="metrics JSON output path")
    p.add_argument("--csv", help="also write metric,value bar-chart data here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reduce", parents=[common], help="emit the 2-d (or e-d) embedding only")
    p.add_argument("--data", required=True, help="labeled CSV")
    p.add_argument("--out", required=True, help="embedding CSV path")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("select", parents=[common], help="emit the lasso path and ranking only")
    p.add_argument("--data", required=True, help="labeled CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_select)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, NumericalError):
            return 4
        if isinstance(exc.cause, OSError):
            return 3
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # malformed inputs must never crash the process
        logger.debug("unexpected failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
