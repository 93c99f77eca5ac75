"""Command-line interface for the deep envelope pipeline."""

import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import click
from dotenv import load_dotenv

from .config import PRESETS, RunConfig, load_config, validate_against
from .dataset import Dataset, load_dataset, write_dataset
from .errors import ConfigError, DeepEnvelopeError
from .evaluation import run_experiment
from .reporting import export_report
from .synthetic import make_synthetic

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _fail(code: str, message: str) -> None:
    one_line = " ".join(str(message).split())
    click.echo(f"error: {code}: {one_line}", err=True)
    sys.exit(1)


def _config_options(func):
    """Options shared by ``run`` and ``validate-config``."""
    options = [
        click.option(
            "--config",
            "config_path",
            envvar="DEEP_ENVELOPE_CONFIG",
            type=click.Path(dir_okay=False),
            help="key=value config file (can also be set via DEEP_ENVELOPE_CONFIG)",
        ),
        click.option(
            "--preset",
            type=click.Choice(sorted(PRESETS)),
            help="Start from a shipped preset",
        ),
        click.option(
            "--dataset",
            envvar="DEEP_ENVELOPE_DATASET",
            type=click.Path(dir_okay=False),
            help="Dataset CSV, overrides dataset_path",
        ),
        click.option(
            "--seed",
            envvar="DEEP_ENVELOPE_SEED",
            type=int,
            help="Seed for clustering, folds and ELM (overrides the config)",
        ),
        click.option(
            "--fusion-mode",
            type=click.Choice(["strict", "faithful"]),
            help="Fit fusion weights leave-one-out (strict) or on all rows (faithful)",
        ),
        click.option(
            "--classifier",
            type=click.Choice(["svm", "knn", "elm"]),
            help="Per-layer classifier",
        ),
        click.option(
            "--workers",
            envvar="DEEP_ENVELOPE_WORKERS",
            type=int,
            help="Threads used to run folds",
        ),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _resolve(
    config_path: Optional[str],
    preset: Optional[str],
    overrides: Dict[str, Any],
) -> Tuple[RunConfig, Dataset]:
    cfg = load_config(config_path, preset, overrides)
    if cfg.dataset_path is None:
        raise ConfigError("no dataset: set dataset_path in the config or pass --dataset")
    ds = load_dataset(cfg.dataset_path, cfg.dataset_schema, cfg.drop_trailing)
    return cfg, ds


@click.group()
@click.option(
    "--log-level",
    envvar="DEEP_ENVELOPE_LOG_LEVEL",
    default="INFO",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    help="Logging level (can also be set via DEEP_ENVELOPE_LOG_LEVEL)",
)
@click.option(
    "--env-file",
    default=".env",
    help="Path to environment file (default: .env)",
)
def main(log_level: str, env_file: str):
    """Deep envelope pipeline: prune, cluster, select, classify and fuse."""
    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler()],
    )
    if os.path.exists(env_file):
        logger.info(f"Loading environment from {env_file}")
        load_dotenv(env_file)


@main.command()
@_config_options
@click.option(
    "--out",
    "out_dir",
    envvar="DEEP_ENVELOPE_OUT",
    type=click.Path(file_okay=False),
    help="Directory for report.tsv, layers.tsv, weights.csv, markers.csv",
)
def run(config_path, preset, dataset, seed, fusion_mode, classifier, workers, out_dir):
    """Run the cross-validated experiment and write the report files."""
    overrides = {
        "dataset_path": dataset,
        "seed": seed,
        "fusion_mode": fusion_mode,
        "classifier": classifier,
        "workers": workers,
        "output_dir": out_dir,
    }
    try:
        cfg, ds = _resolve(config_path, preset, overrides)
        if cfg.output_dir is None:
            raise ConfigError("no output directory: set output_dir or pass --out")
        validate_against(cfg, ds)
        result = run_experiment(ds, cfg)
        paths = export_report(result, cfg.output_dir)
    except DeepEnvelopeError as e:
        _fail(e.code, str(e))
    except OSError as e:
        _fail("io", str(e))

    click.echo(
        f"fused acc {result.fused_metrics.acc:.2f} "
        f"(baseline {result.baseline_metrics.acc:.2f}); wrote {len(paths)} files "
        f"to {cfg.output_dir}"
    )


@main.command("validate-config")
@_config_options
def validate_config(config_path, preset, dataset, seed, fusion_mode, classifier, workers):
    """Check the config against the dataset shape without running anything."""
    overrides = {
        "dataset_path": dataset,
        "seed": seed,
        "fusion_mode": fusion_mode,
        "classifier": classifier,
        "workers": workers,
    }
    try:
        cfg, ds = _resolve(config_path, preset, overrides)
        counts = validate_against(cfg, ds)
    except DeepEnvelopeError as e:
        _fail(e.code, str(e))
    except OSError as e:
        _fail("io", str(e))

    columns = len(counts) if cfg.fuse_original else len(counts) - 1
    click.echo(f"ok: layer counts {counts}; {columns} fusion columns")


@main.command()
@click.option(
    "--out",
    "out_dir",
    required=True,
    type=click.Path(file_okay=False),
    help="Directory for dataset.csv and synth.conf",
)
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--subjects", default=40, show_default=True, type=int)
@click.option("--segments", default=20, show_default=True, type=int)
@click.option("--features", default=10, show_default=True, type=int)
@click.option("--signal-positions", default=12, show_default=True, type=int)
def synth(out_dir, seed, subjects, segments, features, signal_positions):
    """Write the seeded synthetic dataset and a config that runs it."""
    out = Path(out_dir)
    try:
        data = make_synthetic(subjects, segments, features, signal_positions, seed=seed)
        out.mkdir(parents=True, exist_ok=True)
        dataset_path = write_dataset(data.dataset, out / "dataset.csv")
        config_path = out / "synth.conf"
        config_path.write_text(
            "# synthetic benchmark\n"
            "preset=synth\n"
            "dataset_path=dataset.csv\n",
            encoding="utf-8",
        )
    except ValueError as e:
        _fail("config", str(e))
    except OSError as e:
        _fail("io", str(e))

    click.echo(f"wrote {dataset_path} and {config_path}")


if __name__ == "__main__":
    main()
