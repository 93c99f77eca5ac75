"""Run configuration: flat key=value files, presets and precedence rules."""

import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .classifiers import ModelKind, ModelSpec
from .dataset import Dataset, DatasetSchema
from .deep_space import KeepRule, layer_counts
from .errors import ConfigError
from .evaluation import CvScheme
from .fcm import FcmConfig
from .fusion import FusionMode

logger = logging.getLogger(__name__)


# Shipped starting points; a config file selects one with ``preset=<name>``.
PRESETS: Dict[str, Dict[str, Any]] = {
    "sakar": {
        "schema": "uci-sakar-like",
        "drop_trailing": 1,
        "initial_cutoff": 6,
        "deep_layers": 5,
    },
    "maxlittle": {
        "schema": "canonical-csv",
        "trim_ragged": True,
        "initial_cutoff": 0,
        "deep_layers": 3,
    },
    "selfdata": {
        "schema": "canonical-csv",
        "initial_cutoff": 3,
        "deep_layers": 4,
    },
    "synth": {
        "schema": "canonical-csv",
        "initial_cutoff": 8,
        "deep_layers": 5,
        "keep_rule": "fraction:0.5",
        "seed": 7,
    },
}


class RunConfig(BaseModel):
    """Every knob of a pipeline run, flat so it maps one-to-one onto config keys."""

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    dataset_path: Optional[Path] = None
    # "schema" is a BaseModel attribute, so the key is an alias
    dataset_schema: DatasetSchema = Field(DatasetSchema.CANONICAL_CSV, alias="schema")
    drop_trailing: int = Field(0, ge=0)
    trim_ragged: bool = True

    initial_cutoff: int = Field(6, ge=0)
    deep_layers: int = Field(5, ge=0)
    intra_prune: int = Field(0, ge=0)

    fuzzifier: float = Field(2.0, gt=1.0)
    max_iters: int = Field(300, ge=1)
    tol: float = Field(1e-6, gt=0.0)
    zero_dist_eps: float = Field(1e-12, gt=0.0)
    mmd: bool = True

    keep_rule: KeepRule = KeepRule(fraction=0.5)

    classifier: ModelKind = ModelKind.LINEAR_SVM
    knn_k: int = Field(3, ge=1)
    elm_hidden: int = Field(50, ge=1)
    svm_c: float = Field(1.0, gt=0.0)
    standardize: bool = True

    cv_scheme: CvScheme = CvScheme.LOSO
    holdout_fraction: float = Field(0.3, gt=0.0, lt=1.0)
    kfold_k: int = Field(10, ge=2)

    fusion_lambda: float = Field(0.1, ge=0.0)
    fusion_lambda_grid: Tuple[float, ...] = ()
    fusion_mode: FusionMode = FusionMode.STRICT
    fuse_original: bool = True

    marker_percentile: float = Field(75.0, ge=0.0, le=100.0)
    marker_support: float = Field(0.5, gt=0.0, le=1.0)

    seed: int = Field(0, ge=0)
    output_dir: Optional[Path] = None
    workers: int = Field(1, ge=1)

    @field_validator("keep_rule", mode="before")
    @classmethod
    def _parse_keep_rule(cls, value):
        if isinstance(value, str):
            return KeepRule.parse(value)
        return value

    @field_validator("classifier", mode="before")
    @classmethod
    def _parse_classifier(cls, value):
        return ModelKind.parse(value)

    @field_validator("fusion_lambda_grid", mode="before")
    @classmethod
    def _parse_grid(cls, value):
        if isinstance(value, str):
            return tuple(float(v) for v in value.split(",") if v.strip())
        return value

    @field_validator("fusion_lambda_grid")
    @classmethod
    def _non_negative_grid(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if any(v < 0 for v in value):
            raise ValueError("fusion_lambda_grid values must be non-negative")
        return value

    @field_validator("knn_k")
    @classmethod
    def _odd_k(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"knn_k must be odd for binary voting, got {value}")
        return value

    def fcm_config(self) -> FcmConfig:
        return FcmConfig(
            fuzzifier=self.fuzzifier,
            max_iters=self.max_iters,
            tol=self.tol,
            seed=self.seed,
            zero_dist_eps=self.zero_dist_eps,
            mmd=self.mmd,
        )

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            kind=self.classifier,
            knn_k=self.knn_k,
            elm_hidden=self.elm_hidden,
            svm_c=self.svm_c,
            seed=self.seed,
            standardize=self.standardize,
        )

    def to_flat(self) -> List[Tuple[str, str]]:
        """Every field in declaration order as (key, text); the report's config echo."""
        return [
            (info.alias or name, _flat_value(getattr(self, name)))
            for name, info in type(self).model_fields.items()
        ]

    def to_text(self) -> str:
        return "".join(f"{key}={value}\n" for key, value in self.to_flat())


def _flat_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_flat_value(v) for v in value)
    if isinstance(value, Path):
        return value.as_posix()
    return str(value)


def _validation_message(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        key = ".".join(str(p) for p in item["loc"]) or "config"
        if item["type"] == "extra_forbidden":
            parts.append(f"unknown key {key!r}")
        else:
            parts.append(f"{key}: {item['msg']}")
    return "; ".join(parts)


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Parse a flat key=value file; relative dataset/output paths resolve against it."""
    path = Path(path)
    if not path.is_file():
        error_msg = f"config file not found: {path}"
        logger.error(error_msg)
        raise ConfigError(error_msg)
    try:
        values = dotenv_values(path, encoding="utf-8")
    except UnicodeDecodeError as e:
        error_msg = f"config file {path} is not UTF-8 text: {e.reason} at byte {e.start}"
        logger.error(error_msg)
        raise ConfigError(error_msg) from e
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigError(f"keys without a value in {path}: {missing}")
    for key in ("dataset_path", "output_dir"):
        if values.get(key) and not Path(values[key]).is_absolute():
            values[key] = str(path.parent / values[key])
    return dict(values)


def load_config(
    path: Optional[Union[str, Path]] = None,
    preset: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Merge defaults < preset < config file < overrides into a validated RunConfig.

    Args:
        path: optional key=value config file
        preset: preset name; wins over a ``preset=`` line in the file
        overrides: command-line and environment values; ``None`` entries are ignored

    Returns:
        Frozen RunConfig
    """
    file_values = read_config_file(path) if path is not None else {}
    preset = preset or file_values.pop("preset", None)
    file_values.pop("preset", None)

    merged: Dict[str, Any] = {}
    if preset:
        if preset not in PRESETS:
            error_msg = f"unknown preset {preset!r}; choose from {sorted(PRESETS)}"
            logger.error(error_msg)
            raise ConfigError(error_msg)
        merged.update(PRESETS[preset])
    merged.update(file_values)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})

    try:
        cfg = RunConfig(**merged)
    except ValidationError as e:
        error_msg = f"invalid config: {_validation_message(e)}"
        logger.error(error_msg)
        raise ConfigError(error_msg) from e
    except ValueError as e:
        raise ConfigError(f"invalid config: {e}") from e

    logger.info(f"Loaded config (preset={preset or 'none'}, file={path or 'none'})")
    return cfg


def validate_against(cfg: RunConfig, ds: Dataset) -> List[int]:
    """Check the config fits the dataset's shape; returns per-layer segment counts."""
    m = min(ds.segment_counts) if cfg.trim_ragged else ds.segment_count
    counts = layer_counts(m, cfg.initial_cutoff, cfg.deep_layers, cfg.intra_prune)
    if cfg.cv_scheme is CvScheme.KFOLD and cfg.kfold_k > ds.n_subjects:
        error_msg = f"kfold_k={cfg.kfold_k} exceeds {ds.n_subjects} subjects"
        logger.error(error_msg)
        raise ConfigError(error_msg)
    if not ds.has_both_classes:
        raise ConfigError(f"single-class dataset: {ds.n_subjects} subjects of one class")
    return counts
