"""Run artifacts: metric report, label grid, feature weight map, markers, provenance."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
import pandas as pd

from .deep_space import DeepSpace, SelectionResult
from .evaluation import ExperimentResult, Metrics, format_percent

logger = logging.getLogger(__name__)

REPORT_FILE = "report.tsv"
LAYERS_FILE = "layers.tsv"
WEIGHTS_FILE = "weights.csv"
MARKERS_FILE = "markers.csv"
PROVENANCE_FILE = "provenance.json"

# where to write to is not part of what was computed
ECHO_EXCLUDED = ("output_dir",)

PROTOCOL_NOTE = (
    "segment prune positions and stitched feature indices are frozen from the "
    "training subjects of each fold; test envelopes are clustered per subject "
    "with the same settings"
)


@dataclass(frozen=True)
class MarkerReport:
    """Slot x feature weights and the features that stand out across slots."""

    weights: np.ndarray
    thresholds: np.ndarray
    support: np.ndarray
    mean_weight: np.ndarray
    markers: Tuple[int, ...]


def slot_feature_weights(selection: SelectionResult) -> np.ndarray:
    """Stitched Relief weights folded back to (prototype slot, original feature)."""
    reduced = selection.reduced
    return np.asarray(selection.weights.weights).reshape(reduced.segment_count, reduced.dim)


def compute_markers(
    weights: np.ndarray, percentile: float = 75.0, support: float = 0.5
) -> MarkerReport:
    """A feature is a marker when it beats its slot's percentile in enough slots.

    Features are reported 1-based.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    thresholds = np.percentile(weights, percentile, axis=1)
    above = weights > thresholds[:, None]
    counts = above.sum(axis=0)
    needed = support * weights.shape[0]
    markers = tuple(int(j) + 1 for j in np.flatnonzero(counts >= needed - 1e-12) if counts[j] > 0)
    return MarkerReport(weights, thresholds, counts, weights.mean(axis=0), markers)


def export_heatmap(
    selection: SelectionResult,
    out_dir: Union[str, Path],
    percentile: float = 75.0,
    support: float = 0.5,
) -> Tuple[Path, Path]:
    """Write the weight map (slots x features) and the marker table."""
    out_dir = Path(out_dir)
    report = compute_markers(slot_feature_weights(selection), percentile, support)
    n_slots, dim = report.weights.shape

    heat = pd.DataFrame(
        report.weights,
        index=[f"slot{i + 1}" for i in range(n_slots)],
        columns=[f"f{j + 1}" for j in range(dim)],
    )
    heat.index.name = "slot"
    weights_path = out_dir / WEIGHTS_FILE
    heat.to_csv(weights_path, float_format="%.12g", lineterminator="\n")

    marker_set = set(report.markers)
    table = pd.DataFrame(
        {
            "feature": np.arange(1, dim + 1),
            "support": report.support.astype(int),
            "mean_weight": report.mean_weight,
            "is_marker": [int(j + 1 in marker_set) for j in range(dim)],
        }
    )
    markers_path = out_dir / MARKERS_FILE
    table.to_csv(markers_path, index=False, float_format="%.12g", lineterminator="\n")

    logger.info(f"Markers over {n_slots} slots: {list(report.markers) or 'none'}")
    return weights_path, markers_path


def _metric_row(name: str, m: Metrics) -> List[str]:
    c = m.counts
    return [
        name,
        format_percent(m.acc),
        format_percent(m.sen),
        format_percent(m.spe),
        format_percent(m.mcc, 4),
        str(c.tp),
        str(c.fp),
        str(c.tn),
        str(c.fn),
        ",".join(m.undefined) or "-",
    ]


def _fmt(value: float) -> str:
    return f"{float(value):.6f}"


def render_report(result: ExperimentResult) -> str:
    """Text of report.tsv: config echo, protocol, metrics, fusion weights, label grid."""
    cfg = result.config
    lines: List[List[str]] = [["# deep-envelope report"], ["[config]"]]
    lines += [[k, v] for k, v in cfg.to_flat() if k not in ECHO_EXCLUDED]

    lines += [
        ["[protocol]"],
        ["fusion_mode", result.fusion.mode.value],
        ["cv_scheme", result.folds.scheme.value],
        ["folds", str(len(result.folds))],
        ["fold_seed", str(result.folds.seed)],
        ["layer_counts", ",".join(str(c) for c in result.layer_counts)],
        ["test_subjects", PROTOCOL_NOTE],
    ]

    lines += [
        ["[metrics]"],
        ["name", "acc", "sen", "spe", "mcc", "tp", "fp", "tn", "fn", "undefined"],
    ]
    for name, m in result.layer_metrics.items():
        lines.append(_metric_row(name, m))
    lines.append(_metric_row("fused", result.fused_metrics))
    lines.append(_metric_row("baseline", result.baseline_metrics))

    weights = result.fusion.weights
    lines += [["[fusion]"], ["lambda", repr(weights.lam)], ["layer", "beta", "beta_norm"]]
    for name, b, bn in zip(result.fused_columns, weights.beta, weights.beta_norm):
        lines.append([name, _fmt(b), _fmt(bn)])

    lines += [["[labels]"], _grid_header(result)]
    lines += [[str(v) for v in row] for row in _grid_rows(result)]
    return "".join("\t".join(row) + "\n" for row in lines)


def _grid_header(result: ExperimentResult) -> List[str]:
    return ["subject_id", "actual", "fused", *result.labels.layer_names]


def _grid_rows(result: ExperimentResult) -> List[List[Any]]:
    return [
        [sid, int(result.y[i]), int(result.fusion.predictions[i]), *result.labels.e[i].tolist()]
        for i, sid in enumerate(result.subject_ids)
    ]


def _space_summary(space: DeepSpace, selections: Tuple[SelectionResult, ...]) -> List[Dict]:
    summary = []
    for layer, prov, selection in zip(space.layers, space.provenance, selections):
        summary.append(
            {
                "layer": layer.name,
                "per_subject_count": layer.per_subject_count,
                "removed_positions": list(prov.removed_positions),
                "trimmed_to": prov.trimmed_to,
                "kept_features": list(selection.kept_feature_indices),
                "clustering": {
                    sid: {
                        "iterations": trace.iterations,
                        "converged": trace.converged,
                        "final_objective": trace.final_objective,
                    }
                    for sid, trace in sorted(prov.traces.items())
                },
            }
        )
    return summary


def provenance(result: ExperimentResult) -> Dict[str, Any]:
    return {
        "fusion_mode": result.fusion.mode.value,
        "folds": [
            {
                "fold": outcome.fold.index,
                "test_ids": list(outcome.fold.test_ids),
                "training_accuracy": outcome.training_accuracy,
                "layers": _space_summary(outcome.space, outcome.selections),
            }
            for outcome in result.outcomes
        ],
        "reference": _space_summary(result.reference.space, result.reference.selections),
    }


def export_report(result: ExperimentResult, out_dir: Union[str, Path]) -> List[Path]:
    """Write every run artifact into ``out_dir`` and return their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    report_path = out_dir / REPORT_FILE
    report_path.write_text(render_report(result), encoding="utf-8")

    layers_path = out_dir / LAYERS_FILE
    grid = pd.DataFrame(_grid_rows(result), columns=_grid_header(result))
    grid.to_csv(layers_path, sep="\t", index=False, lineterminator="\n")

    cfg = result.config
    weights_path, markers_path = export_heatmap(
        result.reference.final_selection, out_dir, cfg.marker_percentile, cfg.marker_support
    )

    provenance_path = out_dir / PROVENANCE_FILE
    provenance_path.write_text(
        json.dumps(provenance(result), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    paths = [report_path, layers_path, weights_path, markers_path, provenance_path]
    logger.info(f"Wrote {', '.join(p.name for p in paths)} to {out_dir}")
    return paths
