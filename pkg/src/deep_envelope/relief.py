"""Single-neighbor Relief weighting shared by segment pruning and feature selection."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from .errors import DegenerateClassError

logger = logging.getLogger(__name__)


class WeightOrigin(str, Enum):
    """Which axis a weight vector scores."""

    SEGMENT = "segment"
    STITCHED_FEATURE = "stitched_feature"


@dataclass(frozen=True)
class LabeledRows:
    """Rows to be weighted column by column, each with a binary class."""

    rows: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        rows = np.array(self.rows, dtype=float, copy=True)
        labels = np.array(self.labels, dtype=int, copy=True)
        if rows.ndim != 2 or labels.ndim != 1 or rows.shape[0] != labels.shape[0]:
            raise ValueError("rows must be r x c with one label per row")
        if not np.all(np.isfinite(rows)):
            raise ValueError("rows must be finite")
        rows.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)

    @property
    def n_rows(self) -> int:
        return int(self.rows.shape[0])

    @property
    def n_columns(self) -> int:
        return int(self.rows.shape[1])


@dataclass(frozen=True)
class WeightVector:
    """Accumulated Relief weights over one axis."""

    weights: np.ndarray
    origin: WeightOrigin

    def __post_init__(self) -> None:
        weights = np.array(self.weights, dtype=float, copy=True)
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return int(self.weights.shape[0])


def _neighbors(data: LabeledRows, i: int, sq_dist: np.ndarray) -> Tuple[int, int]:
    same = data.labels == data.labels[i]
    same[i] = False
    other = data.labels != data.labels[i]
    if not same.any() or not other.any():
        error_msg = (
            f"degenerate class: row {i} (class {data.labels[i]}) has "
            f"{int(same.sum())} same-class and {int(other.sum())} other-class rows"
        )
        logger.error(error_msg)
        raise DegenerateClassError(error_msg)
    # argmin returns the first minimum, so ties go to the lowest row index
    hit = int(np.argmin(np.where(same, sq_dist, np.inf)))
    miss = int(np.argmin(np.where(other, sq_dist, np.inf)))
    return hit, miss


def _squared_distances(rows: np.ndarray, i: int) -> np.ndarray:
    diff = rows - rows[i]
    return np.sum(diff * diff, axis=1)


def nearest_hit_miss(data: LabeledRows, i: int) -> Tuple[int, int]:
    """Euclidean nearest same-class row (hit) and other-class row (miss) of row i."""
    if not 0 <= i < data.n_rows:
        raise IndexError(f"row index {i} out of range for {data.n_rows} rows")
    return _neighbors(data, i, _squared_distances(data.rows, i))


def relief_terms(rows: np.ndarray, i: int, hit: int, miss: int) -> np.ndarray:
    """Per-column increment of row i: (|s-NM| - |s-NH|) / (|s-NM| + |s-NH|), 0/0 -> 0."""
    to_miss = np.abs(rows[i] - rows[miss])
    to_hit = np.abs(rows[i] - rows[hit])
    total = to_miss + to_hit
    return np.divide(to_miss - to_hit, total, out=np.zeros_like(total), where=total > 0)


def relief_weights(
    data: LabeledRows, origin: WeightOrigin = WeightOrigin.SEGMENT
) -> WeightVector:
    """Full-pass Relief: one nearest hit and miss per row, increments summed in row order."""
    weights = np.zeros(data.n_columns)
    for i in range(data.n_rows):
        hit, miss = _neighbors(data, i, _squared_distances(data.rows, i))
        weights += relief_terms(data.rows, i, hit, miss)
    logger.debug(
        f"Relief over {data.n_rows} rows x {data.n_columns} columns "
        f"({origin.value}): range [{weights.min():.4f}, {weights.max():.4f}]"
    )
    return WeightVector(weights, origin)
