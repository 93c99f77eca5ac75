"""Sparse decision-level fusion of per-layer label columns.

The weights come from ``min ||y - E b||^2 + lam * ||b||_1`` (no intercept),
solved by cyclic coordinate descent. They are clipped at zero, scaled to sum
to one and used as a weighted vote thresholded at one half.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

PHI_EPS = 1e-12


class FusionMode(str, Enum):
    """Which rows the fusion weights are fit on."""

    STRICT = "strict"  # every row scored by weights fit on the other rows
    FAITHFUL = "faithful"  # one fit on the whole cross-validated matrix


@dataclass(frozen=True)
class LabelMatrix:
    """n x L binary predictions, one column per layer, one row per subject."""

    e: np.ndarray
    layer_names: Tuple[str, ...]
    subject_ids: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        e = np.array(self.e, dtype=int, copy=True)
        if e.ndim != 2 or e.shape[1] != len(self.layer_names):
            raise ValueError("label matrix needs one column per layer name")
        if not np.isin(e, (0, 1)).all():
            raise ValueError("label matrix entries must be 0 or 1")
        if self.subject_ids and len(self.subject_ids) != e.shape[0]:
            raise ValueError("label matrix needs one subject id per row")
        e.setflags(write=False)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "layer_names", tuple(self.layer_names))
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))

    @property
    def n_rows(self) -> int:
        return int(self.e.shape[0])

    def column(self, name: str) -> np.ndarray:
        return self.e[:, self.layer_names.index(name)]

    def select(self, names: Sequence[str]) -> "LabelMatrix":
        idx = [self.layer_names.index(n) for n in names]
        return LabelMatrix(self.e[:, idx], tuple(names), self.subject_ids)


@dataclass(frozen=True)
class FusionWeights:
    """Raw weights, their normalized form and the penalty that produced them."""

    beta: np.ndarray
    beta_norm: np.ndarray
    lam: float


@dataclass(frozen=True)
class FusionOutcome:
    """Fused labels and the weights behind them.

    In strict mode ``weights`` averages the per-row fits and ``row_weights``
    holds each of them; in faithful mode there is a single fit.
    """

    mode: FusionMode
    predictions: np.ndarray
    weights: FusionWeights
    row_weights: Tuple[FusionWeights, ...] = ()


def soft_threshold(value: float, threshold: float) -> float:
    return float(np.sign(value) * max(abs(value) - threshold, 0.0))


def lasso_fit(
    e: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = 1e-8,
    max_sweeps: int = 100_000,
) -> np.ndarray:
    """Cyclic coordinate descent for ``||y - E b||^2 + lam * ||b||_1``.

    Stops when no coordinate moves by more than ``tol`` in a full sweep.
    """
    E = np.asarray(e, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    if E.ndim != 2 or E.shape[0] != y.shape[0] or E.shape[0] < 1:
        raise ValueError(f"label matrix {E.shape} does not match {y.shape[0]} targets")

    n_cols = E.shape[1]
    beta = np.zeros(n_cols)
    residual = y.copy()
    col_sq = np.sum(E * E, axis=0)

    for _ in range(max_sweeps):
        largest_step = 0.0
        for j in range(n_cols):
            if col_sq[j] == 0.0:
                continue
            rho = E[:, j] @ residual + col_sq[j] * beta[j]
            new = soft_threshold(rho, lam / 2.0) / col_sq[j]
            step = new - beta[j]
            if step != 0.0:
                residual -= step * E[:, j]
                beta[j] = new
                largest_step = max(largest_step, abs(step))
        if largest_step < tol:
            break
    else:
        logger.warning(f"lasso_fit hit max_sweeps={max_sweeps} at lambda={lam}")
    return beta


def normalize(beta: np.ndarray) -> np.ndarray:
    """Clip negatives to zero and scale to sum one; an all-zero vector becomes uniform."""
    beta = np.asarray(beta, dtype=float)
    clipped = np.clip(beta, 0.0, None)
    total = clipped.sum()
    if total <= 0.0:
        return np.full(beta.shape[0], 1.0 / beta.shape[0])
    return clipped / total


def fuse(e: np.ndarray, beta_norm: np.ndarray) -> np.ndarray:
    """Weighted vote per row; a score of exactly one half is class 0."""
    E = np.atleast_2d(np.asarray(e, dtype=float))
    beta_norm = np.asarray(beta_norm, dtype=float)
    if E.shape[1] != beta_norm.shape[0]:
        raise ValueError(f"{E.shape[1]} label columns but {beta_norm.shape[0]} weights")
    return (E @ beta_norm > 0.5 + PHI_EPS).astype(int)


def fit_weights(e: np.ndarray, y: np.ndarray, lam: float) -> FusionWeights:
    beta = lasso_fit(e, y, lam)
    return FusionWeights(beta, normalize(beta), float(lam))


def select_lambda(
    e: np.ndarray, y: np.ndarray, grid: Sequence[float]
) -> FusionWeights:
    """Fit every penalty in ``grid``; keep the first one with the best fusion accuracy."""
    if not grid:
        raise ValueError("lambda grid is empty")
    y = np.asarray(y, dtype=int)
    best: Optional[FusionWeights] = None
    best_acc = -1.0
    for lam in grid:
        weights = fit_weights(e, y, lam)
        acc = float(np.mean(fuse(e, weights.beta_norm) == y))
        if acc > best_acc:
            best, best_acc = weights, acc
    return best


def _fit(e: np.ndarray, y: np.ndarray, lam: float, grid: Sequence[float]) -> FusionWeights:
    return select_lambda(e, y, grid) if grid else fit_weights(e, y, lam)


def fit_fusion(
    labels: LabelMatrix,
    y: np.ndarray,
    mode: FusionMode = FusionMode.STRICT,
    lam: float = 0.1,
    grid: Sequence[float] = (),
) -> FusionOutcome:
    """Fuse the label matrix under the given fitting protocol.

    Args:
        labels: cross-validated per-layer predictions
        y: true labels, one per row
        mode: strict (leave-one-row-out) or faithful (fit on all rows)
        lam: penalty used when ``grid`` is empty
        grid: candidate penalties chosen by fusion accuracy on the fitting rows

    Returns:
        FusionOutcome with fused labels in row order
    """
    mode = FusionMode(mode)
    y = np.asarray(y, dtype=int)
    E = labels.e
    if mode is FusionMode.FAITHFUL:
        weights = _fit(E, y, lam, grid)
        return FusionOutcome(mode, fuse(E, weights.beta_norm), weights)

    n = labels.n_rows
    if n < 2:
        raise ValueError("strict fusion needs at least two rows")
    predictions = np.zeros(n, dtype=int)
    per_row = []
    for i in range(n):
        others = np.arange(n) != i
        weights = _fit(E[others], y[others], lam, grid)
        predictions[i] = fuse(E[i : i + 1], weights.beta_norm)[0]
        per_row.append(weights)

    lams = [w.lam for w in per_row]
    candidates = list(grid) if grid else [lam]
    common = max(candidates, key=lambda c: (lams.count(c), -candidates.index(c)))
    summary = FusionWeights(
        np.mean([w.beta for w in per_row], axis=0),
        np.mean([w.beta_norm for w in per_row], axis=0),
        float(common),
    )
    logger.info(f"Strict fusion over {n} rows, most chosen lambda {common:g}")
    return FusionOutcome(mode, predictions, summary, tuple(per_row))
