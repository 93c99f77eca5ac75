"""Segment pruning: global Relief weights over segment positions, lowest ones cut."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .dataset import Dataset, transpose_envelope, trim_to_common
from .errors import CutoffError, RaggedEnvelopesError, SingleClassError
from .relief import LabeledRows, WeightOrigin, WeightVector, relief_weights

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PruneResult:
    """Pruned dataset plus the positions removed and the weights that chose them.

    ``weights`` is ``None`` only when nothing was pruned (cutoff 0).
    ``trimmed_to`` records the common count ragged input was cut to first.
    """

    dataset: Dataset
    removed_positions: Tuple[int, ...]
    weights: Optional[WeightVector]
    segment_count: int
    trimmed_to: Optional[int] = None


def segment_rows_for_relief(ds: Dataset) -> LabeledRows:
    """Stack every subject's transposed envelope: n*d rows of length m."""
    m = ds.segment_count
    rows = np.vstack([transpose_envelope(env) for env in ds.envelopes])
    labels = np.repeat(ds.labels, ds.d)
    assert rows.shape == (ds.n_subjects * ds.d, m)
    return LabeledRows(rows, labels)


def segment_weights(ds: Dataset) -> WeightVector:
    """m-dimensional Relief weights over segment positions."""
    if not ds.is_uniform:
        error_msg = f"ragged envelopes: segment counts {sorted(set(ds.segment_counts))}"
        logger.error(error_msg)
        raise RaggedEnvelopesError(error_msg)
    if not ds.has_both_classes:
        error_msg = f"single-class dataset: {ds.n_subjects} subjects of one class"
        logger.error(error_msg)
        raise SingleClassError(error_msg)
    return relief_weights(segment_rows_for_relief(ds), WeightOrigin.SEGMENT)


def lowest_positions(weights: np.ndarray, count: int) -> Tuple[int, ...]:
    """Indices of the ``count`` smallest weights, ties removing the lower index first."""
    order = np.argsort(weights, kind="stable")
    return tuple(sorted(int(i) for i in order[:count]))


def apply_prune(
    ds: Dataset, removed_positions: Sequence[int], segment_count: Optional[int] = None
) -> Dataset:
    """Drop fixed segment positions from every envelope.

    Envelopes longer than ``segment_count`` keep their first ``segment_count``
    segments before the drop, mirroring the trim applied when weights were fit.
    """
    count = segment_count if segment_count is not None else min(ds.segment_counts)
    short = [env.subject_id for env in ds.envelopes if env.n_segments < count]
    if short:
        error_msg = f"ragged envelopes: {short} have fewer than {count} segments"
        logger.error(error_msg)
        raise RaggedEnvelopesError(error_msg)
    keep = [j for j in range(count) if j not in set(removed_positions)]
    if not keep:
        raise CutoffError(f"cutoff exhausts envelope: {count} segments, all removed")
    return ds.with_segments([env.segments[:count][keep] for env in ds.envelopes])


def prune(ds: Dataset, cutoff: int, trim_ragged: bool = True) -> PruneResult:
    """Remove the ``cutoff`` lowest-weight segment positions from every envelope."""
    if cutoff < 0:
        raise ValueError(f"cutoff must be non-negative, got {cutoff}")

    trimmed_to: Optional[int] = None
    if not ds.is_uniform:
        if not trim_ragged:
            error_msg = f"ragged envelopes: segment counts {sorted(set(ds.segment_counts))}"
            logger.error(error_msg)
            raise RaggedEnvelopesError(error_msg)
        ds, trimmed_to = trim_to_common(ds)

    m = ds.segment_count
    if cutoff >= m:
        error_msg = f"cutoff exhausts envelope: cutoff={cutoff} with {m} segments per subject"
        logger.error(error_msg)
        raise CutoffError(error_msg)

    if cutoff == 0:
        return PruneResult(ds, (), None, m, trimmed_to)

    weights = segment_weights(ds)
    removed = lowest_positions(weights.weights, cutoff)
    pruned = apply_prune(ds, removed, m)
    logger.info(f"Pruned segment positions {list(removed)} of {m}")
    return PruneResult(pruned, removed, weights, m, trimmed_to)
