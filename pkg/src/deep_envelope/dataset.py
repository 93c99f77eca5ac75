"""Subject-grouped segment datasets: data model, ingestion and reshaping."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import (
    ConflictingLabelsError,
    DatasetFormatError,
    RaggedEnvelopesError,
)

logger = logging.getLogger(__name__)

CANONICAL_HEADER = ("subject_id", "label")


class DatasetSchema(str, Enum):
    """Supported ingestion layouts."""

    CANONICAL_CSV = "canonical-csv"
    UCI_SAKAR_LIKE = "uci-sakar-like"


def _frozen_matrix(values: np.ndarray) -> np.ndarray:
    matrix = np.array(values, dtype=float, copy=True)
    matrix.setflags(write=False)
    return matrix


@dataclass(frozen=True)
class Envelope:
    """All segments of one subject, processed as a unit."""

    subject_id: str
    label: int
    segments: np.ndarray

    def __post_init__(self) -> None:
        segments = _frozen_matrix(self.segments)
        if segments.ndim != 2 or segments.shape[0] < 1 or segments.shape[1] < 1:
            raise DatasetFormatError(
                f"Envelope {self.subject_id} needs a non-empty segments x features matrix"
            )
        if not np.all(np.isfinite(segments)):
            raise DatasetFormatError(f"Envelope {self.subject_id} has non-finite values")
        if self.label not in (0, 1):
            raise DatasetFormatError(
                f"Envelope {self.subject_id} label must be 0 or 1, got {self.label}"
            )
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "label", int(self.label))

    @property
    def n_segments(self) -> int:
        return int(self.segments.shape[0])

    @property
    def dim(self) -> int:
        return int(self.segments.shape[1])

    def with_segments(self, segments: np.ndarray) -> "Envelope":
        """Same subject and label, new segment matrix."""
        return Envelope(self.subject_id, self.label, segments)


@dataclass(frozen=True)
class Dataset:
    """Envelopes in a stable subject order sharing one feature dimension."""

    envelopes: Tuple[Envelope, ...]

    def __post_init__(self) -> None:
        envelopes = tuple(self.envelopes)
        if not envelopes:
            raise DatasetFormatError("empty dataset")
        ids = [env.subject_id for env in envelopes]
        if len(set(ids)) != len(ids):
            raise DatasetFormatError("subject ids must be unique")
        dims = {env.dim for env in envelopes}
        if len(dims) != 1:
            raise DatasetFormatError(f"envelopes disagree on feature dimension: {sorted(dims)}")
        object.__setattr__(self, "envelopes", envelopes)

    @property
    def d(self) -> int:
        return self.envelopes[0].dim

    @property
    def n_subjects(self) -> int:
        return len(self.envelopes)

    @property
    def subject_ids(self) -> Tuple[str, ...]:
        return tuple(env.subject_id for env in self.envelopes)

    @property
    def labels(self) -> np.ndarray:
        return np.array([env.label for env in self.envelopes], dtype=int)

    @property
    def segment_counts(self) -> Tuple[int, ...]:
        return tuple(env.n_segments for env in self.envelopes)

    @property
    def is_uniform(self) -> bool:
        return len(set(self.segment_counts)) == 1

    @property
    def segment_count(self) -> int:
        """Shared segment count m; ragged datasets have none."""
        if not self.is_uniform:
            counts = sorted(set(self.segment_counts))
            raise RaggedEnvelopesError(f"ragged envelopes: segment counts {counts}")
        return self.segment_counts[0]

    @property
    def has_both_classes(self) -> bool:
        return len(set(self.labels.tolist())) == 2

    def envelope(self, subject_id: str) -> Envelope:
        for env in self.envelopes:
            if env.subject_id == subject_id:
                return env
        raise KeyError(subject_id)

    def subset(self, subject_ids: Iterable[str]) -> "Dataset":
        """Envelopes for the given ids, kept in dataset order."""
        wanted = set(subject_ids)
        missing = wanted - set(self.subject_ids)
        if missing:
            raise KeyError(f"unknown subject ids: {sorted(missing)}")
        return Dataset(tuple(env for env in self.envelopes if env.subject_id in wanted))

    def with_segments(self, segments: Sequence[np.ndarray]) -> "Dataset":
        """Replace every envelope's segments, keeping ids and labels."""
        if len(segments) != self.n_subjects:
            raise ValueError("one segment matrix per envelope is required")
        return Dataset(
            tuple(env.with_segments(seg) for env, seg in zip(self.envelopes, segments))
        )


@dataclass(frozen=True)
class StitchedDataset:
    """One row per subject: its segments concatenated in stored order.

    ``columns`` indexes the full stitched axis of length
    ``segment_count * dim``; a restricted dataset keeps only some of them.
    """

    rows: np.ndarray
    labels: np.ndarray
    subject_ids: Tuple[str, ...]
    segment_count: int
    dim: int
    columns: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        rows = _frozen_matrix(self.rows)
        labels = np.array(self.labels, dtype=int)
        labels.setflags(write=False)
        full = self.segment_count * self.dim
        columns = np.arange(full) if self.columns is None else np.asarray(self.columns)
        columns = columns.astype(int)
        columns.setflags(write=False)
        if rows.ndim != 2 or rows.shape[0] != labels.shape[0]:
            raise ValueError("stitched rows and labels disagree")
        if rows.shape[1] != columns.shape[0]:
            raise ValueError("stitched rows and column index disagree")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "columns", columns)

    @property
    def is_full(self) -> bool:
        return self.columns.shape[0] == self.segment_count * self.dim

    def restrict(self, columns: Sequence[int]) -> "StitchedDataset":
        """Keep only the given positions of the full stitched axis."""
        positions = {int(c): i for i, c in enumerate(self.columns)}
        try:
            local = [positions[int(c)] for c in columns]
        except KeyError as e:
            raise ValueError(f"column {e.args[0]} is not present in this dataset") from e
        return StitchedDataset(
            rows=self.rows[:, local],
            labels=self.labels,
            subject_ids=self.subject_ids,
            segment_count=self.segment_count,
            dim=self.dim,
            columns=np.asarray(columns, dtype=int),
        )


def transpose_envelope(env: Envelope) -> np.ndarray:
    """Features x segments view of one envelope (d x m)."""
    return np.array(env.segments.T, copy=True)


def stitch(ds: Dataset) -> StitchedDataset:
    """Concatenate each subject's segments into one row of length m*d."""
    if not ds.is_uniform:
        error_msg = f"ragged envelopes: segment counts {sorted(set(ds.segment_counts))}"
        logger.error(error_msg)
        raise RaggedEnvelopesError(error_msg)
    m = ds.segment_count
    rows = np.vstack([env.segments.reshape(1, m * ds.d) for env in ds.envelopes])
    return StitchedDataset(
        rows=rows,
        labels=ds.labels,
        subject_ids=ds.subject_ids,
        segment_count=m,
        dim=ds.d,
    )


def unstitch(stitched: StitchedDataset) -> Dataset:
    """Inverse of :func:`stitch` for an unrestricted stitched dataset."""
    if not stitched.is_full:
        raise ValueError("cannot unstitch a column-restricted dataset")
    m, d = stitched.segment_count, stitched.dim
    return Dataset(
        tuple(
            Envelope(sid, int(label), row.reshape(m, d))
            for sid, label, row in zip(stitched.subject_ids, stitched.labels, stitched.rows)
        )
    )


def trim_to_common(ds: Dataset) -> Tuple[Dataset, int]:
    """Keep the first k segments of every envelope, k = smallest count."""
    common = min(ds.segment_counts)
    if ds.is_uniform:
        return ds, common
    logger.warning(
        f"Trimming ragged envelopes {sorted(set(ds.segment_counts))} to {common} segments"
    )
    return ds.with_segments([env.segments[:common] for env in ds.envelopes]), common


def _read_table(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(
            path,
            header=None,
            dtype=str,
            na_filter=False,
            skip_blank_lines=True,
            skipinitialspace=True,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError as e:
        raise DatasetFormatError(f"empty dataset: {path}") from e
    except pd.errors.ParserError as e:
        raise DatasetFormatError(f"ragged rows in {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise DatasetFormatError(f"{path} is not UTF-8 text: {e.reason} at byte {e.start}") from e

    if frame.isna().to_numpy().any():
        line = int(np.argwhere(frame.isna().to_numpy())[0][0]) + 1
        raise DatasetFormatError(f"ragged rows in {path}: row {line} is short")
    return frame


def _numeric(frame: pd.DataFrame, path: Path, first_line: int) -> np.ndarray:
    stripped = frame.apply(lambda col: col.str.strip())
    try:
        # astype parses with float(), which round-trips 17-digit text exactly
        matrix = stripped.astype(float).to_numpy()
    except ValueError:
        coerced = stripped.apply(lambda col: pd.to_numeric(col, errors="coerce"))
        matrix = coerced.to_numpy(dtype=float)
    bad = np.argwhere(~np.isfinite(matrix))
    if bad.size:
        row, col = bad[0]
        cell = frame.iat[row, col]
        raise DatasetFormatError(
            f"non-numeric feature cell {cell!r} at line {first_line + row}, "
            f"column {frame.columns[col] + 1} in {path}"
        )
    return matrix


def load_dataset(
    path: Union[str, Path],
    schema: Union[str, DatasetSchema] = DatasetSchema.CANONICAL_CSV,
    drop_trailing: int = 0,
) -> Dataset:
    """Read a segment table and group its rows into subject envelopes.

    Args:
        path: CSV file, one row per segment
        schema: ``canonical-csv`` (header ``subject_id,label,f1..fd``) or
            ``uci-sakar-like`` (id first, class last, features between)
        drop_trailing: interior columns just before the class column that are
            scores rather than features (uci-sakar-like only)

    Returns:
        Dataset with envelopes in first-appearance order
    """
    path = Path(path)
    schema = DatasetSchema(schema)
    if not path.is_file():
        error_msg = f"dataset file not found: {path}"
        logger.error(error_msg)
        raise DatasetFormatError(error_msg)

    frame = _read_table(path)
    first_line = 1

    if schema is DatasetSchema.CANONICAL_CSV:
        header = tuple(str(c).strip() for c in frame.iloc[0, :2])
        if header != CANONICAL_HEADER:
            raise DatasetFormatError(
                f"canonical CSV must start with header subject_id,label,...; got {header}"
            )
        frame = frame.iloc[1:].reset_index(drop=True)
        first_line = 2
        if frame.shape[1] < 3:
            raise DatasetFormatError("canonical CSV needs at least one feature column")
        ids = frame[0]
        label_col = frame[[1]]
        features = frame[list(frame.columns[2:])]
    else:
        last = frame.iat[0, frame.shape[1] - 1]
        if pd.isna(pd.to_numeric(str(last).strip(), errors="coerce")):
            frame = frame.iloc[1:].reset_index(drop=True)
            first_line = 2
        n_features = frame.shape[1] - 2 - drop_trailing
        if drop_trailing < 0 or n_features < 1:
            raise DatasetFormatError(
                f"uci-sakar-like table with {frame.shape[1]} columns leaves no "
                f"features after drop_trailing={drop_trailing}"
            )
        ids = frame[0]
        label_col = frame[[frame.columns[-1]]]
        features = frame[list(frame.columns[1 : 1 + n_features])]

    if frame.empty:
        raise DatasetFormatError(f"empty dataset: {path}")

    values = _numeric(features, path, first_line)
    raw_labels = _numeric(label_col, path, first_line)[:, 0]
    if not np.all(np.isin(raw_labels, (0.0, 1.0))):
        bad = raw_labels[~np.isin(raw_labels, (0.0, 1.0))][0]
        raise DatasetFormatError(f"class labels must be 0 or 1, got {bad:g}")
    labels = raw_labels.astype(int)
    ids = ids.astype(str).str.strip().to_numpy()

    envelopes: List[Envelope] = []
    for subject_id in pd.unique(ids):
        mask = ids == subject_id
        subject_labels = set(labels[mask].tolist())
        if len(subject_labels) > 1:
            error_msg = f"conflicting labels for subject {subject_id}"
            logger.error(error_msg)
            raise ConflictingLabelsError(error_msg)
        envelopes.append(Envelope(str(subject_id), subject_labels.pop(), values[mask]))

    ds = Dataset(tuple(envelopes))
    logger.info(
        f"Loaded {path.name}: {ds.n_subjects} subjects, "
        f"segments per subject {sorted(set(ds.segment_counts))}, d={ds.d}"
    )
    return ds


def write_dataset(ds: Dataset, path: Union[str, Path]) -> Path:
    """Write a dataset in the canonical CSV layout with round-trip precision."""
    path = Path(path)
    columns = ["subject_id", "label"] + [f"f{j + 1}" for j in range(ds.d)]
    records: List[list] = []
    for env in ds.envelopes:
        for segment in env.segments:
            records.append([env.subject_id, env.label, *segment.tolist()])
    frame = pd.DataFrame.from_records(records, columns=columns)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def segment_rows(
    ds: Dataset, subject_ids: Optional[Sequence[str]] = None
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw segments stacked as rows with their subject labels and owners."""
    envelopes = ds.envelopes if subject_ids is None else ds.subset(subject_ids).envelopes
    rows = np.vstack([env.segments for env in envelopes])
    labels = np.concatenate([np.full(env.n_segments, env.label) for env in envelopes])
    owners = np.concatenate(
        [np.full(env.n_segments, i) for i, env in enumerate(envelopes)]
    )
    return rows, labels.astype(int), owners.astype(int)
