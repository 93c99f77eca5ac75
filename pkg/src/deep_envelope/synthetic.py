"""Seeded synthetic envelopes with known signal and noise segment positions."""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .dataset import Dataset, Envelope

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticData:
    dataset: Dataset
    noise_positions: Tuple[int, ...]
    signal_features: Tuple[int, ...]


def make_synthetic(
    n_subjects: int = 40,
    segments: int = 20,
    features: int = 10,
    signal_positions: int = 12,
    signal_features: Optional[int] = None,
    shift: float = 0.4,
    subject_sd: float = 0.2,
    seed: int = 7,
) -> SyntheticData:
    """Two balanced classes of subjects sharing one layout of segment positions.

    At signal positions the first ``signal_features`` features sit at ``-shift``
    for class 0 and ``+shift`` for class 1. Noise positions ignore the label and
    sit at ``+shift`` for every subject, so class-0 envelopes carry segments that
    look like class 1 until those positions are pruned. All cells get unit
    Gaussian noise plus a per-subject offset. ``signal_features`` defaults to
    half the features, rounded up.
    """
    if signal_features is None:
        signal_features = (features + 1) // 2
    if not 0 < signal_positions <= segments:
        raise ValueError(f"signal_positions must be in 1..{segments}")
    if not 0 < signal_features <= features:
        raise ValueError(f"signal_features must be in 1..{features}")
    if n_subjects < 4:
        raise ValueError("need at least 4 subjects for two classes")

    rng = np.random.default_rng(seed)
    n_pos = n_subjects // 2
    labels = rng.permutation(np.repeat([0, 1], [n_subjects - n_pos, n_pos]))
    noise = np.sort(rng.permutation(segments)[: segments - signal_positions])
    is_noise = np.zeros(segments, dtype=bool)
    is_noise[noise] = True

    width = len(str(n_subjects))
    envelopes = []
    for i, label in enumerate(labels):
        offset = rng.normal(0.0, subject_sd, size=features)
        cells = rng.normal(0.0, 1.0, size=(segments, features)) + offset
        cells[~is_noise, :signal_features] += shift if label == 1 else -shift
        cells[is_noise, :signal_features] += shift
        envelopes.append(Envelope(f"S{i + 1:0{width}d}", int(label), cells))

    logger.info(
        f"Synthesized {n_subjects} subjects x {segments} segments x {features} "
        f"features, noise positions {noise.tolist()}"
    )
    return SyntheticData(
        Dataset(tuple(envelopes)),
        tuple(int(j) for j in noise),
        tuple(range(signal_features)),
    )
