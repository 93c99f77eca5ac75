"""Deep sample space: layers of ever fewer prototype segments per subject.

Layer 0 is the pruned original data. Each further layer optionally prunes a
few more segment positions, then clusters every envelope into one prototype
fewer than it holds. Feature selection runs on each layer's stitched form.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .dataset import Dataset, StitchedDataset
from .errors import CutoffError, LayerExhaustedError, SingleClassError
from .fcm import ClusterCache, ClusterTrace, FcmConfig, cluster
from .pruning import apply_prune, prune
from .relief import LabeledRows, WeightOrigin, WeightVector, relief_weights

logger = logging.getLogger(__name__)


class KeepRule(BaseModel):
    """How many stitched features survive selection: a fraction or an absolute count."""

    model_config = ConfigDict(frozen=True)

    fraction: Optional[float] = Field(None, gt=0.0, le=1.0)
    count: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _exactly_one(self) -> "KeepRule":
        if (self.fraction is None) == (self.count is None):
            raise ValueError("keep rule needs exactly one of fraction or count")
        return self

    @classmethod
    def parse(cls, text: str) -> "KeepRule":
        """Read ``fraction:<f>`` or ``count:<k>``."""
        kind, _, value = str(text).strip().partition(":")
        if kind == "fraction":
            return cls(fraction=float(value))
        if kind == "count":
            return cls(count=int(value))
        raise ValueError(f"keep rule must be fraction:<f> or count:<k>, got {text!r}")

    def n_keep(self, total: int) -> int:
        if self.count is not None:
            return min(self.count, total)
        # guard against 0.3 * 10 = 3.0000000000000004
        return max(1, min(total, math.ceil(self.fraction * total - 1e-9)))

    def __str__(self) -> str:
        if self.count is not None:
            return f"count:{self.count}"
        return f"fraction:{self.fraction:g}"


@dataclass(frozen=True)
class Layer:
    """One level of the deep space; every envelope holds ``per_subject_count`` segments."""

    index: int
    dataset: Dataset
    per_subject_count: int

    @property
    def name(self) -> str:
        return "original" if self.index == 0 else f"layer{self.index}"


@dataclass(frozen=True)
class LayerProvenance:
    """How a layer was produced: prune positions, their weights and cluster traces."""

    index: int
    segment_count_before: int
    removed_positions: Tuple[int, ...]
    prune_weights: Optional[WeightVector] = None
    traces: Dict[str, ClusterTrace] = field(default_factory=dict)
    trimmed_to: Optional[int] = None


@dataclass(frozen=True)
class DeepSpace:
    """Layers 0..L over one set of subjects plus the provenance of each."""

    layers: Tuple[Layer, ...]
    provenance: Tuple[LayerProvenance, ...]

    @property
    def subject_ids(self) -> Tuple[str, ...]:
        return self.layers[0].dataset.subject_ids

    @property
    def counts(self) -> List[int]:
        return [layer.per_subject_count for layer in self.layers]

    @property
    def layer_names(self) -> List[str]:
        return [layer.name for layer in self.layers]


@dataclass(frozen=True)
class SelectionResult:
    """Stitched features kept by Relief ranking for one layer."""

    kept_feature_indices: Tuple[int, ...]
    weights: WeightVector
    reduced: StitchedDataset


def layer_counts(
    m: int, initial_cutoff: int, deep_layers: int, intra_prune: int
) -> List[int]:
    """Per-subject segment counts of layers 0..deep_layers, validated up front."""
    if initial_cutoff < 0 or deep_layers < 0 or intra_prune < 0:
        raise ValueError("cutoff, deep_layers and intra_prune must be non-negative")
    if initial_cutoff >= m:
        error_msg = (
            f"cutoff exhausts envelope: initial_cutoff={initial_cutoff} "
            f"with {m} segments per subject"
        )
        logger.error(error_msg)
        raise CutoffError(error_msg)
    counts = [m - initial_cutoff]
    for i in range(deep_layers):
        remaining = counts[-1] - intra_prune
        if remaining < 2:
            error_msg = (
                f"layer exhausted: layer {i + 1} needs at least 2 segments after "
                f"pruning {intra_prune}, layer {i} has {counts[-1]}"
            )
            logger.error(error_msg)
            raise LayerExhaustedError(error_msg)
        counts.append(remaining - 1)
    return counts


def _cluster_layer(
    ds: Dataset,
    index: int,
    cfg: FcmConfig,
    cache: Optional[ClusterCache],
) -> Tuple[Dataset, Dict[str, ClusterTrace]]:
    run = cache.cluster if cache is not None else cluster
    prototypes = []
    traces: Dict[str, ClusterTrace] = {}
    for env in ds.envelopes:
        proto, _, trace = run(env.segments, env.n_segments - 1, cfg)
        prototypes.append(proto.p)
        traces[env.subject_id] = trace
        logger.debug(
            f"Layer {index} subject {env.subject_id}: {trace.iterations} iterations, "
            f"objective {trace.final_objective:.6g}"
        )
    return ds.with_segments(prototypes), traces


def next_layer(
    layer: Layer,
    intra_prune: int,
    cfg: FcmConfig,
    removed_positions: Optional[Sequence[int]] = None,
    cache: Optional[ClusterCache] = None,
) -> Tuple[Layer, LayerProvenance]:
    """Prune ``intra_prune`` positions, then cluster each envelope to one prototype fewer.

    With ``removed_positions`` given the prune is frozen (no weights are fit),
    which is how unseen subjects follow a fitted space.
    """
    k = layer.per_subject_count
    if k - intra_prune < 2:
        error_msg = (
            f"layer exhausted: {k} segments per subject cannot lose {intra_prune} "
            f"and still cluster to at least one prototype"
        )
        logger.error(error_msg)
        raise LayerExhaustedError(error_msg)

    weights: Optional[WeightVector] = None
    if removed_positions is not None:
        removed = tuple(int(j) for j in removed_positions)
        pruned = apply_prune(layer.dataset, removed, k) if removed else layer.dataset
    elif intra_prune > 0:
        result = prune(layer.dataset, intra_prune)
        removed, weights, pruned = result.removed_positions, result.weights, result.dataset
    else:
        removed, pruned = (), layer.dataset

    index = layer.index + 1
    clustered, traces = _cluster_layer(pruned, index, cfg, cache)
    remaining = k - len(removed)
    new_layer = Layer(index, clustered, remaining - 1)
    provenance = LayerProvenance(index, k, removed, weights, traces)
    return new_layer, provenance


def build(
    ds: Dataset,
    initial_cutoff: int,
    deep_layers: int,
    intra_prune: int,
    cfg: FcmConfig,
    trim_ragged: bool = True,
    cache: Optional[ClusterCache] = None,
) -> DeepSpace:
    """Fit the deep space on ``ds``: initial prune, then ``deep_layers`` cluster layers."""
    m = min(ds.segment_counts) if trim_ragged else ds.segment_count
    counts = layer_counts(m, initial_cutoff, deep_layers, intra_prune)

    pruned = prune(ds, initial_cutoff, trim_ragged=trim_ragged)
    layer = Layer(0, pruned.dataset, counts[0])
    layers = [layer]
    provenance = [
        LayerProvenance(
            index=0,
            segment_count_before=pruned.segment_count,
            removed_positions=pruned.removed_positions,
            prune_weights=pruned.weights,
            trimmed_to=pruned.trimmed_to,
        )
    ]
    for _ in range(deep_layers):
        layer, prov = next_layer(layer, intra_prune, cfg, cache=cache)
        layers.append(layer)
        provenance.append(prov)

    logger.info(f"Built deep space over {ds.n_subjects} subjects: counts {counts}")
    return DeepSpace(tuple(layers), tuple(provenance))


def transform(
    ds: Dataset,
    provenance: Sequence[LayerProvenance],
    cfg: FcmConfig,
    cache: Optional[ClusterCache] = None,
) -> DeepSpace:
    """Push unseen subjects through a fitted space using its frozen prune positions."""
    first = provenance[0]
    base = apply_prune(ds, first.removed_positions, first.segment_count_before)
    layer = Layer(0, base, first.segment_count_before - len(first.removed_positions))
    layers = [layer]
    produced = [LayerProvenance(0, first.segment_count_before, first.removed_positions)]
    for prov in provenance[1:]:
        layer, step = next_layer(
            layer,
            len(prov.removed_positions),
            cfg,
            removed_positions=prov.removed_positions,
            cache=cache,
        )
        layers.append(layer)
        produced.append(step)
    return DeepSpace(tuple(layers), tuple(produced))


def select_features(stitched: StitchedDataset, keep_rule: KeepRule) -> SelectionResult:
    """Relief-rank the stitched axis and keep the top features, ties to the lower index."""
    if len(set(stitched.labels.tolist())) < 2:
        error_msg = f"single-class dataset: {len(stitched.labels)} stitched rows of one class"
        logger.error(error_msg)
        raise SingleClassError(error_msg)

    weights = relief_weights(
        LabeledRows(stitched.rows, stitched.labels), WeightOrigin.STITCHED_FEATURE
    )
    total = len(weights)
    n_keep = keep_rule.n_keep(total)
    order = np.lexsort((np.arange(total), -weights.weights))
    local = sorted(int(i) for i in order[:n_keep])
    kept = tuple(int(stitched.columns[i]) for i in local)
    return SelectionResult(kept, weights, stitched.restrict(kept))


def apply_selection(stitched: StitchedDataset, kept: Sequence[int]) -> StitchedDataset:
    """Restrict unseen subjects to the features kept on the training side."""
    return stitched.restrict(kept)
