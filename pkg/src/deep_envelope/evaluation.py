"""Cross-validation, metrics and the end-to-end experiment runner."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import confusion_matrix
from sklearn.model_selection import StratifiedKFold, train_test_split

from .classifiers import ModelSpec, predict, train
from .dataset import Dataset, segment_rows, stitch, trim_to_common
from .deep_space import (
    DeepSpace,
    KeepRule,
    SelectionResult,
    apply_selection,
    build,
    layer_counts,
    select_features,
    transform,
)
from .errors import DeepEnvelopeError, FoldError, PipelineError, RaggedEnvelopesError
from .fcm import ClusterCache, FcmConfig
from .fusion import FusionOutcome, LabelMatrix, fit_fusion

if TYPE_CHECKING:
    from .config import RunConfig

logger = logging.getLogger(__name__)

MAX_REDRAWS = 100


class CvScheme(str, Enum):
    """Subject-level cross-validation schemes."""

    LOSO = "loso"
    HOLDOUT = "holdout"
    KFOLD = "kfold"


@dataclass(frozen=True)
class Fold:
    index: int
    train_ids: Tuple[str, ...]
    test_ids: Tuple[str, ...]


@dataclass(frozen=True)
class Folds:
    """Train/test splits of subject ids; ids keep dataset order inside each split."""

    folds: Tuple[Fold, ...]
    scheme: CvScheme
    seed: int

    def __len__(self) -> int:
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)


def _split(ids: Sequence[str], test: set, index: int) -> Fold:
    return Fold(
        index,
        tuple(s for s in ids if s not in test),
        tuple(s for s in ids if s in test),
    )


def _both_classes(fold: Fold, label_of: Dict[str, int]) -> bool:
    return len({label_of[s] for s in fold.train_ids}) == 2


def _draw(
    ids: Sequence[str],
    labels: np.ndarray,
    scheme: CvScheme,
    n_test: int,
    k: int,
    seed: int,
) -> Tuple[Fold, ...]:
    if scheme is CvScheme.HOLDOUT:
        _, test = train_test_split(
            list(ids), test_size=n_test, stratify=labels, random_state=seed
        )
        return (_split(ids, set(test), 0),)
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    return tuple(
        _split(ids, {ids[i] for i in test}, f)
        for f, (_, test) in enumerate(splitter.split(np.zeros((len(ids), 1)), labels))
    )


def make_folds(
    ds: Dataset,
    scheme: CvScheme = CvScheme.LOSO,
    holdout_fraction: float = 0.3,
    k: int = 10,
    seed: int = 0,
) -> Folds:
    """Subject folds whose training side always holds both classes.

    Holdout and kfold splits are stratified by class and seeded; a draw that
    leaves a training side single-class is redrawn with the next seed, up to
    ``MAX_REDRAWS`` times. The holdout test side holds
    ``floor(holdout_fraction * n)`` subjects.
    """
    scheme = CvScheme(scheme)
    ids = ds.subject_ids
    n = len(ids)
    label_of = dict(zip(ids, ds.labels.tolist()))
    if n < 2:
        raise FoldError(f"cannot satisfy class presence: {n} subject(s)")

    if scheme is CvScheme.LOSO:
        folds = tuple(_split(ids, {s}, i) for i, s in enumerate(ids))
        bad = [f.test_ids[0] for f in folds if not _both_classes(f, label_of)]
        if bad:
            error_msg = f"cannot satisfy class presence: leaving out {bad} empties a class"
            logger.error(error_msg)
            raise FoldError(error_msg)
        return Folds(folds, scheme, seed)

    n_test = math.floor(holdout_fraction * n + 1e-9)
    if scheme is CvScheme.HOLDOUT:
        if not 0.0 < holdout_fraction < 1.0 or n_test < 1:
            raise FoldError(f"holdout fraction {holdout_fraction} leaves no test subjects")
    elif not 2 <= k <= n:
        raise FoldError(f"kfold needs 2 <= k <= {n}, got k={k}")

    for attempt in range(MAX_REDRAWS):
        try:
            folds = _draw(ids, ds.labels, scheme, n_test, k, seed + attempt)
        except ValueError as e:
            error_msg = f"cannot satisfy class presence: {scheme.value} split failed: {e}"
            logger.error(error_msg)
            raise FoldError(error_msg) from e
        if all(_both_classes(f, label_of) for f in folds):
            if attempt:
                logger.info(f"Fold draw succeeded after {attempt} redraw(s)")
            return Folds(folds, scheme, seed + attempt)

    error_msg = f"cannot satisfy class presence after {MAX_REDRAWS} {scheme.value} draws"
    logger.error(error_msg)
    raise FoldError(error_msg)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_predictions(cls, y_true: np.ndarray, y_pred: np.ndarray) -> "ConfusionCounts":
        tn, fp, fn, tp = confusion_matrix(
            np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int), labels=[0, 1]
        ).ravel()
        return cls(tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    """ACC, SEN and SPE in percent, MCC in [-1, 1]; ``undefined`` names zero-denominator metrics."""

    acc: float
    sen: float
    spe: float
    mcc: float
    counts: ConfusionCounts
    undefined: Tuple[str, ...] = ()


def metrics(c: ConfusionCounts) -> Metrics:
    """Accuracy, sensitivity, specificity and Matthews correlation from counts."""
    if c.total <= 0:
        raise ValueError("metrics need at least one evaluated subject")
    undefined = []

    def ratio(num: int, den: int, name: str) -> float:
        if den == 0:
            undefined.append(name)
            return 0.0
        return 100.0 * num / den

    acc = ratio(c.tp + c.tn, c.total, "acc")
    sen = ratio(c.tp, c.tp + c.fn, "sen")
    spe = ratio(c.tn, c.fp + c.tn, "spe")
    den = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if den == 0:
        undefined.append("mcc")
        mcc = 0.0
    else:
        mcc = (c.tp * c.tn - c.fp * c.fn) / math.sqrt(den)
    return Metrics(acc, sen, spe, mcc, c, tuple(undefined))


def format_percent(value: float, places: int = 2) -> str:
    """Fixed-point text with half-up rounding (``12.345`` -> ``12.35``)."""
    quantum = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP))


@dataclass
class FoldOutcome:
    """Per-layer test predictions of one fold plus what the training side produced."""

    fold: Fold
    layer_names: Tuple[str, ...]
    predictions: Dict[str, np.ndarray]
    space: DeepSpace
    selections: Tuple[SelectionResult, ...]
    training_accuracy: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ReferenceFit:
    """Deep space and selections fit on every subject; feeds the weight map and markers."""

    space: DeepSpace
    selections: Tuple[SelectionResult, ...]

    @property
    def final_selection(self) -> SelectionResult:
        return self.selections[-1]


@dataclass
class ExperimentResult:
    config: "RunConfig"
    folds: Folds
    subject_ids: Tuple[str, ...]
    y: np.ndarray
    labels: LabelMatrix
    fusion: FusionOutcome
    fused_columns: Tuple[str, ...]
    layer_metrics: Dict[str, Metrics]
    fused_metrics: Metrics
    baseline_predictions: np.ndarray
    baseline_metrics: Metrics
    outcomes: Tuple[FoldOutcome, ...]
    reference: ReferenceFit
    layer_counts: Tuple[int, ...]


class _Stage:
    """Remembers the current stage name so failures can say where they happened."""

    def __init__(self, fold: int):
        self.fold = fold
        self.name = "start"

    def wrap(self, error: DeepEnvelopeError) -> PipelineError:
        return PipelineError(f"fold {self.fold} stage {self.name}: {error}", error)


def fit_selections(
    space: DeepSpace, keep_rule: KeepRule
) -> Tuple[SelectionResult, ...]:
    return tuple(select_features(stitch(layer.dataset), keep_rule) for layer in space.layers)


def _majority_by_owner(votes: np.ndarray, owners: np.ndarray, n_owners: int) -> np.ndarray:
    # per-subject vote over segments; a tie is class 0
    positive = np.bincount(owners, weights=votes, minlength=n_owners)
    total = np.bincount(owners, minlength=n_owners)
    return (2 * positive > total).astype(int)


def baseline_fold(ds: Dataset, fold: Fold, spec: ModelSpec) -> np.ndarray:
    """Classifier on raw segments, each test subject labeled by majority vote."""
    X_tr, y_tr, _ = segment_rows(ds, fold.train_ids)
    X_te, _, owners = segment_rows(ds, fold.test_ids)
    model = train(spec, X_tr, y_tr)
    return _majority_by_owner(predict(model, X_te), owners, len(fold.test_ids))


def run_fold(
    ds: Dataset,
    fold: Fold,
    cfg: "RunConfig",
    cache: Optional[ClusterCache] = None,
) -> FoldOutcome:
    """Fit everything on the training subjects and predict the held-out ones per layer."""
    stage = _Stage(fold.index)
    fcm_cfg: FcmConfig = cfg.fcm_config()
    spec = cfg.model_spec()
    try:
        train_ds = ds.subset(fold.train_ids)
        test_ds = ds.subset(fold.test_ids)

        stage.name = "build"
        space = build(
            train_ds,
            cfg.initial_cutoff,
            cfg.deep_layers,
            cfg.intra_prune,
            fcm_cfg,
            trim_ragged=cfg.trim_ragged,
            cache=cache,
        )
        stage.name = "transform"
        test_space = transform(test_ds, space.provenance, fcm_cfg, cache=cache)

        predictions: Dict[str, np.ndarray] = {}
        training_accuracy: Dict[str, float] = {}
        selections = []
        for layer, test_layer in zip(space.layers, test_space.layers):
            stage.name = f"select:{layer.name}"
            selection = select_features(stitch(layer.dataset), cfg.keep_rule)
            test_rows = apply_selection(
                stitch(test_layer.dataset), selection.kept_feature_indices
            )
            selections.append(selection)

            stage.name = f"train:{layer.name}"
            model = train(spec, selection.reduced.rows, selection.reduced.labels)
            training_accuracy[layer.name] = model.training_accuracy

            stage.name = f"predict:{layer.name}"
            predictions[layer.name] = predict(model, test_rows.rows)
    except DeepEnvelopeError as e:
        error = stage.wrap(e)
        logger.error(str(error))
        raise error from e

    logger.info(
        f"Fold {fold.index}: {len(fold.train_ids)} train / {len(fold.test_ids)} test "
        f"subjects, {len(space.layers)} layers"
    )
    return FoldOutcome(
        fold,
        tuple(space.layer_names),
        predictions,
        space,
        tuple(selections),
        training_accuracy,
    )


def run_baseline(
    ds: Dataset, folds: Folds, spec: ModelSpec
) -> Tuple[Tuple[str, ...], np.ndarray]:
    """Raw-segment majority-vote predictions for every tested subject, dataset order."""
    by_subject: Dict[str, int] = {}
    for fold in folds:
        stage = _Stage(fold.index)
        stage.name = "baseline"
        try:
            votes = baseline_fold(ds, fold, spec)
        except DeepEnvelopeError as e:
            raise stage.wrap(e) from e
        for sid, label in zip(fold.test_ids, votes):
            by_subject[sid] = int(label)
    tested = tuple(s for s in ds.subject_ids if s in by_subject)
    return tested, np.array([by_subject[s] for s in tested], dtype=int)


def run_experiment(
    ds: Dataset, cfg: "RunConfig", cache: Optional[ClusterCache] = None
) -> ExperimentResult:
    """Cross-validate the deep space, fuse per-layer labels and fit the reference space.

    Folds may run on ``cfg.workers`` threads; results are gathered by subject id
    so the outcome does not depend on completion order.
    """
    if not ds.is_uniform:
        if not cfg.trim_ragged:
            error_msg = f"ragged envelopes: segment counts {sorted(set(ds.segment_counts))}"
            logger.error(error_msg)
            raise RaggedEnvelopesError(error_msg)
        ds, _ = trim_to_common(ds)
    counts = layer_counts(
        ds.segment_count, cfg.initial_cutoff, cfg.deep_layers, cfg.intra_prune
    )
    folds = make_folds(ds, cfg.cv_scheme, cfg.holdout_fraction, cfg.kfold_k, cfg.seed)
    cache = cache if cache is not None else ClusterCache()
    logger.info(
        f"Running {len(folds)} {folds.scheme.value} fold(s) over {ds.n_subjects} "
        f"subjects with {cfg.workers} worker(s); layer counts {counts}"
    )

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = tuple(pool.map(lambda f: run_fold(ds, f, cfg, cache), folds))
    else:
        outcomes = tuple(run_fold(ds, f, cfg, cache) for f in folds)

    layer_names = outcomes[0].layer_names
    per_subject: Dict[str, List[int]] = {}
    for outcome in outcomes:
        for row, sid in enumerate(outcome.fold.test_ids):
            per_subject[sid] = [int(outcome.predictions[name][row]) for name in layer_names]

    tested = tuple(s for s in ds.subject_ids if s in per_subject)
    y = ds.subset(tested).labels
    labels = LabelMatrix(
        np.array([per_subject[s] for s in tested], dtype=int), layer_names, tested
    )
    fused_columns = layer_names if cfg.fuse_original else layer_names[1:]
    fusion = fit_fusion(
        labels.select(fused_columns),
        y,
        cfg.fusion_mode,
        cfg.fusion_lambda,
        cfg.fusion_lambda_grid,
    )

    layer_metrics = {
        name: metrics(ConfusionCounts.from_predictions(y, labels.column(name)))
        for name in layer_names
    }
    fused_metrics = metrics(ConfusionCounts.from_predictions(y, fusion.predictions))
    baseline_ids, baseline = run_baseline(ds, folds, cfg.model_spec())
    assert baseline_ids == tested
    baseline_metrics = metrics(ConfusionCounts.from_predictions(y, baseline))

    stage = _Stage(-1)
    stage.name = "reference"
    try:
        space = build(
            ds,
            cfg.initial_cutoff,
            cfg.deep_layers,
            cfg.intra_prune,
            cfg.fcm_config(),
            trim_ragged=cfg.trim_ragged,
            cache=cache,
        )
        reference = ReferenceFit(space, fit_selections(space, cfg.keep_rule))
    except DeepEnvelopeError as e:
        raise stage.wrap(e) from e

    logger.info(
        f"Fused ACC {format_percent(fused_metrics.acc)} vs baseline "
        f"{format_percent(baseline_metrics.acc)} ({fusion.mode.value} fusion, "
        f"{cache.hits} cluster cache hits)"
    )
    return ExperimentResult(
        config=cfg,
        folds=folds,
        subject_ids=tested,
        y=y,
        labels=labels,
        fusion=fusion,
        fused_columns=tuple(fused_columns),
        layer_metrics=layer_metrics,
        fused_metrics=fused_metrics,
        baseline_predictions=baseline,
        baseline_metrics=baseline_metrics,
        outcomes=outcomes,
        reference=reference,
        layer_counts=tuple(counts),
    )
