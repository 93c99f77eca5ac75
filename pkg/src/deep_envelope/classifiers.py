"""Per-layer classifiers: linear SVM (SMO), K nearest neighbors, extreme learning machine."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import linalg
from scipy.spatial.distance import cdist
from scipy.special import expit
from sklearn.preprocessing import StandardScaler

from .errors import DimensionMismatchError, SingleClassError

logger = logging.getLogger(__name__)


class ModelKind(str, Enum):
    """Available classifier families."""

    LINEAR_SVM = "linear_svm"
    KNN = "knn"
    ELM = "elm"

    @classmethod
    def parse(cls, value: Union[str, "ModelKind"]) -> "ModelKind":
        """Accept the short command-line spelling ``svm`` as well."""
        if isinstance(value, ModelKind):
            return value
        text = str(value).strip().lower()
        return cls.LINEAR_SVM if text == "svm" else cls(text)


class ModelSpec(BaseModel):
    """Classifier choice and its hyperparameters."""

    model_config = ConfigDict(frozen=True)

    kind: ModelKind = ModelKind.LINEAR_SVM
    knn_k: int = Field(3, ge=1)
    elm_hidden: int = Field(50, ge=1)
    svm_c: float = Field(1.0, gt=0.0)
    svm_tol: float = Field(1e-4, gt=0.0)
    elm_ridge: float = Field(1e-6, gt=0.0)
    seed: int = Field(0, ge=0)
    standardize: bool = True

    @field_validator("kind", mode="before")
    @classmethod
    def _parse_kind(cls, value):
        return ModelKind.parse(value)

    @field_validator("knn_k")
    @classmethod
    def _odd_k(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"knn_k must be odd for binary voting, got {value}")
        return value


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-score fit on training rows; constant columns are only centered."""

    scaler: StandardScaler

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        return cls(StandardScaler().fit(np.asarray(X, dtype=float)))

    @property
    def mean(self) -> np.ndarray:
        return self.scaler.mean_

    @property
    def scale(self) -> np.ndarray:
        return self.scaler.scale_

    def apply(self, X: np.ndarray) -> np.ndarray:
        return self.scaler.transform(np.asarray(X, dtype=float))


@dataclass(frozen=True)
class SvmTrace:
    """Dual objective after each SMO step and the final KKT gap."""

    dual_objective: tuple
    kkt_gap: float
    steps: int
    converged: bool


class LinearSVM:
    """Soft-margin linear SVM trained by SMO on the dual.

    Working pairs are chosen by maximal violation; ties go to the lowest index.
    Training stops once the KKT gap falls below ``tol``.
    """

    def __init__(self, C: float = 1.0, tol: float = 1e-4, max_steps: int = 100_000):
        self.C = C
        self.tol = tol
        self.max_steps = max_steps
        self.w: Optional[np.ndarray] = None
        self.b = 0.0
        self.alpha: Optional[np.ndarray] = None
        self.trace: Optional[SvmTrace] = None

    def fit(self, X: np.ndarray, y01: np.ndarray) -> "LinearSVM":
        X = np.asarray(X, dtype=float)
        y = np.where(np.asarray(y01) == 1, 1.0, -1.0)
        n = X.shape[0]
        K = X @ X.T
        C = self.C

        alpha = np.zeros(n)
        grad = -np.ones(n)
        history: List[float] = []
        gap = np.inf
        converged = False

        for step in range(self.max_steps):
            up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
            low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
            score = -y * grad
            i = int(np.argmax(np.where(up, score, -np.inf)))
            j = int(np.argmin(np.where(low, score, np.inf)))
            gap = float(score[i] - score[j]) if up.any() and low.any() else 0.0
            if gap < self.tol:
                converged = True
                break

            curvature = K[i, i] + K[j, j] - 2.0 * K[i, j]
            t = gap / max(curvature, 1e-12)
            t = min(t, C - alpha[i] if y[i] > 0 else alpha[i])
            t = min(t, alpha[j] if y[j] > 0 else C - alpha[j])

            alpha[i] = min(max(alpha[i] + y[i] * t, 0.0), C)
            alpha[j] = min(max(alpha[j] - y[j] * t, 0.0), C)
            grad += t * y * (K[:, i] - K[:, j])
            history.append(float(0.5 * np.sum(alpha) - 0.5 * alpha @ grad))

        if not converged:
            logger.warning(
                f"SMO stopped after {self.max_steps} steps with KKT gap {gap:.3g}"
            )

        self.alpha = alpha
        self.w = (alpha * y) @ X
        self.b = -self._rho(alpha, y, grad)
        self.trace = SvmTrace(tuple(history), float(gap), len(history), converged)
        return self

    def _rho(self, alpha: np.ndarray, y: np.ndarray, grad: np.ndarray) -> float:
        yg = y * grad
        free = (alpha > 0) & (alpha < self.C)
        if free.any():
            return float(yg[free].mean())
        at_upper = alpha >= self.C
        at_lower = ~at_upper
        ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        if np.isinf(ub) or np.isinf(lb):
            return float(ub if np.isfinite(ub) else lb if np.isfinite(lb) else 0.0)
        return float((ub + lb) / 2.0)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.w + self.b

    def predict(self, X: np.ndarray) -> np.ndarray:
        # a decision value of exactly zero is class 0
        return (self.decision_function(X) > 0.0).astype(int)


class KNearestNeighbors:
    """Euclidean KNN majority vote; equal distances prefer the lower training index."""

    def __init__(self, k: int = 3):
        self.k = k
        self.X: Optional[np.ndarray] = None
        self.y: Optional[np.ndarray] = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "KNearestNeighbors":
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=int)
        return self

    def neighbors(self, X: np.ndarray) -> np.ndarray:
        dist = cdist(np.asarray(X, dtype=float), self.X, metric="sqeuclidean")
        k = min(self.k, self.X.shape[0])
        return np.argsort(dist, axis=1, kind="stable")[:, :k]

    def predict(self, X: np.ndarray) -> np.ndarray:
        votes = self.y[self.neighbors(X)]
        # an even vote (only when k exceeds the training size) falls to 0
        return (2 * votes.sum(axis=1) > votes.shape[1]).astype(int)


class ExtremeLearningMachine:
    """Random sigmoid hidden layer with a ridge least-squares linear readout."""

    def __init__(self, n_hidden: int = 50, ridge: float = 1e-6, seed: int = 0):
        self.n_hidden = n_hidden
        self.ridge = ridge
        self.seed = seed
        self.W: Optional[np.ndarray] = None
        self.bias: Optional[np.ndarray] = None
        self.beta: Optional[np.ndarray] = None

    def _hidden(self, X: np.ndarray) -> np.ndarray:
        return expit(np.asarray(X, dtype=float) @ self.W + self.bias)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "ExtremeLearningMachine":
        rng = np.random.default_rng(self.seed)
        self.W = rng.uniform(-1.0, 1.0, size=(X.shape[1], self.n_hidden))
        self.bias = rng.uniform(-1.0, 1.0, size=self.n_hidden)
        H = self._hidden(X)
        gram = H.T @ H + self.ridge * np.eye(self.n_hidden)
        self.beta = linalg.solve(gram, H.T @ np.asarray(y, dtype=float), assume_a="pos")
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return self._hidden(X) @ self.beta

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0.5).astype(int)


Estimator = Union[LinearSVM, KNearestNeighbors, ExtremeLearningMachine]


@dataclass
class TrainedModel:
    """A fitted estimator with the standardization it expects and its training accuracy."""

    spec: ModelSpec
    estimator: Estimator
    n_features: int
    standardizer: Optional[Standardizer] = None
    training_accuracy: float = field(default=float("nan"))


def _build_estimator(spec: ModelSpec) -> Estimator:
    if spec.kind is ModelKind.LINEAR_SVM:
        return LinearSVM(C=spec.svm_c, tol=spec.svm_tol)
    if spec.kind is ModelKind.KNN:
        return KNearestNeighbors(k=spec.knn_k)
    return ExtremeLearningMachine(spec.elm_hidden, spec.elm_ridge, spec.seed)


def train(spec: ModelSpec, X: np.ndarray, y: np.ndarray) -> TrainedModel:
    """Fit the configured classifier on subject-level rows.

    Args:
        spec: classifier kind and hyperparameters
        X: n_tr x q training matrix
        y: binary labels

    Returns:
        TrainedModel with training-set accuracy filled in
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[1] < 1 or X.shape[0] != y.shape[0]:
        raise DimensionMismatchError(
            f"dimension mismatch: training matrix {X.shape} with {y.shape[0]} labels"
        )
    if len(set(y.tolist())) < 2:
        error_msg = f"single-class dataset: {len(y)} training rows all labeled {y[0]}"
        logger.error(error_msg)
        raise SingleClassError(error_msg)

    standardizer = Standardizer.fit(X) if spec.standardize else None
    Z = standardizer.apply(X) if standardizer is not None else X
    estimator = _build_estimator(spec).fit(Z, y)

    model = TrainedModel(spec, estimator, X.shape[1], standardizer)
    model.training_accuracy = float(np.mean(estimator.predict(Z) == y))
    logger.debug(
        f"Trained {spec.kind.value} on {X.shape[0]}x{X.shape[1]}, "
        f"training accuracy {model.training_accuracy:.3f}"
    )
    return model


def predict(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Labels in {0, 1} for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        error_msg = (
            f"dimension mismatch: model trained on {model.n_features} features, "
            f"got {X.shape[1]}"
        )
        logger.error(error_msg)
        raise DimensionMismatchError(error_msg)
    if model.standardizer is not None:
        X = model.standardizer.apply(X)
    return model.estimator.predict(X).astype(int)
