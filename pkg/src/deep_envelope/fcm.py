"""Fuzzy c-means over one envelope with a linear-kernel MMD penalty.

The objective is ``sum_ik u_ik^m ||s_k - p_i||^2 + MMD(S, P)`` with the
biased linear-kernel MMD, which equals ``||mean(S) - mean(P)||^2``. Memberships
have the classic FCM closed form (the MMD term does not depend on U) and the
prototypes solve the coupled system ``A P = B`` with

    A = diag(sum_k u_ik^m) + (1/C^2) * ones(C, C)
    B_i = sum_k (u_ik^m + 1/(N C)) * s_k
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg
from scipy.spatial.distance import cdist

from .errors import ClusterCountError, DegenerateClusterError

logger = logging.getLogger(__name__)


class FcmConfig(BaseModel):
    """Clustering parameters; ``mmd=False`` ablates the discrepancy term."""

    model_config = ConfigDict(frozen=True)

    fuzzifier: float = Field(2.0, gt=1.0)
    max_iters: int = Field(300, ge=1)
    tol: float = Field(1e-6, gt=0.0)
    seed: int = Field(0, ge=0)
    zero_dist_eps: float = Field(1e-12, gt=0.0)
    mmd: bool = True


@dataclass(frozen=True)
class MembershipMatrix:
    """C x N fuzzy assignments, each column summing to one."""

    u: np.ndarray

    @property
    def n_clusters(self) -> int:
        return int(self.u.shape[0])


@dataclass(frozen=True)
class Prototypes:
    """C x d cluster centers produced from ``source_count`` segments."""

    p: np.ndarray
    source_count: int


@dataclass(frozen=True)
class ClusterTrace:
    """Objective after every alternation of membership and center updates."""

    objective_per_iter: Tuple[float, ...]
    iterations: int
    converged: bool

    @property
    def final_objective(self) -> float:
        return self.objective_per_iter[-1] if self.objective_per_iter else float("nan")


def _squared_distances(samples: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # C x N
    return cdist(centers, samples, metric="sqeuclidean")


def memberships(
    samples: np.ndarray, centers: np.ndarray, cfg: FcmConfig
) -> MembershipMatrix:
    """Closed-form FCM memberships; a sample sitting on a center is assigned to it crisply."""
    samples = np.asarray(samples, dtype=float)
    centers = np.asarray(centers, dtype=float)
    if np.isnan(samples).any() or np.isnan(centers).any():
        raise ValueError("memberships need NaN-free samples and centers")

    d2 = _squared_distances(samples, centers)
    n_clusters, n_samples = d2.shape
    u = np.zeros((n_clusters, n_samples))

    dist = np.sqrt(d2)
    on_center = dist < cfg.zero_dist_eps
    crisp = on_center.any(axis=0)
    if crisp.any():
        # nearest qualifying center; argmin keeps the lowest index on ties
        masked = np.where(on_center[:, crisp], dist[:, crisp], np.inf)
        u[np.argmin(masked, axis=0), np.flatnonzero(crisp)] = 1.0

    soft = ~crisp
    if soft.any():
        inv = d2[:, soft] ** (-1.0 / (cfg.fuzzifier - 1.0))
        u[:, soft] = inv / inv.sum(axis=0, keepdims=True)

    return MembershipMatrix(u)


def center_system(
    u: MembershipMatrix, samples: np.ndarray, cfg: FcmConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """Coupled linear system (A, B) whose solution A P = B is the prototype update."""
    samples = np.asarray(samples, dtype=float)
    um = u.u ** cfg.fuzzifier
    n_clusters, n_samples = um.shape
    if samples.shape[0] != n_samples:
        raise ValueError(
            f"memberships cover {n_samples} samples but {samples.shape[0]} were given"
        )

    A = np.diag(um.sum(axis=1))
    B = um @ samples
    if cfg.mmd:
        A = A + 1.0 / n_clusters**2
        B = B + samples.sum(axis=0) / (n_samples * n_clusters)
    return A, B


def solve_centers(A: np.ndarray, B: np.ndarray, source_count: int = 0) -> Prototypes:
    """Solve A P = B by Cholesky; A must be symmetric positive definite."""
    # off-diagonal entries are the constant coupling term (zero when ablated)
    mass = np.diag(A) - (A[0, 1] if A.shape[0] > 1 else 0.0)
    if A.shape[0] > 1 and np.any(mass <= 0.0):
        error_msg = f"degenerate cluster mass: cluster masses {np.round(mass, 12).tolist()}"
        logger.error(error_msg)
        raise DegenerateClusterError(error_msg)
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as e:
        error_msg = f"degenerate cluster mass: {e}"
        logger.error(error_msg)
        raise DegenerateClusterError(error_msg) from e
    return Prototypes(linalg.cho_solve(factor, B), source_count)


def linear_mmd(X: np.ndarray, Y: np.ndarray) -> float:
    """Biased linear-kernel MMD from the three gram sums."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    a, b = X.shape[0], Y.shape[0]
    if a < 1 or b < 1:
        raise ValueError("linear_mmd needs at least one row on each side")
    kxx = (X @ X.T).sum() / a**2
    kxy = (X @ Y.T).sum() / (a * b)
    kyy = (Y @ Y.T).sum() / b**2
    return float(abs(kxx - 2.0 * kxy + kyy))


def linear_mmd_trace(X: np.ndarray, Y: np.ndarray) -> float:
    """The same statistic as tr(K' L') over the block kernel of the stacked sets."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    a, b = X.shape[0], Y.shape[0]
    Z = np.vstack([X, Y])
    K = Z @ Z.T
    L = np.empty((a + b, a + b))
    L[:a, :a] = 1.0 / a**2
    L[a:, a:] = 1.0 / b**2
    L[:a, a:] = -1.0 / (a * b)
    L[a:, :a] = -1.0 / (a * b)
    return float(abs(np.trace(K @ L)))


def objective(
    samples: np.ndarray, u: MembershipMatrix, p: np.ndarray, cfg: FcmConfig
) -> float:
    """Fuzzy within-cluster scatter plus the MMD between segments and prototypes."""
    samples = np.asarray(samples, dtype=float)
    scatter = float(np.sum((u.u ** cfg.fuzzifier) * _squared_distances(samples, p)))
    if not cfg.mmd:
        return scatter
    return scatter + linear_mmd(samples, p)


def stationarity_residual(
    samples: np.ndarray, u: MembershipMatrix, p: np.ndarray, cfg: FcmConfig
) -> np.ndarray:
    """Per-prototype norm of the objective gradient with respect to P."""
    samples = np.asarray(samples, dtype=float)
    um = u.u ** cfg.fuzzifier
    n_clusters, n_samples = um.shape
    grad = -2.0 * (um @ samples - um.sum(axis=1, keepdims=True) * p)
    if cfg.mmd:
        grad = grad - (2.0 / (n_samples * n_clusters)) * samples.sum(axis=0)
        grad = grad + (2.0 / n_clusters**2) * p.sum(axis=0)
    return np.linalg.norm(grad, axis=1)


def _distinct_rows(samples: np.ndarray) -> np.ndarray:
    """Row indices of the first occurrence of each distinct sample, in row order."""
    _, first = np.unique(samples, axis=0, return_index=True)
    return np.sort(first)


def farthest_point_init(samples: np.ndarray, n_clusters: int, seed: int) -> np.ndarray:
    """Seeded farthest-point sweep over the distinct samples; returns chosen row indices.

    Duplicated rows are swept once, so the chosen rows are pairwise different
    whenever the samples hold at least ``n_clusters`` distinct rows.
    """
    distinct = _distinct_rows(samples)
    if n_clusters > distinct.size:
        raise ValueError(
            f"{n_clusters} clusters requested but only {distinct.size} distinct samples"
        )
    pool = samples[distinct]
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(distinct.size))]
    nearest = cdist(pool, pool[chosen], metric="sqeuclidean")[:, 0]
    while len(chosen) < n_clusters:
        candidates = nearest.copy()
        candidates[chosen] = -np.inf
        nxt = int(np.argmax(candidates))
        chosen.append(nxt)
        nearest = np.minimum(nearest, cdist(pool, pool[[nxt]], "sqeuclidean")[:, 0])
    return distinct[chosen]


def cluster(
    samples: np.ndarray, n_clusters: int, cfg: FcmConfig
) -> Tuple[Prototypes, MembershipMatrix, ClusterTrace]:
    """Alternate memberships and coupled center solves until the objective settles."""
    samples = np.asarray(samples, dtype=float)
    n_samples = samples.shape[0]
    if not 1 <= n_clusters <= n_samples:
        error_msg = f"cluster count {n_clusters} outside 1..{n_samples}"
        logger.error(error_msg)
        raise ClusterCountError(error_msg)

    distinct = _distinct_rows(samples)
    if distinct.size < n_clusters:
        # every sample already sits on a center; extra centers repeat the distinct rows
        centers = samples[np.resize(distinct, n_clusters)]
        u = memberships(samples, centers, cfg)
        logger.debug(
            f"{distinct.size} distinct samples for {n_clusters} clusters; "
            "returning the distinct rows without iterating"
        )
        trace = ClusterTrace((objective(samples, u, centers, cfg),), 1, True)
        return Prototypes(centers, n_samples), u, trace

    centers = samples[farthest_point_init(samples, n_clusters, cfg.seed)]
    history: List[float] = []
    converged = False
    for _ in range(cfg.max_iters):
        u = memberships(samples, centers, cfg)
        A, B = center_system(u, samples, cfg)
        centers = solve_centers(A, B, n_samples).p
        value = objective(samples, u, centers, cfg)
        if history and abs(history[-1] - value) < cfg.tol:
            history.append(value)
            converged = True
            break
        history.append(value)

    if not converged:
        logger.warning(
            f"FCM stopped at max_iters={cfg.max_iters} without reaching tol={cfg.tol}"
        )
    trace = ClusterTrace(tuple(history), len(history), converged)
    return Prototypes(centers, n_samples), u, trace


@dataclass
class ClusterCache:
    """Memoizes :func:`cluster` by segment bytes, cluster count and config.

    Clustering is label-free and subject-local, so cross-validation folds that
    see the same envelope can share the result.
    """

    _entries: Dict[tuple, Tuple[Prototypes, MembershipMatrix, ClusterTrace]] = field(
        default_factory=dict
    )
    _lock: threading.Lock = field(default_factory=threading.Lock)
    hits: int = 0

    def cluster(
        self, samples: np.ndarray, n_clusters: int, cfg: FcmConfig
    ) -> Tuple[Prototypes, MembershipMatrix, ClusterTrace]:
        samples = np.ascontiguousarray(samples, dtype=float)
        key = (samples.shape, samples.tobytes(), n_clusters, cfg.model_dump_json())
        with self._lock:
            if key in self._entries:
                self.hits += 1
                return self._entries[key]
        result = cluster(samples, n_clusters, cfg)
        with self._lock:
            self._entries.setdefault(key, result)
        return result

    def __len__(self) -> int:
        return len(self._entries)
