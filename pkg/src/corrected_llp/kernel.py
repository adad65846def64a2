"""Gaussian kernel, Gram matrices and representer-form decision functions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DomainError


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel ``k(x, x') = exp(-bandwidth * ||x - x'||^2)``.

    ``bound_K`` is ``sup_x sqrt(k(x, x))``, which is 1 for this kernel.
    """

    bandwidth: float
    bound_K: float = 1.0

    def __post_init__(self):
        if not (self.bandwidth > 0 and np.isfinite(self.bandwidth)):
            raise DomainError(f"kernel bandwidth must be positive, got {self.bandwidth!r}")


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DomainError(f"expected a 2-d array of feature vectors, got shape {X.shape}")
    return X


def sq_distances(X, Z) -> np.ndarray:
    X, Z = _as_matrix(X), _as_matrix(Z)
    if X.shape[1] != Z.shape[1]:
        raise DomainError(f"feature dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    return cdist(X, Z, metric="sqeuclidean")


def median_heuristic(X, max_points: int = 2000, seed=0) -> float:
    """``1 / median ||x - x'||^2`` over distinct pairs (a subsample if ``X`` is large)."""
    X = _as_matrix(X)
    if len(X) < 2:
        raise DomainError("the median heuristic needs at least two points")
    if len(X) > max_points:
        X = X[np.random.default_rng(seed).choice(len(X), max_points, replace=False)]
    d = sq_distances(X, X)[np.triu_indices(len(X), k=1)]
    med = float(np.median(d))
    if not med > 0:
        raise DomainError("median squared distance is zero; bandwidth undefined")
    return 1.0 / med


def gram(X, Z, kernel: KernelSpec) -> np.ndarray:
    """Matrix of ``k(X_i, Z_j)``."""
    return np.exp(-kernel.bandwidth * sq_distances(X, Z))


@dataclass
class KernelModel:
    """``f(x) = sum_i coefficients[i] * k(x, anchors[i])``."""

    anchors: np.ndarray
    coefficients: np.ndarray
    kernel: KernelSpec
    _gram: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.anchors = _as_matrix(self.anchors)
        self.coefficients = np.asarray(self.coefficients, dtype=float).ravel()
        if len(self.anchors) != len(self.coefficients):
            raise DomainError(
                f"{len(self.anchors)} anchors but {len(self.coefficients)} coefficients"
            )

    @classmethod
    def zeros(cls, anchors, kernel: KernelSpec) -> "KernelModel":
        anchors = _as_matrix(anchors)
        return cls(anchors, np.zeros(len(anchors)), kernel)

    def anchor_gram(self) -> np.ndarray:
        if self._gram is None:
            self._gram = gram(self.anchors, self.anchors, self.kernel)
        return self._gram

    def with_coefficients(self, coefficients) -> "KernelModel":
        """Same anchors and kernel (Gram cache shared), new coefficients."""
        return KernelModel(self.anchors, coefficients, self.kernel, self._gram)

    def decision_function(self, X) -> np.ndarray:
        return gram(X, self.anchors, self.kernel) @ self.coefficients

    def rkhs_norm_sq(self) -> float:
        return rkhs_norm_sq(self)


def evaluate(model: KernelModel, x):
    """Decision value at one point (scalar) or at each row of a matrix."""
    x = np.asarray(x, dtype=float)
    values = model.decision_function(x)
    return float(values[0]) if x.ndim == 1 else values


def rkhs_norm_sq(model: KernelModel, tol: float = 1e-9) -> float:
    """``c^T G c``; tiny negative round-off (above ``-tol``) is clamped to 0."""
    c = model.coefficients
    value = float(c @ model.anchor_gram() @ c)
    if value < 0:
        if value < -tol:
            raise DomainError(f"Gram quadratic form is negative ({value!r}); kernel not PSD?")
        value = 0.0
    return value


def scale_to_norm(model: KernelModel, radius: float) -> KernelModel:
    """Rescale coefficients so that ``||f||_H = radius`` (zero models stay zero)."""
    norm = np.sqrt(rkhs_norm_sq(model))
    if norm == 0:
        return model
    return model.with_coefficients(model.coefficients * (radius / norm))
