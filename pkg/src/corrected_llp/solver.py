"""Regularized, weighted corrected-loss ERM over a Gaussian RKHS.

The decision function is kept in representer form over all training points,
``f = G c``, and the objective

    J(c) = sum_i (w_i / n_i) sum_j (l_{alpha_i})^{rho_i}(f_ij, y_ij) + lam * c^T G c

is minimized by full-batch gradient descent on the coefficients ``c`` with
step size ``learning_rate / (1 + decay * step)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DivergenceError, DomainError, InputError
from .kernel import KernelModel, KernelSpec, gram
from .llp_model import BagPair, derive
from .losses import (
    NO_NOISE,
    UNIT_COST,
    CostPair,
    MarginLoss,
    NoiseRates,
    logistic,
    mixing_coefficients,
)
from .weighting import llp_weights

log = logging.getLogger(__name__)


@dataclass
class Source:
    """One corrupted sample: points, noisy labels, its (rho, alpha) and its weight."""

    X: np.ndarray
    y: np.ndarray
    rho: NoiseRates = NO_NOISE
    alpha: CostPair = UNIT_COST
    weight: float = 1.0
    gamma_pair: Optional[tuple[float, float]] = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if len(self.y) == 0:
            raise DomainError("a source must contain at least one point")
        if len(self.X) != len(self.y):
            raise DomainError(f"{len(self.X)} points but {len(self.y)} labels")
        if not np.all(np.abs(self.y) == 1):
            raise DomainError("labels must be +1 or -1")

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def n_plus(self) -> int:
        return int(np.count_nonzero(self.y > 0))

    @property
    def n_minus(self) -> int:
        return int(np.count_nonzero(self.y < 0))


def sources_from_pairs(pairs: Sequence[BagPair], weights=None) -> list[Source]:
    """Turn bag pairs into corrupted sources; zero-gap pairs are dropped.

    Only bag instances and proportions are read.  ``weights`` defaults to the
    prescribed ``n_i gap_i^2`` weights and is renormalized over kept pairs.
    """
    keep = [k for k, p in enumerate(pairs) if not p.zero_gap]
    if not keep:
        raise InputError("no usable pairs: every bag pair has zero gap")
    kept = [pairs[k] for k in keep]
    if weights is None:
        w = llp_weights([p.n for p in kept], [p.gap for p in kept])
    else:
        w = np.asarray(weights, dtype=float)
        if len(w) != len(pairs):
            raise DomainError(f"{len(w)} weights for {len(pairs)} pairs")
        w = w[keep]
        if np.any(w < 0) or w.sum() <= 0:
            raise DomainError("explicit weights must be nonnegative with a positive sum")
        w = w / w.sum()
    sources = []
    for p, wi in zip(kept, w):
        d = derive(p)
        X, y = p.points()
        sources.append(Source(X, y, d.rho, d.alpha, float(wi), (p.gamma_plus, p.gamma_minus)))
    return sources


@dataclass
class TrainingProblem:
    sources: list[Source]
    kernel: KernelSpec
    lam: float = 0.0
    loss: MarginLoss = field(default_factory=logistic)
    gram_matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.sources:
            raise DomainError("a training problem needs at least one source")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise DomainError(f"regularization must be >= 0, got {self.lam!r}")
        w = np.array([s.weight for s in self.sources])
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DomainError(f"source weights must form a probability vector, got {w.tolist()}")
        self.X = np.vstack([s.X for s in self.sources])
        self.y = np.concatenate([s.y for s in self.sources])
        a, b, scale = [], [], []
        for s in self.sources:
            ai, bi = mixing_coefficients(s.alpha, s.rho, s.y)
            a.append(ai)
            b.append(bi)
            scale.append(np.full(s.n, s.weight / s.n))
        self.a = np.concatenate(a)
        self.b = np.concatenate(b)
        self.scale = np.concatenate(scale)
        if self.gram_matrix is None:
            self.gram_matrix = gram(self.X, self.X, self.kernel)
        elif self.gram_matrix.shape != (len(self.X), len(self.X)):
            raise DomainError("precomputed Gram matrix does not match the training points")

    @classmethod
    def from_pairs(cls, pairs, kernel, lam=0.0, loss=None, weights=None, gram_matrix=None):
        return cls(sources_from_pairs(pairs, weights), kernel, lam, loss or logistic(), gram_matrix)

    @property
    def n(self) -> int:
        return len(self.y)

    def zero_model(self) -> KernelModel:
        return KernelModel(self.X, np.zeros(self.n), self.kernel, self.gram_matrix)

    # Per-point pieces at decision values f.
    def point_losses(self, f):
        m = self.y * f
        return self.a * self.loss.phi(m) - self.b * self.loss.phi(-m)

    def point_grads(self, f):
        m = self.y * f
        return self.y * (self.a * self.loss.dphi(m) + self.b * self.loss.dphi(-m))

    def point_curvatures(self, f):
        m = self.y * f
        return self.a * self.loss.second(m, 1) - self.b * self.loss.second(-m, 1)

    def risk_at(self, f) -> float:
        """Weighted corrected empirical risk for decision values ``f`` at the training points."""
        return float(self.scale @ self.point_losses(np.asarray(f, dtype=float)))

    def _check_model(self, model: KernelModel) -> None:
        if model.anchors is not self.X and (
            model.anchors.shape != self.X.shape or not np.array_equal(model.anchors, self.X)
        ):
            raise DomainError("model anchors must be the problem's training points")

    def _f(self, coefficients):
        return self.gram_matrix @ coefficients


def objective(problem: TrainingProblem, model: KernelModel) -> float:
    problem._check_model(model)
    c = model.coefficients
    f = problem._f(c)
    return problem.risk_at(f) + problem.lam * float(c @ f)


def corrected_empirical_risk(problem: TrainingProblem, model: KernelModel) -> float:
    """Objective without the regularizer; the model-selection criterion."""
    problem._check_model(model)
    return problem.risk_at(problem._f(model.coefficients))


def validation_risk(problem: TrainingProblem, model: KernelModel) -> float:
    """Corrected empirical risk of any model on the problem's points (anchors may differ)."""
    return problem.risk_at(model.decision_function(problem.X))


def gradient(problem: TrainingProblem, model: KernelModel) -> np.ndarray:
    """``G g + 2 lam G c`` with ``g_j = (w_i/n_i) d/dt loss_j``."""
    problem._check_model(model)
    c = model.coefficients
    f = problem._f(c)
    return problem.gram_matrix @ (problem.scale * problem.point_grads(f) + 2.0 * problem.lam * c)


def hessian(problem: TrainingProblem, model: KernelModel) -> np.ndarray:
    """``G diag(s) G + 2 lam G`` with ``s_j = (w_i/n_i) d^2/dt^2 loss_j``."""
    problem._check_model(model)
    G = problem.gram_matrix
    s = problem.scale * problem.point_curvatures(problem._f(model.coefficients))
    return G @ (s[:, None] * G) + 2.0 * problem.lam * G


def pooled_scalar_objective(problem: TrainingProblem, t) -> np.ndarray:
    """``J(t) = sum_i (w_i/n_i) sum_j loss_ij(t)`` with one shared decision value ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.array([problem.risk_at(np.full(problem.n, tk)) for tk in t])
    return out


@dataclass(frozen=True)
class Certificate:
    convex: bool
    lhs: float
    all_straddle_half: bool
    all_balanced: bool


def convexity_certificate(problem: TrainingProblem) -> Certificate:
    """Decide convexity of the pooled bag-pair objective in a shared decision value.

    ``lhs = sum_i w_i / (n_i gap_i) [n_i+ (1/2 - g_i-) + n_i- (g_i+ - 1/2)]``
    and the pooled objective is convex iff ``lhs >= 0`` (necessity needs a
    strictly convex base loss).
    """
    lhs = 0.0
    straddle = balanced = True
    for s in problem.sources:
        if s.gamma_pair is None:
            raise DomainError("the convexity certificate needs gamma_pair on every source")
        gp, gm = s.gamma_pair
        if not gp > gm:
            raise DomainError(f"source has gamma_plus <= gamma_minus: {s.gamma_pair}")
        lhs += s.weight / (s.n * (gp - gm)) * (s.n_plus * (0.5 - gm) + s.n_minus * (gp - 0.5))
        straddle &= gm <= 0.5 <= gp
        balanced &= s.n_plus == s.n_minus
    return Certificate(bool(lhs >= 0 or straddle or balanced), float(lhs), straddle, balanced)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    decay: float = 0.0
    iterations: int = 100
    seed: int = 0
    init: str = "zeros"
    init_scale: float = 0.01

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError(f"learning_rate must be positive, got {self.learning_rate!r}")
        if not self.decay >= 0:
            raise DomainError(f"decay must be nonnegative, got {self.decay!r}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise DomainError(f"iterations must be a positive integer, got {self.iterations!r}")
        if self.init not in ("zeros", "gaussian"):
            raise DomainError(f"init must be 'zeros' or 'gaussian', got {self.init!r}")


@dataclass
class TrainResult:
    model: KernelModel
    trace: np.ndarray
    snapshots: dict[int, np.ndarray]

    @property
    def final_objective(self) -> float:
        return float(self.trace[-1])

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.trace) <= 0))


def initial_coefficients(n: int, config: TrainConfig) -> np.ndarray:
    if config.init == "zeros":
        return np.zeros(n)
    return config.init_scale * np.random.default_rng(config.seed).standard_normal(n)


def train(problem: TrainingProblem, config: TrainConfig, checkpoints: Iterable[int] = ()) -> TrainResult:
    """Gradient descent from the configured initialization.

    ``trace[k]`` is the objective after ``k`` steps.  Coefficients after each
    step count in ``checkpoints`` are kept in ``snapshots``; since the step
    schedule does not depend on the total, they equal the result of a shorter run.
    On divergence the snapshots taken so far ride along on the exception.
    """
    G, lam = problem.gram_matrix, problem.lam
    wanted = {int(k) for k in checkpoints if 0 <= k <= config.iterations}
    c = initial_coefficients(problem.n, config)
    snapshots = {}
    trace = np.empty(config.iterations + 1)
    for step in range(config.iterations + 1):
        # overflow surfaces as a non-finite objective and is reported as divergence
        with np.errstate(over="ignore", invalid="ignore"):
            f = G @ c
            value = problem.risk_at(f) + lam * float(c @ f)
        if not math.isfinite(value):
            err = DivergenceError(step, value)
            err.snapshots = snapshots
            raise err
        trace[step] = value
        if step in wanted:
            snapshots[step] = c.copy()
        if step == config.iterations:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            grad = G @ (problem.scale * problem.point_grads(f) + 2.0 * lam * c)
            c = c - config.learning_rate / (1.0 + config.decay * step) * grad
    log.debug("trained %d steps, objective %.6g -> %.6g", config.iterations, trace[0], trace[-1])
    model = KernelModel(problem.X, c, problem.kernel, G)
    return TrainResult(model, trace, snapshots)
