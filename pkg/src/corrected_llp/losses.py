"""Margin losses and their label-noise corrected, cost-sensitive variants.

A margin loss is ``l(t, y) = phi(y * t)``.  Given flip probabilities
``rho = (rho_plus, rho_minus)`` the corrected loss ``l^rho`` is the linear
recombination of ``l(t, 1)`` and ``l(t, -1)`` whose expectation over the
label-flipping process equals the clean loss.  All functions broadcast over
numpy arrays of decision values ``t`` and labels ``y``.

Corrected losses can be negative.  Nothing in this module clamps them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .errors import DomainError, UnsupportedLossError

# 1 - rho_minus - rho_plus below this is rejected; it divides every corrected formula.
MIN_NOISE_GAP = 1e-9

__all__ = [
    "MarginLoss",
    "NoiseRates",
    "CostPair",
    "UNIT_COST",
    "NO_NOISE",
    "logistic",
    "squared",
    "huber",
    "get_loss",
    "mixing_coefficients",
    "corrected_loss",
    "cost_sensitive_loss",
    "corrected_cost_loss",
    "corrected_cost_grad",
    "corrected_cost_second",
    "llp_corrected_form",
    "llp_corrected_grad",
    "lipschitz_constant_bound",
    "zero_value_bound",
    "check_second_order_condition",
]


@dataclass(frozen=True)
class MarginLoss:
    """A margin loss ``l(t, y) = phi(y t)``.

    Parameters
    ----------
    name : str
        Identifier, e.g. ``"logistic"`` or ``"huber(1)"``.
    phi, dphi : callable
        The margin function and its first derivative (vectorized).
    d2phi : callable or None
        Second derivative.  ``None`` marks a loss that the convexity
        machinery cannot handle.
    lipschitz : float
        Lipschitz constant ``L`` of ``phi``; ``math.inf`` when unbounded.
    """

    name: str
    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]
    d2phi: Optional[Callable[[np.ndarray], np.ndarray]]
    lipschitz: float

    @property
    def value_at_zero(self) -> float:
        return float(self.phi(np.asarray(0.0)))

    def value(self, t, y):
        return self.phi(np.asarray(y) * np.asarray(t, dtype=float))

    def deriv(self, t, y):
        """d/dt of ``phi(y t)``."""
        y = np.asarray(y)
        return y * self.dphi(y * np.asarray(t, dtype=float))

    def second(self, t, y):
        """d^2/dt^2 of ``phi(y t)``; ``y**2 == 1`` so it is ``phi''(y t)``."""
        if self.d2phi is None:
            raise UnsupportedLossError(f"loss {self.name!r} has no second derivative")
        return self.d2phi(np.asarray(y) * np.asarray(t, dtype=float))


def _logistic_phi(m):
    return np.logaddexp(0.0, -m)


def _logistic_dphi(m):
    return -expit(-m)


def _logistic_d2phi(m):
    return expit(m) * expit(-m)


def logistic() -> MarginLoss:
    """``phi(m) = log(1 + exp(-m))``; ``L = 1`` and ``phi(0) = log 2``."""
    return MarginLoss("logistic", _logistic_phi, _logistic_dphi, _logistic_d2phi, 1.0)


def squared() -> MarginLoss:
    """``phi(m) = (1 - m)^2``.  Not globally Lipschitz, so ``L = inf``."""
    return MarginLoss(
        "squared",
        lambda m: (1.0 - m) ** 2,
        lambda m: -2.0 * (1.0 - m),
        lambda m: 2.0 * np.ones_like(np.asarray(m, dtype=float)),
        math.inf,
    )


def huber(width: float = 1.0) -> MarginLoss:
    """Huberized margin loss with a symmetric curvature band.

    ``phi(m) = 0`` for ``m >= w``, ``(w - m)^2 / 2`` for ``|m| <= w`` and
    ``-2 w m`` for ``m <= -w``.  The quadratic piece is centred so that
    ``phi''`` is even, which is what the second-order condition needs;
    ``L = 2 w`` and ``phi(0) = w^2 / 2``.
    """
    w = float(width)
    if not (w > 0 and math.isfinite(w)):
        raise DomainError(f"huber width must be positive and finite, got {width!r}")

    def phi(m):
        m = np.asarray(m, dtype=float)
        return np.where(m >= w, 0.0, np.where(m <= -w, -2.0 * w * m, 0.5 * (w - m) ** 2))

    def dphi(m):
        m = np.asarray(m, dtype=float)
        return np.where(m >= w, 0.0, np.where(m <= -w, -2.0 * w, m - w))

    def d2phi(m):
        m = np.asarray(m, dtype=float)
        return np.where(np.abs(m) <= w, 1.0, 0.0)

    return MarginLoss(f"huber({w:g})", phi, dphi, d2phi, 2.0 * w)


def get_loss(spec: str) -> MarginLoss:
    """Parse ``"logistic"``, ``"squared"``, ``"huber"`` or ``"huber:<width>"``."""
    name, _, arg = spec.strip().partition(":")
    name = name.lower()
    if name == "logistic":
        return logistic()
    if name == "squared":
        return squared()
    if name == "huber":
        return huber(float(arg)) if arg else huber()
    raise DomainError(f"unknown loss {spec!r}")


@dataclass(frozen=True)
class NoiseRates:
    """Flip probabilities: ``rho_plus`` = P(+1 -> -1), ``rho_minus`` = P(-1 -> +1)."""

    rho_plus: float
    rho_minus: float

    def __post_init__(self):
        for name in ("rho_plus", "rho_minus"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0):
                raise DomainError(f"{name} must lie in [0, 1), got {v!r}")
        if 1.0 - self.rho_minus - self.rho_plus < MIN_NOISE_GAP:
            raise DomainError(
                f"rho_plus + rho_minus must be < 1, got {self.rho_plus!r} + {self.rho_minus!r}"
            )

    @property
    def gap(self) -> float:
        """``1 - rho_minus - rho_plus``."""
        return 1.0 - self.rho_minus - self.rho_plus

    def flip_probability(self, y):
        """Probability that a true label ``y`` is flipped."""
        return np.where(np.asarray(y) > 0, self.rho_plus, self.rho_minus)


@dataclass(frozen=True)
class CostPair:
    alpha_plus: float
    alpha_minus: float

    def __post_init__(self):
        for name in ("alpha_plus", "alpha_minus"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"{name} must be positive and finite, got {v!r}")

    @classmethod
    def balanced(cls, pi: float) -> "CostPair":
        """Costs whose cost-sensitive risk equals the balanced error under prior ``pi``."""
        if not 0.0 < pi < 1.0:
            raise DomainError(f"class prior must lie in (0, 1), got {pi!r}")
        return cls(1.0 / (2.0 * pi), 1.0 / (2.0 * (1.0 - pi)))


UNIT_COST = CostPair(1.0, 1.0)
NO_NOISE = NoiseRates(0.0, 0.0)


def mixing_coefficients(alpha: CostPair, rho: NoiseRates, y):
    """Coefficients ``(a, b)`` with ``(l_alpha)^rho(t, y) = a phi(y t) - b phi(-y t)``."""
    pos = np.asarray(y) > 0
    d = rho.gap
    a = np.where(pos, (1.0 - rho.rho_minus) * alpha.alpha_plus, (1.0 - rho.rho_plus) * alpha.alpha_minus) / d
    b = np.where(pos, rho.rho_plus * alpha.alpha_minus, rho.rho_minus * alpha.alpha_plus) / d
    return a, b


def cost_sensitive_loss(loss: MarginLoss, alpha: CostPair, t, y):
    y = np.asarray(y)
    cost = np.where(y > 0, alpha.alpha_plus, alpha.alpha_minus)
    return cost * loss.value(t, y)


def corrected_cost_loss(loss: MarginLoss, alpha: CostPair, rho: NoiseRates, t, y):
    """``(l_alpha)^rho(t, y)``: costs first, then the noise correction."""
    y = np.asarray(y)
    a, b = mixing_coefficients(alpha, rho, y)
    return a * loss.value(t, y) - b * loss.value(t, -y)


def corrected_loss(loss: MarginLoss, rho: NoiseRates, t, y):
    return corrected_cost_loss(loss, UNIT_COST, rho, t, y)


def corrected_cost_grad(loss: MarginLoss, alpha: CostPair, rho: NoiseRates, t, y):
    """Derivative of :func:`corrected_cost_loss` with respect to ``t``."""
    y = np.asarray(y)
    a, b = mixing_coefficients(alpha, rho, y)
    return a * loss.deriv(t, y) - b * loss.deriv(t, -y)


def corrected_cost_second(loss: MarginLoss, alpha: CostPair, rho: NoiseRates, t, y):
    y = np.asarray(y)
    a, b = mixing_coefficients(alpha, rho, y)
    return a * loss.second(t, y) - b * loss.second(t, -y)


def _check_gamma_pair(gamma_plus, gamma_minus):
    if not (0.0 <= gamma_minus < gamma_plus <= 1.0):
        raise DomainError(
            f"need 0 <= gamma_minus < gamma_plus <= 1, got ({gamma_plus!r}, {gamma_minus!r})"
        )


def llp_corrected_form(loss: MarginLoss, gamma_plus: float, gamma_minus: float, t, y):
    """Corrected cost-sensitive loss of a bag pair written directly in the proportions."""
    _check_gamma_pair(gamma_plus, gamma_minus)
    y = np.asarray(y)
    g = gamma_plus - gamma_minus
    lp, lm = loss.value(t, 1), loss.value(t, -1)
    pos = ((1.0 - gamma_minus) * lp - gamma_minus * lm) / g
    neg = (gamma_plus * lm - (1.0 - gamma_plus) * lp) / g
    return np.where(y > 0, pos, neg)


def llp_corrected_grad(loss: MarginLoss, gamma_plus: float, gamma_minus: float, t, y):
    _check_gamma_pair(gamma_plus, gamma_minus)
    y = np.asarray(y)
    g = gamma_plus - gamma_minus
    dp, dm = loss.deriv(t, 1), loss.deriv(t, -1)
    pos = ((1.0 - gamma_minus) * dp - gamma_minus * dm) / g
    neg = (gamma_plus * dm - (1.0 - gamma_plus) * dp) / g
    return np.where(y > 0, pos, neg)


def lipschitz_constant_bound(
    loss: MarginLoss,
    rho: Optional[NoiseRates] = None,
    alpha: Optional[CostPair] = None,
    gamma_pair: Optional[tuple[float, float]] = None,
) -> float:
    """Upper bound on the Lipschitz constant of a corrected loss.

    With ``gamma_pair`` the bag-pair mapping is assumed and the bound is
    ``L / (gamma_plus - gamma_minus)``.  Otherwise it is
    ``L (1 + |rho+ - rho-|) / (1 - rho- - rho+)``, times ``max(alpha)``
    when costs are given.
    """
    if gamma_pair is not None:
        gp, gm = gamma_pair
        _check_gamma_pair(gp, gm)
        return loss.lipschitz / (gp - gm)
    rho = NO_NOISE if rho is None else rho
    bound = loss.lipschitz * (1.0 + abs(rho.rho_plus - rho.rho_minus)) / rho.gap
    if alpha is not None:
        bound *= max(alpha.alpha_plus, alpha.alpha_minus)
    return bound


def zero_value_bound(
    loss: MarginLoss,
    rho: Optional[NoiseRates] = None,
    alpha: Optional[CostPair] = None,
    gamma_pair: Optional[tuple[float, float]] = None,
) -> float:
    """Upper bound on ``max_y (l_alpha)^rho(0, y)``.

    Exact ``phi(0)`` without costs; ``2 phi(0) max(alpha) / (1 - rho- - rho+)``
    with costs; ``phi(0) / (gamma_plus - gamma_minus)`` for a bag pair.
    """
    phi0 = loss.value_at_zero
    if gamma_pair is not None:
        gp, gm = gamma_pair
        _check_gamma_pair(gp, gm)
        return phi0 / (gp - gm)
    if alpha is None:
        return phi0
    rho = NO_NOISE if rho is None else rho
    return 2.0 * phi0 * max(alpha.alpha_plus, alpha.alpha_minus) / rho.gap


SECOND_ORDER_GRID = np.round(np.linspace(-5.0, 5.0, 101), 12)


def check_second_order_condition(loss: MarginLoss, atol: float = 1e-10) -> bool:
    """True iff ``l''(t, 1) == l''(t, -1)`` on the grid ``-5, -4.9, ..., 5``."""
    t = SECOND_ORDER_GRID
    return bool(np.all(np.abs(loss.second(t, 1) - loss.second(t, -1)) <= atol))
