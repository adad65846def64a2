"""Per-source SNR coefficients and bound-optimal source weights.

Every generalization bound in this package is proportional to
``sqrt(sum_i w_i^2 c_i^2)`` for a per-source coefficient ``c_i``.  Over the
probability simplex this is minimized by ``w_i ∝ c_i^-2``, and the minimum of
``sum_i w_i^2 c_i^2`` is ``H(c_1^2, ..., c_N^2) / N`` with ``H`` the harmonic
mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError
from .losses import NoiseRates

SETTINGS = ("common", "varying_priors", "llp")


@dataclass(frozen=True)
class SourceStats:
    """Summary of one corrupted source.

    ``rho`` is needed for the ``common`` and ``varying_priors`` settings,
    ``pi`` additionally for ``varying_priors``, and ``gamma_pair`` for ``llp``.
    """

    n: int
    rho: Optional[NoiseRates] = None
    pi: Optional[float] = None
    gamma_pair: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"sample count must be a positive integer, got {self.n!r}")
        if self.pi is not None and not 0.0 < self.pi < 1.0:
            raise DomainError(f"class prior must lie in (0, 1), got {self.pi!r}")
        if self.gamma_pair is not None:
            gp, gm = self.gamma_pair
            if not 0.0 <= gm <= gp <= 1.0:
                raise DomainError(f"need 0 <= gamma_minus <= gamma_plus <= 1, got {self.gamma_pair!r}")

    @property
    def gap(self) -> float:
        if self.gamma_pair is None:
            raise DomainError("source has no gamma_pair")
        return self.gamma_pair[0] - self.gamma_pair[1]

    def require(self, setting: str) -> None:
        if setting not in SETTINGS:
            raise DomainError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
        missing = []
        if setting in ("common", "varying_priors") and self.rho is None:
            missing.append("rho")
        if setting == "varying_priors" and self.pi is None:
            missing.append("pi")
        if setting == "llp" and self.gamma_pair is None:
            missing.append("gamma_pair")
        if missing:
            raise DomainError(f"setting {setting!r} needs field(s) {', '.join(missing)}")


def noise_factor(rho: NoiseRates) -> float:
    """``(1 + |rho+ - rho-|) / (1 - rho- - rho+)``."""
    return (1.0 + abs(rho.rho_plus - rho.rho_minus)) / rho.gap


def snr_coefficient(stats: SourceStats, setting: str) -> float:
    """Per-source coefficient ``c_i``; ``1 / c_i^2`` is the source's SNR.

    Returns ``math.inf`` for a bag pair with zero gap.
    """
    stats.require(setting)
    if setting == "llp":
        gap = stats.gap
        if gap <= 0:
            return math.inf
        return 1.0 / math.sqrt(stats.n * gap * gap)
    c = noise_factor(stats.rho) / math.sqrt(stats.n)
    if setting == "varying_priors":
        c /= min(stats.pi, 1.0 - stats.pi)
    return c


def optimal_weights(coefficients: Sequence[float]) -> np.ndarray:
    """``w_i = c_i^-2 / sum_j c_j^-2``.

    Infinite coefficients (zero-gap pairs) get weight 0 and the rest are
    renormalized; at least one coefficient must be finite.
    """
    c = np.asarray(coefficients, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise DomainError("need at least one coefficient")
    if np.any(~(c > 0)):
        raise DomainError(f"coefficients must be positive, got {c.tolist()}")
    finite = np.isfinite(c)
    if not finite.any():
        raise DomainError("every source has an infinite coefficient; nothing to weight")
    # Normalize by the smallest coefficient first so c^-2 cannot overflow.
    scaled = np.where(finite, c / c[finite].min(), np.inf)
    inv = 1.0 / scaled**2
    return inv / inv.sum()


def weighted_quadratic(w: Sequence[float], c: Sequence[float]) -> float:
    """``sum_i w_i^2 c_i^2``; zero-weight terms contribute nothing even if ``c_i`` is infinite."""
    w = np.asarray(w, dtype=float)
    c = np.asarray(c, dtype=float)
    if w.shape != c.shape:
        raise DomainError(f"length mismatch: {w.shape} vs {c.shape}")
    keep = w != 0
    return float(np.sum(w[keep] ** 2 * c[keep] ** 2))


def check_simplex(w: Sequence[float], atol: float = 1e-12) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > atol:
        raise DomainError(f"weights must be a probability vector, got {w.tolist()}")
    return w


def source_weights(sources: Sequence[SourceStats], setting: str) -> np.ndarray:
    """Bound-optimal weights for a list of sources."""
    return optimal_weights([snr_coefficient(s, setting) for s in sources])


def llp_weights(sizes: Sequence[int], gaps: Sequence[float]) -> np.ndarray:
    """``w_i ∝ n_i (gamma_i+ - gamma_i-)^2``; zero gaps get weight 0."""
    n = np.asarray(sizes, dtype=float)
    g = np.asarray(gaps, dtype=float)
    if n.shape != g.shape or n.size == 0:
        raise DomainError("sizes and gaps must be equally long and nonempty")
    if np.any(g < 0):
        raise DomainError("gaps must be nonnegative")
    raw = n * g * g
    if raw.sum() <= 0:
        raise DomainError("no bag pair with a positive gap")
    return raw / raw.sum()


def arithmetic_mean(x: Sequence[float]) -> float:
    return float(np.mean(np.asarray(x, dtype=float)))


def harmonic_mean(x: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    return float(len(x) / np.sum(1.0 / x))


def mean_ratio(sources: Sequence[SourceStats], setting: str = "common") -> float:
    """``A(c^2) / H(c^2)``: how much worse uniform weights are than optimal ones."""
    c2 = [snr_coefficient(s, setting) ** 2 for s in sources]
    return arithmetic_mean(c2) / harmonic_mean(c2)


def mean_ratio_illustration() -> float:
    """Ten sources of 100 points; nine with 1% symmetric noise, one with 49%."""
    sources = [SourceStats(100, NoiseRates(0.01, 0.01)) for _ in range(9)]
    sources.append(SourceStats(100, NoiseRates(0.49, 0.49)))
    return mean_ratio(sources)
