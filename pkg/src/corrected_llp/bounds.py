"""Generalization bounds for weighted corrected-loss ERM over an RKHS ball.

Three setting-specific bounds share the shape
``prefactor * sqrt(sum_i w_i^2 c_i^2 ...)``; the general (master) bound takes
per-source Lipschitz and value-at-zero constants of the corrected losses
directly.  A Monte-Carlo check compares the bounds with observed uniform
deviations on synthetic data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, PreconditionError
from .kernel import KernelSpec, gram
from .llp_model import derive, gaussian_sampler, sample_bag_pair
from .losses import UNIT_COST, MarginLoss, NoiseRates, logistic, mixing_coefficients
from .matching import squared_gap_matching
from .weighting import SourceStats, check_simplex, noise_factor, source_weights

SETTINGS = ("common", "varying_priors", "llp")
MAX_THEOREM_DELTA = 0.25


@dataclass(frozen=True)
class BoundInputs:
    """Everything a bound evaluator needs.

    ``R`` is the RKHS-ball radius, ``K = sup_x sqrt(k(x, x))``, ``L`` the
    Lipschitz constant of the base loss and ``phi0 = phi(0)``.
    """

    R: float
    K: float
    L: float
    phi0: float
    delta: float
    weights: np.ndarray
    sources: Sequence[SourceStats]

    def __post_init__(self):
        for name in ("R", "K", "L"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")
        if not (self.phi0 >= 0 and math.isfinite(self.phi0)):
            raise DomainError(f"phi0 must be nonnegative and finite, got {self.phi0!r}")
        if not 0.0 < self.delta <= 1.0:
            raise DomainError(f"delta must lie in (0, 1], got {self.delta!r}")
        w = check_simplex(self.weights, atol=1e-9)
        object.__setattr__(self, "weights", w)
        if len(w) != len(self.sources):
            raise DomainError(f"{len(w)} weights for {len(self.sources)} sources")

    @property
    def log_term(self) -> float:
        """``ln(2 / delta) / 2``."""
        return math.log(2.0 / self.delta) / 2.0


@dataclass(frozen=True)
class BoundValue:
    """A bound and its decomposition ``value = sqrt(sum(contributions))``."""

    setting: str
    value: float
    delta: float
    R: float
    contributions: np.ndarray = field(repr=False)


def _require_theorem(inputs: BoundInputs, radius_factor: float) -> None:
    threshold = radius_factor * inputs.phi0 / (inputs.K * inputs.L)
    if not inputs.R > threshold:
        lhs = "phi(0)/(K L)" if radius_factor == 1 else f"{radius_factor:g} phi(0)/(K L)"
        raise PreconditionError(f"R > {lhs} violated: R = {inputs.R!r}, {lhs} = {threshold!r}")
    if not inputs.delta <= MAX_THEOREM_DELTA:
        raise PreconditionError(f"delta <= 1/4 violated: delta = {inputs.delta!r}")


def _finish(setting: str, inputs: BoundInputs, prefactor: float, terms) -> BoundValue:
    contributions = prefactor**2 * np.asarray(terms, dtype=float)
    return BoundValue(setting, float(math.sqrt(contributions.sum())), inputs.delta, inputs.R, contributions)


def _noise_terms(inputs: BoundInputs, setting: str) -> list[float]:
    terms = []
    for w, s in zip(inputs.weights, inputs.sources):
        s.require(setting)
        term = w * w / s.n * noise_factor(s.rho) ** 2
        if setting == "varying_priors":
            term /= min(s.pi, 1.0 - s.pi) ** 2
        terms.append(term)
    return terms


def common_noise_bound(inputs: BoundInputs) -> BoundValue:
    """Sources share one clean distribution but have their own flip rates."""
    _require_theorem(inputs, 1.0)
    pre = 4.0 * inputs.K * inputs.R * inputs.L * math.sqrt(inputs.log_term)
    return _finish("common", inputs, pre, _noise_terms(inputs, "common"))


def varying_priors_bound(inputs: BoundInputs) -> BoundValue:
    """Sources share class-conditionals but differ in prior; balanced costs."""
    _require_theorem(inputs, 2.0)
    pre = 2.0 * inputs.K * inputs.R * inputs.L * math.sqrt(inputs.log_term)
    return _finish("varying_priors", inputs, pre, _noise_terms(inputs, "varying_priors"))


def llp_bound(inputs: BoundInputs) -> BoundValue:
    """Bag pairs treated as corrupted sources."""
    _require_theorem(inputs, 1.0)
    terms = []
    for w, s in zip(inputs.weights, inputs.sources):
        s.require("llp")
        if w == 0:
            terms.append(0.0)
            continue
        if not s.gap > 0:
            raise DomainError(f"a weighted bag pair has zero gap: {s.gamma_pair!r}")
        terms.append(w * w / (s.n * s.gap**2))
    pre = 4.0 * inputs.K * inputs.R * inputs.L * math.sqrt(inputs.log_term)
    return _finish("llp", inputs, pre, terms)


def bound_common(inputs: BoundInputs) -> float:
    return common_noise_bound(inputs).value


def bound_varying_priors(inputs: BoundInputs) -> float:
    return varying_priors_bound(inputs).value


def bound_llp(inputs: BoundInputs) -> float:
    return llp_bound(inputs).value


def master_constants(inputs: BoundInputs, setting: str) -> list[tuple[float, float]]:
    """Per-source ``(Lipschitz constant, max value at 0)`` of the corrected losses.

    ``common``: ``(L nf, phi0)``; ``varying_priors``: ``(L nf a, 2 phi0 a / (1 - rho- - rho+))``
    with ``a = max(alpha) = 1 / (2 min(pi, 1-pi))``; ``llp``: ``(L / gap, phi0 / gap)``.
    Here ``nf = (1 + |rho+ - rho-|) / (1 - rho- - rho+)``.
    """
    if setting not in SETTINGS:
        raise DomainError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
    out = []
    for s in inputs.sources:
        s.require(setting)
        if setting == "llp":
            gap = s.gap
            out.append((inputs.L / gap, inputs.phi0 / gap) if gap > 0 else (math.inf, math.inf))
            continue
        nf = noise_factor(s.rho)
        if setting == "common":
            out.append((inputs.L * nf, inputs.phi0))
        else:
            a = 1.0 / (2.0 * min(s.pi, 1.0 - s.pi))
            out.append((inputs.L * nf * a, 2.0 * inputs.phi0 * a / s.rho.gap))
    return out


def bound_master(inputs: BoundInputs, constants: Sequence[tuple[float, float]]) -> float:
    """``2KR sqrt(sum w^2/n lip^2) + sqrt(sum w^2/n (zero + lip K R)^2 ln(2/delta)/2)``.

    Valid for every ``R > 0`` and ``delta`` in ``(0, 1]``.  Sources with zero
    weight are skipped, so their constants may be infinite.
    """
    if len(constants) != len(inputs.sources):
        raise DomainError(f"{len(constants)} constant pairs for {len(inputs.sources)} sources")
    K, R = inputs.K, inputs.R
    first = second = 0.0
    for w, s, (lip, zero) in zip(inputs.weights, inputs.sources, constants):
        if w == 0:
            continue
        if not (lip >= 0 and zero >= 0 and math.isfinite(lip) and math.isfinite(zero)):
            raise DomainError(f"loss constants must be finite and nonnegative, got {(lip, zero)!r}")
        first += w * w / s.n * lip * lip
        second += w * w / s.n * (zero + lip * K * R) ** 2
    return 2.0 * K * R * math.sqrt(first) + math.sqrt(second * inputs.log_term)


def bound_optimal_consistency_form(sources: Sequence[SourceStats], c0: float, R, K, L, delta) -> float:
    """``(8 K R L / c0) sqrt(ln(2/delta) / (2 sum_i n_i))``.

    ``c0`` is a floor on ``(1 - rho- - rho+) min(pi, 1 - pi)`` shared by all sources.
    """
    if not c0 > 0:
        raise DomainError(f"c0 must be positive, got {c0!r}")
    if not 0.0 < delta <= 1.0:
        raise DomainError(f"delta must lie in (0, 1], got {delta!r}")
    total = sum(s.n for s in sources)
    if total <= 0:
        raise DomainError("need at least one sample")
    return 8.0 * K * R * L / c0 * math.sqrt(math.log(2.0 / delta) / (2.0 * total))


def evaluate_bound(inputs: BoundInputs, setting: str) -> BoundValue:
    if setting == "common":
        return common_noise_bound(inputs)
    if setting == "varying_priors":
        return varying_priors_bound(inputs)
    if setting == "llp":
        return llp_bound(inputs)
    raise DomainError(f"unknown setting {setting!r}; expected one of {SETTINGS}")


# Monte-Carlo coverage ------------------------------------------------------


@dataclass(frozen=True)
class CoverageSpec:
    """Synthetic family for coverage runs: two unit Gaussians ``separation`` apart.

    In the ``common`` setting each of ``n_sources`` sources has ``source_size``
    points with a balanced clean prior and flip rates cycled from ``rhos``.  In
    the ``llp`` setting ``2 n_sources`` bag proportions are drawn as
    ``Binomial(source_size, 1/2) / source_size``, matched once, and every pair
    holds two bags of ``source_size`` points.
    """

    dim: int = 2
    separation: float = 4.0
    n_sources: int = 20
    source_size: int = 32
    rhos: tuple[tuple[float, float], ...] = ((0.1, 0.1), (0.3, 0.1), (0.2, 0.3))
    bandwidth: float = 0.5
    holdout: int = 100_000
    anchors: int = 20


@dataclass
class CoverageResult:
    coverage: float
    bound: float
    deviations: np.ndarray
    gamma_pairs: Optional[list[tuple[float, float]]] = None


def _llp_gamma_pairs(spec: CoverageSpec, rng: np.random.Generator) -> list[tuple[float, float]]:
    counts = rng.binomial(spec.source_size, 0.5, size=2 * spec.n_sources)
    pairs = []
    for i, j in squared_gap_matching(counts):
        hi, lo = max(counts[i], counts[j]), min(counts[i], counts[j])
        pairs.append((hi / spec.source_size, lo / spec.source_size))
    return pairs


def _probe_functions(spec, R, probes, p_plus, p_minus, kernel, rng):
    """Anchors (stacked) and a block-diagonal coefficient matrix, one column per probe."""
    anchors, coef = [], np.zeros((probes * spec.anchors, probes))
    for k in range(probes):
        n_pos = int(rng.binomial(spec.anchors, 0.5))
        A = np.vstack([p_plus(rng, n_pos), p_minus(rng, spec.anchors - n_pos)])
        c = rng.standard_normal(spec.anchors)
        norm_sq = float(c @ gram(A, A, kernel) @ c)
        anchors.append(A)
        coef[k * spec.anchors:(k + 1) * spec.anchors, k] = c * (R / math.sqrt(norm_sq))
    return np.vstack(anchors), coef


def empirical_coverage(
    setting: str,
    spec: CoverageSpec,
    R: float,
    delta: float,
    trials: int,
    probes: int,
    seed=0,
    loss: Optional[MarginLoss] = None,
) -> CoverageResult:
    """Fraction of trials whose probed uniform deviation stays below the bound.

    ``probes`` functions on the sphere of radius ``R`` are drawn once per run
    (anchors from the balanced mixture, standard normal coefficients, rescaled
    to norm ``R``); their true risks come from a clean holdout.  Each trial
    draws fresh corrupted samples, computes the weighted corrected empirical
    risk of every probe, and records the largest absolute deviation.  The probed
    maximum lower-bounds the supremum over the ball, so coverage of at least
    ``1 - delta`` is expected.

    The true risk is the clean risk with prior 1/2 in the ``common`` setting and
    the balanced risk ``(E+ phi(f) + E- phi(-f)) / 2`` in the ``llp`` setting.
    Both reduce to the same quantity here since the clean prior is 1/2.
    """
    if setting not in ("common", "llp"):
        raise DomainError(f"coverage supports 'common' and 'llp', got {setting!r}")
    if trials < 1 or probes < 1:
        raise DomainError("trials and probes must be positive")
    loss = loss or logistic()
    kernel = KernelSpec(spec.bandwidth)
    shift = np.zeros(spec.dim)
    shift[0] = spec.separation / 2.0
    p_plus, p_minus = gaussian_sampler(shift), gaussian_sampler(-shift)

    root = np.random.SeedSequence(seed)
    setup_seq, holdout_seq, trial_root = root.spawn(3)
    setup_rng = np.random.default_rng(setup_seq)

    # Sources and their bound.
    gamma_pairs = None
    if setting == "llp":
        gamma_pairs = _llp_gamma_pairs(spec, setup_rng)
        stats = [SourceStats(2 * spec.source_size, gamma_pair=g) for g in gamma_pairs]
        weights = source_weights(stats, "llp")
        noise = [derive(g) if g[0] > g[1] else None for g in gamma_pairs]
    else:
        rhos = [NoiseRates(*spec.rhos[k % len(spec.rhos)]) for k in range(spec.n_sources)]
        stats = [SourceStats(spec.source_size, rho) for rho in rhos]
        weights = source_weights(stats, "common")
    K = kernel.bound_K
    inputs = BoundInputs(R, K, loss.lipschitz, loss.value_at_zero, delta, weights, stats)
    bound = evaluate_bound(inputs, setting).value

    anchors, coef = _probe_functions(spec, R, probes, p_plus, p_minus, kernel, setup_rng)

    # True balanced risk of each probe on a clean holdout, computed in chunks.
    hold_rng = np.random.default_rng(holdout_seq)
    half = spec.holdout // 2
    true_risk = np.zeros(probes)
    for sampler, sign in ((p_plus, 1.0), (p_minus, -1.0)):
        acc = np.zeros(probes)
        done = 0
        while done < half:
            size = min(20_000, half - done)
            F = gram(sampler(hold_rng, size), anchors, kernel) @ coef
            acc += loss.phi(sign * F).sum(axis=0)
            done += size
        true_risk += 0.5 * acc / half

    deviations = np.empty(trials)
    for t, trial_seq in enumerate(trial_root.spawn(trials)):
        rng = np.random.default_rng(trial_seq)
        risk = np.zeros(probes)
        for i, s in enumerate(stats):
            if weights[i] == 0:
                continue
            if setting == "llp":
                sim = sample_bag_pair(p_plus, p_minus, gamma_pairs[i], spec.source_size, spec.source_size, rng)
                X, y = sim.pair.points()
                rho, alpha = noise[i].rho, noise[i].alpha
            else:
                y_clean = np.where(rng.random(s.n) < 0.5, 1, -1)
                n_pos = int(np.count_nonzero(y_clean == 1))
                X = np.empty((s.n, spec.dim))
                X[y_clean == 1] = p_plus(rng, n_pos)
                X[y_clean == -1] = p_minus(rng, s.n - n_pos)
                flips = rng.random(s.n) < s.rho.flip_probability(y_clean)
                y = np.where(flips, -y_clean, y_clean).astype(float)
                rho, alpha = s.rho, None
            a, b = mixing_coefficients(alpha or UNIT_COST, rho, y)
            M = y[:, None] * (gram(X, anchors, kernel) @ coef)
            point = a[:, None] * loss.phi(M) - b[:, None] * loss.phi(-M)
            risk += weights[i] * point.mean(axis=0)
        deviations[t] = float(np.max(np.abs(risk - true_risk)))
    coverage = float(np.mean(deviations <= bound))
    return CoverageResult(coverage, bound, deviations, gamma_pairs)
