"""Reduction of learning from label proportions to corrupted sources.

A pair of bags with proportions ``gamma_plus > gamma_minus`` is read as one
corrupted sample: instances of the first bag carry the noisy label +1, those of
the second bag -1.  Under the bag-pair model this sample is distributed as a
label-noise corruption of a clean distribution with prior
``(gamma_plus + gamma_minus) / 2``; :func:`derive` returns that prior, the
flip rates and the balancing costs.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from . import matching
from .errors import DomainError, InputError
from .losses import CostPair, NoiseRates
from .weighting import llp_weights

log = logging.getLogger(__name__)

Sampler = Callable[[np.random.Generator, int], np.ndarray]

# gamma values without hidden labels are snapped to a nearby small-denominator
# rational only when they agree with it to this tolerance.
GAMMA_TOL = 1e-12


@dataclass
class Bag:
    """Unlabeled instances annotated with the fraction of +1 members.

    ``hidden_labels`` exist only in simulation; the training path never reads them.
    """

    instances: np.ndarray
    gamma: float
    hidden_labels: Optional[np.ndarray] = None
    bag_id: Optional[int] = None

    def __post_init__(self):
        self.instances = np.atleast_2d(np.asarray(self.instances, dtype=float))
        if len(self.instances) == 0:
            raise DomainError("a bag must contain at least one instance")
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError(f"gamma must lie in [0, 1], got {self.gamma!r}")
        if self.hidden_labels is not None:
            labels = np.asarray(self.hidden_labels)
            if len(labels) != len(self.instances):
                raise DomainError("hidden_labels and instances differ in length")
            if self.gamma != np.count_nonzero(labels == 1) / len(labels):
                raise DomainError("gamma must equal the fraction of +1 hidden labels")

    @property
    def size(self) -> int:
        return len(self.instances)

    def exact_gamma(self) -> Fraction:
        """Exact rational proportion: count/size with labels, else a snapped float."""
        if self.hidden_labels is not None:
            return Fraction(int(np.count_nonzero(np.asarray(self.hidden_labels) == 1)), self.size)
        exact = Fraction(self.gamma)
        snapped = exact.limit_denominator(10**6)
        return snapped if abs(float(snapped) - self.gamma) <= GAMMA_TOL else exact

    def without_labels(self) -> "Bag":
        return Bag(self.instances, self.gamma, None, self.bag_id)


@dataclass
class BagPair:
    """Two bags oriented so that ``pos_bag`` has the larger proportion."""

    pos_bag: Bag
    neg_bag: Bag
    gamma_plus: float = field(init=False)
    gamma_minus: float = field(init=False)

    def __post_init__(self):
        self.gamma_plus = self.pos_bag.gamma
        self.gamma_minus = self.neg_bag.gamma
        if self.gamma_plus < self.gamma_minus:
            raise DomainError(
                f"pos_bag proportion {self.gamma_plus} is below neg_bag proportion {self.gamma_minus}"
            )

    @property
    def gap(self) -> float:
        return self.gamma_plus - self.gamma_minus

    @property
    def zero_gap(self) -> bool:
        return self.pos_bag.exact_gamma() == self.neg_bag.exact_gamma()

    @property
    def n_plus(self) -> int:
        return self.pos_bag.size

    @property
    def n_minus(self) -> int:
        return self.neg_bag.size

    @property
    def n(self) -> int:
        return self.n_plus + self.n_minus

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Instances and their pseudo-labels (+1 from ``pos_bag``, -1 from ``neg_bag``)."""
        X = np.vstack([self.pos_bag.instances, self.neg_bag.instances])
        y = np.concatenate([np.ones(self.n_plus), -np.ones(self.n_minus)])
        return X, y


@dataclass(frozen=True)
class PairDerived:
    pi: float
    rho: NoiseRates
    alpha: CostPair


def _gammas(pair_or_gammas) -> tuple[float, float]:
    if isinstance(pair_or_gammas, BagPair):
        return pair_or_gammas.gamma_plus, pair_or_gammas.gamma_minus
    gp, gm = pair_or_gammas
    return float(gp), float(gm)


def derive(pair) -> PairDerived:
    """Clean prior, flip rates and costs under which a bag pair is a corrupted sample.

    ``pair`` is a :class:`BagPair` or a ``(gamma_plus, gamma_minus)`` tuple.
    """
    gp, gm = _gammas(pair)
    if not 0.0 <= gm < gp <= 1.0:
        raise DomainError(f"need 0 <= gamma_minus < gamma_plus <= 1, got ({gp!r}, {gm!r})")
    s = gp + gm
    rho = NoiseRates(gm / s, (1.0 - gp) / (2.0 - s))
    return PairDerived(s / 2.0, rho, CostPair(1.0 / s, 1.0 / (2.0 - s)))


def noise_identity_residual(pair) -> float:
    """``|(1 - rho- - rho+) - (g+ - g-) / ((g+ + g-)(2 - g+ - g-))|``."""
    gp, gm = _gammas(pair)
    derived = derive((gp, gm))
    s = gp + gm
    return abs(derived.rho.gap - (gp - gm) / (s * (2.0 - s)))


def gaussian_sampler(mean, scale: float = 1.0) -> Sampler:
    mean = np.asarray(mean, dtype=float)

    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        return mean + scale * rng.standard_normal((size, mean.size))

    return sample


@dataclass
class SimulatedPair:
    """A bag pair drawn from the bag-pair model plus its latent mixture components.

    The bags carry the nominal proportions; ``pos_components`` and
    ``neg_components`` hold +1 where an instance was drawn from ``P_plus``.
    """

    pair: BagPair
    pos_components: np.ndarray
    neg_components: np.ndarray

    @property
    def empirical_gamma_plus(self) -> float:
        return float(np.mean(self.pos_components == 1))

    @property
    def empirical_gamma_minus(self) -> float:
        return float(np.mean(self.neg_components == 1))


def _draw_mixture(p_plus, p_minus, weight, size, rng):
    comp = np.where(rng.random(size) < weight, 1, -1)
    n_pos = int(np.count_nonzero(comp == 1))
    xp = p_plus(rng, n_pos)
    xm = p_minus(rng, size - n_pos)
    X = np.empty((size, xp.shape[1]))
    X[comp == 1] = xp
    X[comp == -1] = xm
    return X, comp


def sample_bag_pair(
    p_plus: Sampler,
    p_minus: Sampler,
    gamma_pair: tuple[float, float],
    m_pos: int,
    m_neg: int,
    seed,
) -> SimulatedPair:
    """Draw ``m_pos`` instances from ``g+ P+ + (1-g+) P-`` and ``m_neg`` from ``g- P+ + (1-g-) P-``."""
    gp, gm = gamma_pair
    if not 0.0 <= gm < gp <= 1.0:
        raise DomainError(f"need 0 <= gamma_minus < gamma_plus <= 1, got {gamma_pair!r}")
    if m_pos < 1 or m_neg < 1:
        raise DomainError("bag sizes must be positive")
    rng = np.random.default_rng(seed)
    X_pos, c_pos = _draw_mixture(p_plus, p_minus, gp, m_pos, rng)
    X_neg, c_neg = _draw_mixture(p_plus, p_minus, gm, m_neg, rng)
    pair = BagPair(Bag(X_pos, gp), Bag(X_neg, gm))
    return SimulatedPair(pair, c_pos, c_neg)


@dataclass
class LabeledSample:
    X: np.ndarray
    y: np.ndarray
    y_noisy: np.ndarray


def sample_via_flip(p_plus: Sampler, p_minus: Sampler, derived: PairDerived, n: int, seed) -> LabeledSample:
    """Draw ``(X, Y)`` with prior ``derived.pi`` and flip ``Y`` with rates ``derived.rho``."""
    if n < 1:
        raise DomainError("sample size must be positive")
    rng = np.random.default_rng(seed)
    X, y = _draw_mixture(p_plus, p_minus, derived.pi, n, rng)
    flip = rng.random(n) < derived.rho.flip_probability(y)
    return LabeledSample(X, y, np.where(flip, -y, y))


@dataclass
class Pairing:
    """Result of :func:`pair_bags`.

    ``pairs`` holds every matched pair, oriented; ``index_pairs`` the matching
    on original bag positions as ``(pos_index, neg_index)``.
    """

    pairs: list[BagPair]
    index_pairs: list[tuple[int, int]]
    objective: float

    @property
    def usable(self) -> list[BagPair]:
        """Pairs with a positive gap."""
        return [p for p in self.pairs if not p.zero_gap]

    @property
    def dropped(self) -> list[BagPair]:
        return [p for p in self.pairs if p.zero_gap]

    def weights(self) -> np.ndarray:
        """Prescribed weights ``∝ n_i gap_i^2`` over all pairs (0 for zero-gap pairs)."""
        gaps = [0.0 if p.zero_gap else p.gap for p in self.pairs]
        return llp_weights([p.n for p in self.pairs], gaps)


def _exact_weights(bags: Sequence[Bag], weight_sizes: bool):
    gammas = [b.exact_gamma() for b in bags]
    denom = 1
    for g in gammas:
        denom = denom * g.denominator // np.gcd(denom, g.denominator)
    ints = [int(g * denom) for g in gammas]
    n = len(bags)
    if not weight_sizes:
        return ints, None
    sizes = [b.size for b in bags]
    W = [[(sizes[i] + sizes[j]) * (ints[i] - ints[j]) ** 2 for j in range(n)] for i in range(n)]
    return ints, W


def _orient(bags: Sequence[Bag], pairs) -> tuple[list[BagPair], list[tuple[int, int]]]:
    out, idx = [], []
    for i, j in pairs:
        gi, gj = bags[i].exact_gamma(), bags[j].exact_gamma()
        pos, neg = (i, j) if gi >= gj else (j, i)
        out.append(BagPair(bags[pos], bags[neg]))
        idx.append((pos, neg))
    return out, idx


def _check_bags(bags: Sequence[Bag], policy: str) -> bool:
    if policy not in ("strict", "permissive"):
        raise DomainError(f"sizes policy must be 'strict' or 'permissive', got {policy!r}")
    if len(bags) % 2:
        raise InputError(f"pairing needs an even number of bags, got {len(bags)}")
    if len(bags) == 0:
        raise InputError("no bags to pair")
    equal = len({b.size for b in bags}) == 1
    if not equal and policy == "strict":
        raise InputError("bags differ in size; use the permissive sizes policy to pair them anyway")
    return equal


def pair_bags(bags: Sequence[Bag], sizes_policy: str = "strict") -> Pairing:
    """Pair ``2N`` bags to maximize ``sum (gamma_i - gamma_j)^2`` over the pairs.

    With unequal sizes (``sizes_policy="permissive"``) the edge weight is
    ``(m_i + m_j)(gamma_i - gamma_j)^2``.  The optimum is exact and ties go to
    the lexicographically smallest matching in original bag order.
    """
    equal = _check_bags(bags, sizes_policy)
    if equal:
        ints, _ = _exact_weights(bags, weight_sizes=False)
        pairs = matching.squared_gap_matching(ints)
        objective = sum((bags[i].gamma - bags[j].gamma) ** 2 for i, j in pairs)
    else:
        warnings.warn(
            "pairing bags of unequal size; the bag-pair model assumes equal expected sizes",
            stacklevel=2,
        )
        _, W = _exact_weights(bags, weight_sizes=True)
        pairs = matching.max_weight_perfect_matching(W)
        objective = sum((bags[i].size + bags[j].size) * (bags[i].gamma - bags[j].gamma) ** 2 for i, j in pairs)
    oriented, idx = _orient(bags, pairs)
    log.debug("paired %d bags, objective %.6g", len(bags), objective)
    return Pairing(oriented, idx, objective)


def pair_bags_blossom(bags: Sequence[Bag], sizes_policy: str = "strict") -> Pairing:
    """Same contract as :func:`pair_bags` but always through the general blossom solver."""
    equal = _check_bags(bags, sizes_policy)
    _, W = _exact_weights(bags, weight_sizes=True)
    pairs = matching.max_weight_perfect_matching(W)
    return _finish(bags, pairs, equal)


def pair_bags_bruteforce(bags: Sequence[Bag], sizes_policy: str = "strict") -> Pairing:
    """Exhaustive oracle for :func:`pair_bags` (at most 12 bags)."""
    equal = _check_bags(bags, sizes_policy)
    _, W = _exact_weights(bags, weight_sizes=True)
    pairs = matching.brute_force_matching(W)
    return _finish(bags, pairs, equal)


def _finish(bags, pairs, equal) -> Pairing:
    if equal:
        objective = sum((bags[i].gamma - bags[j].gamma) ** 2 for i, j in pairs)
    else:
        objective = sum((bags[i].size + bags[j].size) * (bags[i].gamma - bags[j].gamma) ** 2 for i, j in pairs)
    oriented, idx = _orient(bags, pairs)
    return Pairing(oriented, idx, objective)


def strip_labels(pairs: Sequence[BagPair]) -> list[BagPair]:
    """Copies of ``pairs`` whose bags carry no hidden labels."""
    return [BagPair(p.pos_bag.without_labels(), p.neg_bag.without_labels()) for p in pairs]
