"""Learning from several label-noise-corrupted sources and from label proportions.

Corrected losses undo class-conditional label noise in expectation; bag
pairs with known proportions are treated as such noisy sources and combined
with bound-optimal weights in a Gaussian-kernel ERM.
"""

__version__ = "0.1.0"

from .errors import DivergenceError, DomainError, InputError, PreconditionError, UnsupportedLossError
from .losses import CostPair, MarginLoss, NoiseRates, corrected_loss, get_loss, huber, logistic, squared
from .kernel import KernelModel, KernelSpec, gram
from .weighting import SourceStats, optimal_weights, snr_coefficient
from .llp_model import Bag, BagPair, derive, pair_bags
from .solver import TrainConfig, TrainingProblem, convexity_certificate, train
from .bounds import BoundInputs, bound_common, bound_llp, bound_master, bound_varying_priors

__all__ = [
    "__version__",
    "Bag",
    "BagPair",
    "BoundInputs",
    "CostPair",
    "DivergenceError",
    "DomainError",
    "InputError",
    "KernelModel",
    "KernelSpec",
    "MarginLoss",
    "NoiseRates",
    "PreconditionError",
    "SourceStats",
    "TrainConfig",
    "TrainingProblem",
    "UnsupportedLossError",
    "bound_common",
    "bound_llp",
    "bound_master",
    "bound_varying_priors",
    "convexity_certificate",
    "corrected_loss",
    "derive",
    "get_loss",
    "gram",
    "huber",
    "logistic",
    "optimal_weights",
    "pair_bags",
    "snr_coefficient",
    "squared",
    "train",
]
