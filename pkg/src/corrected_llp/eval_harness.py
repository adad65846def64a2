"""Metrics, bag-pair cross-validation and the repeated LLP experiment protocol."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bounds import BoundInputs, bound_master, master_constants
from .data_io import (
    Dataset,
    load_csv,
    make_bags,
    split,
    standardize,
    synth_gaussians,
)
from .errors import DivergenceError, DomainError, InputError
from .kernel import KernelSpec, gram, median_heuristic
from .llp_model import BagPair, pair_bags, strip_labels
from .losses import logistic
from .solver import Source, TrainConfig, TrainingProblem, sources_from_pairs, train
from .weighting import SourceStats

log = logging.getLogger(__name__)

DEFAULT_DELTA = 0.05


# Metrics ------------------------------------------------------------------

def predict(decision_values) -> np.ndarray:
    """Sign rule with ``sign(0) = +1``."""
    return np.where(np.asarray(decision_values, dtype=float) >= 0, 1, -1)


def _labels(true_labels) -> np.ndarray:
    y = np.asarray(true_labels).ravel()
    if not np.all(np.abs(y) == 1):
        raise DomainError("true labels must be +1 or -1")
    return y


def ber(decision_values, true_labels) -> float:
    """Balanced error rate: mean of the error rates on the +1 and on the -1 examples."""
    y = _labels(true_labels)
    pred = predict(decision_values).ravel()
    if pred.shape != y.shape:
        raise DomainError(f"{pred.size} predictions for {y.size} labels")
    pos, neg = y == 1, y == -1
    if not pos.any() or not neg.any():
        raise DomainError("balanced error needs both classes in the true labels")
    return 0.5 * (float(np.mean(pred[pos] != 1)) + float(np.mean(pred[neg] != -1)))


def balanced_accuracy(decision_values, true_labels) -> float:
    return 1.0 - ber(decision_values, true_labels)


def accuracy(decision_values, true_labels) -> float:
    y = _labels(true_labels)
    if y.size == 0:
        raise DomainError("accuracy of an empty prediction set is undefined")
    pred = predict(decision_values).ravel()
    if pred.shape != y.shape:
        raise DomainError(f"{pred.size} predictions for {y.size} labels")
    return float(np.mean(pred == y))


# Hyperparameters ----------------------------------------------------------

@dataclass(frozen=True)
class Hyperparameters:
    learning_rate: float
    decay: float
    iterations: int
    lam: float
    bandwidth: float

    def train_config(self, seed: int = 0) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.decay, self.iterations, seed)


@dataclass(frozen=True)
class Grid:
    """Tuning grid; cells are enumerated in product order of the fields below.

    ``bandwidths=None`` means one bandwidth from the median heuristic on the
    training instances, resolved by :meth:`resolved`.
    """

    learning_rates: tuple[float, ...] = (0.1, 0.01, 0.001)
    decays: tuple[float, ...] = (0.01, 0.001, 0.0001)
    iterations: tuple[int, ...] = (100, 800, 1600, 3200)
    lams: tuple[float, ...] = (0.001, 0.0)
    bandwidths: Optional[tuple[float, ...]] = (0.001, 0.1, 1.0)

    def __post_init__(self):
        for name in ("learning_rates", "decays", "iterations", "lams", "bandwidths"):
            if name == "bandwidths" and self.bandwidths is None:
                continue
            values = tuple(getattr(self, name))
            if not values:
                raise DomainError(f"grid axis {name!r} is empty")
            object.__setattr__(self, name, values)

    def resolved(self, X) -> "Grid":
        """Fill in the median-heuristic bandwidth from instances ``X`` if unset."""
        if self.bandwidths is not None:
            return self
        return replace(self, bandwidths=(median_heuristic(X),))

    def cells(self) -> list[Hyperparameters]:
        if self.bandwidths is None:
            raise DomainError("grid bandwidth unresolved; call resolved(X) first")
        return [
            Hyperparameters(lr, dc, int(it), lam, bw)
            for lr, dc, it, lam, bw in itertools.product(
                self.learning_rates, self.decays, self.iterations, self.lams, self.bandwidths
            )
        ]

    def __len__(self) -> int:
        n_bw = 1 if self.bandwidths is None else len(self.bandwidths)
        return len(self.learning_rates) * len(self.decays) * len(self.iterations) * len(self.lams) * n_bw


# Cross-validation ---------------------------------------------------------

@dataclass
class CVResult:
    best: Hyperparameters
    cells: list[Hyperparameters]
    mean_risk: np.ndarray


def fold_indices(n_items: int, folds: int, seed) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n_items)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def _fold_risks(train_pairs, val_pairs, grid: Grid, loss) -> dict[Hyperparameters, float]:
    """Validation corrected risk of every grid cell for one fold."""
    out = {}
    train_sources = sources_from_pairs(train_pairs)
    val_sources = sources_from_pairs(val_pairs)
    checkpoints = sorted(set(grid.iterations))
    for bw in grid.bandwidths:
        kernel = KernelSpec(bw)
        X_train = np.vstack([s.X for s in train_sources])
        G = gram(X_train, X_train, kernel)
        val_problem = TrainingProblem(val_sources, kernel, 0.0, loss)
        cross = gram(val_problem.X, X_train, kernel)
        for lr, dc, lam in itertools.product(grid.learning_rates, grid.decays, grid.lams):
            problem = TrainingProblem(train_sources, kernel, lam, loss, G)
            config = TrainConfig(lr, dc, max(checkpoints))
            try:
                snapshots = train(problem, config, checkpoints).snapshots
            except DivergenceError as exc:
                snapshots = exc.snapshots
            for it in checkpoints:
                cell = Hyperparameters(lr, dc, it, lam, bw)
                if it in snapshots:
                    risk = val_problem.risk_at(cross @ snapshots[it])
                    out[cell] = risk if math.isfinite(risk) else math.inf
                else:
                    out[cell] = math.inf
    return out


def cross_validate(
    bag_pairs: Sequence[BagPair],
    grid: Grid,
    folds: int = 5,
    seed=0,
    loss=None,
) -> CVResult:
    """Pick the grid cell with the smallest mean validation corrected risk.

    Folds partition the bag pairs.  Validation weights and noise parameters
    are recomputed from each validation fold's proportions.  A cell that
    diverges scores ``inf``; ties go to the earlier cell in grid order.
    """
    loss = loss or logistic()
    pairs = [p for p in bag_pairs if not p.zero_gap]
    if folds < 2:
        raise DomainError(f"need at least 2 folds, got {folds}")
    if len(pairs) < folds:
        raise InputError(f"{len(pairs)} usable bag pairs cannot fill {folds} folds")
    grid = grid.resolved(np.vstack([p.points()[0] for p in pairs]))
    cells = grid.cells()
    totals = np.zeros(len(cells))
    for k, val_idx in enumerate(fold_indices(len(pairs), folds, seed)):
        held = set(val_idx.tolist())
        train_pairs = [p for j, p in enumerate(pairs) if j not in held]
        val_pairs = [pairs[j] for j in val_idx]
        risks = _fold_risks(train_pairs, val_pairs, grid, loss)
        totals += np.array([risks[c] for c in cells])
        log.debug("fold %d done", k)
    mean = totals / folds
    best = int(np.argmin(mean))  # first minimum, so ties follow grid order
    return CVResult(cells[best], cells, mean)


def fit_pairs(pairs: Sequence[BagPair], hp: Hyperparameters, loss=None, seed: int = 0):
    """Train on all usable pairs with the prescribed weights."""
    problem = TrainingProblem.from_pairs(pairs, KernelSpec(hp.bandwidth), hp.lam, loss or logistic())
    return problem, train(problem, hp.train_config(seed))


def supervised_baseline(X, y, hp: Hyperparameters, loss=None, seed: int = 0):
    """Kernel logistic regression on clean labels with the same optimizer settings."""
    source = Source(X, y)
    problem = TrainingProblem([source], KernelSpec(hp.bandwidth), hp.lam, loss or logistic())
    return train(problem, hp.train_config(seed)).model


# Experiment protocol -----------------------------------------------------

@dataclass(frozen=True)
class DatasetSpec:
    """Either a user CSV (``path`` set) or the synthetic Gaussian family."""

    name: str = "synthetic"
    path: Optional[str] = None
    label_column: Optional[str] = None
    positive_class: Optional[str] = None
    dim: int = 2
    separation: float = 4.0
    n_per_class: int = 500
    test_per_class: int = 0

    def load(self, seed) -> Dataset:
        if self.path is not None:
            if self.label_column is None or self.positive_class is None:
                raise InputError("a CSV dataset needs label_column and positive_class")
            return load_csv(self.path, self.label_column, self.positive_class)
        return synth_gaussians(self.dim, self.separation, self.n_per_class, seed)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    bag_sizes: tuple[int, ...] = (2, 4, 8, 16, 32, 64)
    repetitions: int = 5
    cv_folds: int = 5
    grid: Grid = field(default_factory=Grid)
    seed: int = 0
    train_fraction: float = 0.8
    standardize: bool = False
    delta: float = DEFAULT_DELTA
    baseline: bool = False

    def __post_init__(self):
        if not self.bag_sizes:
            raise DomainError("bag_sizes is empty")
        if self.repetitions < 1:
            raise DomainError("repetitions must be >= 1")
        if self.cv_folds < 2:
            raise DomainError("cv_folds must be >= 2")


@dataclass
class RunRecord:
    """One repetition at one bag size."""

    repetition: int
    bag_size: int
    balanced_accuracy: float
    accuracy: float
    chosen: Hyperparameters
    norm: float
    bound: float
    pairs_used: int
    pairs_dropped: int
    baseline_balanced_accuracy: Optional[float] = None


@dataclass
class ExperimentReport:
    dataset: str
    bag_sizes: tuple[int, ...]
    records: list[RunRecord]
    delta: float = DEFAULT_DELTA

    def _at(self, bag_size):
        return [r for r in self.records if r.bag_size == bag_size]

    def summary(self) -> list[dict]:
        """Per bag size: mean and standard deviation over repetitions."""
        rows = []
        for b in self.bag_sizes:
            recs = self._at(b)
            ba = np.array([r.balanced_accuracy for r in recs])
            acc = np.array([r.accuracy for r in recs])
            ddof = 1 if len(recs) > 1 else 0
            row = {
                "dataset": self.dataset,
                "bag_size": b,
                "repetitions": len(recs),
                "balanced_accuracy_mean": float(ba.mean()),
                "balanced_accuracy_std": float(ba.std(ddof=ddof)),
                "accuracy_mean": float(acc.mean()),
                "accuracy_std": float(acc.std(ddof=ddof)),
                "bound_mean": float(np.mean([r.bound for r in recs])),
            }
            base = [r.baseline_balanced_accuracy for r in recs if r.baseline_balanced_accuracy is not None]
            if base:
                row["baseline_balanced_accuracy_mean"] = float(np.mean(base))
            rows.append(row)
        return rows

    def write_csv(self, path, header_comment: Optional[str] = None) -> None:
        rows = self.summary()
        keys = list(rows[0].keys())
        with Path(path).open("w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write(",".join(keys) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(row[k]) for k in keys) + "\n")

    def write_runs_csv(self, path, header_comment: Optional[str] = None) -> None:
        keys = [
            "repetition", "bag_size", "balanced_accuracy", "accuracy", "learning_rate", "decay",
            "iterations", "lam", "bandwidth", "norm", "bound", "pairs_used", "pairs_dropped",
        ]
        with Path(path).open("w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write(",".join(keys) + "\n")
            for r in self.records:
                values = {**asdict(r), **asdict(r.chosen)}
                fh.write(",".join(_fmt(values[k]) for k in keys) + "\n")

    def table(self) -> str:
        """Two aligned blocks (balanced accuracy, then accuracy), bag sizes as columns."""
        rows = {row["bag_size"]: row for row in self.summary()}
        head = ["dataset", "method"] + [str(b) for b in self.bag_sizes]
        blocks = []
        for title, key in (("balanced accuracy", "balanced_accuracy"), ("accuracy", "accuracy")):
            body = [[self.dataset, "corrected loss"] + [
                f"{rows[b][key + '_mean']:.4f} ± {rows[b][key + '_std']:.4f}" for b in self.bag_sizes
            ]]
            widths = [max(len(r[k]) for r in [head] + body) for k in range(len(head))]
            lines = [title]
            for r in [head] + body:
                lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"


def _fmt(value) -> str:
    if isinstance(value, float):
        return "{:.17g}".format(value)
    return str(value)


def repetition_seed(master_seed: int, repetition: int) -> int:
    """Fixed arithmetic so any single repetition can be replayed on its own."""
    return int(master_seed) * 1000 + int(repetition)


def _bound_at_norm(pairs: Sequence[BagPair], norm: float, delta: float, loss) -> float:
    """General bound at ``R = ||f||`` with bag-pair loss constants (valid for any ``R > 0``)."""
    stats = [SourceStats(p.n, gamma_pair=(p.gamma_plus, p.gamma_minus)) for p in pairs]
    weights = np.array([s.weight for s in sources_from_pairs(pairs)])
    R = max(norm, np.finfo(float).tiny)
    inputs = BoundInputs(R, 1.0, loss.lipschitz, loss.value_at_zero, delta, weights, stats)
    return bound_master(inputs, master_constants(inputs, "llp"))


def run_single(
    train_set: Dataset,
    test_set: Dataset,
    bag_size: int,
    config: ExperimentConfig,
    rep_seed: int,
    repetition: int = 0,
    loss=None,
) -> RunRecord:
    """Bag, pair, cross-validate, train and evaluate once."""
    loss = loss or logistic()
    context = f"{config.dataset.name}, bag size {bag_size}, repetition {repetition}"
    try:
        bags = make_bags(train_set, bag_size, rep_seed)
        if len(bags) % 2:
            bags = bags[:-1]
        if len(bags) < 2:
            raise InputError(f"only {len(bags)} bag(s); pairing needs at least 2")
        # The learner never sees instance labels past this point.
        pairing = pair_bags([b.without_labels() for b in bags])
        usable = strip_labels(pairing.usable)
        if not usable:
            raise InputError("no usable pairs: every bag pair has zero gap")
        # Large bags leave few pairs; shrink the fold count rather than fail.
        folds = min(config.cv_folds, len(usable))
        if folds < 2:
            raise InputError(f"only {len(usable)} usable pair(s); cross-validation needs 2")
        cv = cross_validate(usable, config.grid, folds, rep_seed, loss)
        problem, result = fit_pairs(usable, cv.best, loss, rep_seed)
    except (InputError, DomainError) as exc:
        raise type(exc)(f"{context}: {exc}") from exc
    model = result.model
    scores = model.decision_function(test_set.features)
    norm = math.sqrt(model.rkhs_norm_sq())
    record = RunRecord(
        repetition,
        bag_size,
        balanced_accuracy(scores, test_set.labels),
        accuracy(scores, test_set.labels),
        cv.best,
        norm,
        _bound_at_norm(usable, norm, config.delta, loss),
        len(usable),
        len(pairing.dropped),
    )
    if config.baseline:
        base = supervised_baseline(train_set.features, train_set.labels, cv.best, loss, rep_seed)
        record.baseline_balanced_accuracy = balanced_accuracy(
            base.decision_function(test_set.features), test_set.labels
        )
    return record


def prepare_repetition(config: ExperimentConfig, repetition: int) -> tuple[Dataset, Dataset]:
    """Load, split (and optionally extend the test set / standardize) for one repetition."""
    seed = repetition_seed(config.seed, repetition)
    data = config.dataset.load(seed)
    train_set, test_set = split(data, config.train_fraction, seed)
    spec = config.dataset
    if spec.path is None and spec.test_per_class > 0:
        test_set = synth_gaussians(spec.dim, spec.separation, spec.test_per_class, seed + 500)
    if config.standardize:
        train_set, test_set = standardize(train_set, test_set)
    return train_set, test_set


def run_experiment(config: ExperimentConfig, loss=None) -> ExperimentReport:
    """Repeat the full protocol; within a repetition every bag size shares the split."""
    records = []
    for r in range(config.repetitions):
        train_set, test_set = prepare_repetition(config, r)
        seed = repetition_seed(config.seed, r)
        for b in config.bag_sizes:
            records.append(run_single(train_set, test_set, b, config, seed, r, loss))
            log.info("%s rep %d bag %d: BA %.4f", config.dataset.name, r, b, records[-1].balanced_accuracy)
    return ExperimentReport(config.dataset.name, tuple(config.bag_sizes), records, config.delta)
