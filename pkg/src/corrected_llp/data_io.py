"""Datasets: CSV ingestion, splitting, bagging, label noise and synthetic Gaussians.

Every randomized operation takes an explicit seed (anything accepted by
``numpy.random.default_rng``) and is replayable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .errors import DomainError, InputError
from .llp_model import Bag, BagPair
from .losses import NoiseRates

FLOAT_FMT = "{:.17g}"


@dataclass
class Dataset:
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    class_names: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int).ravel()
            if len(self.labels) != len(self.features):
                raise DomainError(f"{len(self.features)} rows but {len(self.labels)} labels")
            if not np.all(np.abs(self.labels) == 1):
                raise DomainError("labels must be +1 or -1")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def prior(self) -> float:
        """Fraction of +1 labels."""
        if self.labels is None:
            raise DomainError("dataset has no labels")
        return float(np.mean(self.labels == 1))

    def subset(self, idx) -> "Dataset":
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.features[idx], labels, dict(self.class_names))


def load_csv(path, label_column: str, positive_class) -> Dataset:
    """Read a headed CSV; rows whose label equals ``positive_class`` become +1, all others -1.

    Every non-label column must be numeric.  Errors name the offending data
    row (1-based, header excluded) and column.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if label_column not in header:
            raise InputError(f"{path}: no column named {label_column!r} (have {header})")
        li = header.index(label_column)
        feature_names = [h for k, h in enumerate(header) if k != li]
        positive = str(positive_class).strip()
        rows, labels, seen = [], [], set()
        for r, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
            values = []
            for k, cell in enumerate(row):
                if k == li:
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise InputError(
                        f"{path}: row {r}, column {header[k]!r}: non-numeric value {cell!r}"
                    ) from None
            label = row[li].strip()
            seen.add(label)
            rows.append(values)
            labels.append(1 if label == positive else -1)
    if not rows:
        raise InputError(f"{path}: no data rows")
    names = {"positive": positive, "negative": sorted(seen - {positive}), "features": feature_names}
    return Dataset(np.array(rows), np.array(labels), names)


def write_csv(path, dataset: Dataset, label_column: str = "label") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        d = dataset.features.shape[1]
        w.writerow([f"feature_{k + 1}" for k in range(d)] + [label_column])
        for k, row in enumerate(dataset.features):
            label = "" if dataset.labels is None else int(dataset.labels[k])
            w.writerow([FLOAT_FMT.format(v) for v in row] + [label])


def split(dataset: Dataset, train_fraction: float = 0.8, seed=0) -> tuple[Dataset, Dataset]:
    """Uniform random split; the training part has ``ceil(train_fraction * n)`` rows."""
    if not 0.0 < train_fraction < 1.0:
        raise DomainError(f"train_fraction must lie in (0, 1), got {train_fraction!r}")
    n = len(dataset)
    n_train = math.ceil(train_fraction * n - 1e-9)
    if n_train < 1 or n_train >= n:
        raise DomainError(f"a {train_fraction} split of {n} rows leaves an empty part")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))


def standardize(train: Dataset, *others: Dataset):
    """Scale features to zero mean and unit variance using training statistics only."""
    mu = train.features.mean(axis=0)
    sd = train.features.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)

    def apply(ds: Dataset) -> Dataset:
        return Dataset((ds.features - mu) / sd, ds.labels, dict(ds.class_names))

    return (apply(train),) + tuple(apply(o) for o in others)


def make_bags(train: Dataset, bag_size: int, seed=0) -> list[Bag]:
    """Shuffle and cut into consecutive bags of ``bag_size``; a partial last bag is dropped."""
    if train.labels is None:
        raise DomainError("bagging needs labels to compute the proportions")
    if bag_size < 1:
        raise DomainError(f"bag_size must be >= 1, got {bag_size}")
    n = len(train)
    if bag_size > n:
        raise DomainError(f"bag_size {bag_size} exceeds the {n} available rows")
    perm = np.random.default_rng(seed).permutation(n)
    bags = []
    for k in range(n // bag_size):
        idx = perm[k * bag_size:(k + 1) * bag_size]
        labels = train.labels[idx]
        gamma = np.count_nonzero(labels == 1) / bag_size
        bags.append(Bag(train.features[idx], gamma, labels, bag_id=k))
    return bags


def inject_noise(dataset: Dataset, rho: NoiseRates, seed=0) -> tuple[Dataset, np.ndarray]:
    """Flip each +1 with probability ``rho_plus`` and each -1 with ``rho_minus``.

    Returns the corrupted dataset and the boolean flip mask.
    """
    if dataset.labels is None:
        raise DomainError("noise injection needs labels")
    rng = np.random.default_rng(seed)
    flips = rng.random(len(dataset)) < rho.flip_probability(dataset.labels)
    noisy = np.where(flips, -dataset.labels, dataset.labels)
    return Dataset(dataset.features, noisy, dict(dataset.class_names)), flips


def synth_gaussians(dim: int, mean_separation: float, n_per_class: int, seed=0) -> Dataset:
    """Unit-covariance Gaussians at ``+/- (mean_separation / 2) e_1``, +1 rows first."""
    if dim < 1:
        raise DomainError("dim must be >= 1")
    if mean_separation < 0:
        raise DomainError("mean_separation must be >= 0")
    rng = np.random.default_rng(seed)
    shift = np.zeros(dim)
    shift[0] = mean_separation / 2.0
    X = np.vstack([
        shift + rng.standard_normal((n_per_class, dim)),
        -shift + rng.standard_normal((n_per_class, dim)),
    ])
    y = np.concatenate([np.ones(n_per_class, int), -np.ones(n_per_class, int)])
    return Dataset(X, y, {"positive": "+e1", "negative": ["-e1"]})


def synth_samplers(dim: int, mean_separation: float):
    """Samplers for the two class-conditionals used by :func:`synth_gaussians`."""
    from .llp_model import gaussian_sampler

    shift = np.zeros(dim)
    shift[0] = mean_separation / 2.0
    return gaussian_sampler(shift), gaussian_sampler(-shift)


def bayes_ber(mean_separation: float) -> float:
    """Balanced error of the Bayes classifier for :func:`synth_gaussians`: ``Phi(-s/2)``."""
    return float(norm.cdf(-mean_separation / 2.0))


# Bag and pairing files ----------------------------------------------------

def write_bags(bags_path, proportions_path, bags: Sequence[Bag]) -> None:
    """``bag_id, feature_1..feature_d`` rows plus a ``bag_id, gamma, size`` sidecar."""
    d = bags[0].instances.shape[1]
    with Path(bags_path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bag_id"] + [f"feature_{k + 1}" for k in range(d)])
        for k, bag in enumerate(bags):
            bid = k if bag.bag_id is None else bag.bag_id
            for row in bag.instances:
                w.writerow([bid] + [FLOAT_FMT.format(v) for v in row])
    with Path(proportions_path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bag_id", "gamma", "size"])
        for k, bag in enumerate(bags):
            bid = k if bag.bag_id is None else bag.bag_id
            w.writerow([bid, FLOAT_FMT.format(bag.gamma), bag.size])


def _data_rows(path):
    with Path(path).open(newline="") as fh:
        for r, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            yield r, row


def read_bags(bags_path, proportions_path) -> list[Bag]:
    """Inverse of :func:`write_bags`; bags come back in sidecar order, without labels."""
    instances: dict[str, list] = {}
    header = None
    for r, row in _data_rows(bags_path):
        if header is None:
            header = row
            if header[0].strip() != "bag_id":
                raise InputError(f"{bags_path}: first column must be bag_id")
            continue
        if len(row) != len(header):
            raise InputError(f"{bags_path}: line {r + 1} has {len(row)} fields, expected {len(header)}")
        try:
            values = [float(v) for v in row[1:]]
        except ValueError:
            raise InputError(f"{bags_path}: line {r + 1}: non-numeric feature") from None
        instances.setdefault(row[0].strip(), []).append(values)
    if header is None:
        raise InputError(f"{bags_path}: empty file")
    bags, seen_header = [], False
    for r, row in _data_rows(proportions_path):
        if not seen_header:
            if [h.strip() for h in row[:3]] != ["bag_id", "gamma", "size"]:
                raise InputError(f"{proportions_path}: header must be bag_id,gamma,size")
            seen_header = True
            continue
        if len(row) < 3:
            raise InputError(f"{proportions_path}: line {r + 1} is incomplete")
        bid = row[0].strip()
        try:
            gamma, size = float(row[1]), int(row[2])
        except ValueError:
            raise InputError(f"{proportions_path}: line {r + 1}: bad gamma or size") from None
        if bid not in instances:
            raise InputError(f"{proportions_path}: bag {bid!r} has no instances")
        X = np.array(instances[bid])
        if len(X) != size:
            raise InputError(f"bag {bid!r}: sidecar size {size} but {len(X)} instance rows")
        try:
            numeric_id = int(bid)
        except ValueError:
            numeric_id = None
        try:
            bags.append(Bag(X, gamma, None, numeric_id))
        except DomainError as exc:
            raise InputError(f"bag {bid!r}: {exc}") from None
    if not bags:
        raise InputError(f"{proportions_path}: no bags listed")
    return bags


def write_pairing(path, pairs: Sequence[BagPair], weights, header_comment: str | None = None) -> None:
    """``pair_id, pos_bag_id, neg_bag_id, gamma_plus, gamma_minus, weight``."""
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["pair_id", "pos_bag_id", "neg_bag_id", "gamma_plus", "gamma_minus", "weight"])
        for k, (p, wk) in enumerate(zip(pairs, weights)):
            w.writerow([
                k, p.pos_bag.bag_id, p.neg_bag.bag_id,
                FLOAT_FMT.format(p.gamma_plus), FLOAT_FMT.format(p.gamma_minus), FLOAT_FMT.format(wk),
            ])


# Model files ---------------------------------------------------------------

def write_model(path, model, lam: float, header_comment: str | None = None) -> None:
    """Flat text: ``bandwidth``, ``lambda``, then one ``coefficient, features...`` row per anchor."""
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bandwidth", FLOAT_FMT.format(model.kernel.bandwidth)])
        w.writerow(["lambda", FLOAT_FMT.format(lam)])
        d = model.anchors.shape[1]
        w.writerow(["coefficient"] + [f"feature_{k + 1}" for k in range(d)])
        for c, row in zip(model.coefficients, model.anchors):
            w.writerow([FLOAT_FMT.format(c)] + [FLOAT_FMT.format(v) for v in row])


def read_model(path):
    """Inverse of :func:`write_model`; returns ``(KernelModel, lam)``."""
    from .kernel import KernelModel, KernelSpec

    rows = [row for _, row in _data_rows(path)]
    try:
        if rows[0][0] != "bandwidth" or rows[1][0] != "lambda" or rows[2][0] != "coefficient":
            raise InputError(f"{path}: not a model file")
        bandwidth, lam = float(rows[0][1]), float(rows[1][1])
        body = np.array([[float(v) for v in row] for row in rows[3:]])
    except (IndexError, ValueError):
        raise InputError(f"{path}: malformed model file") from None
    if body.ndim != 2 or body.shape[0] == 0:
        raise InputError(f"{path}: model has no anchors")
    return KernelModel(body[:, 1:], body[:, 0], KernelSpec(bandwidth)), lam
