"""Command-line entry point: ``corrected-llp {pair,train,bound,experiment,simulate}``.

Exit codes: 0 on success, 2 for bad input (files, configs, preconditions),
3 when gradient descent diverges, 1 for an oracle mismatch.

Config files are flat ``key = value`` text; ``#`` starts a comment.  Lists
are comma separated.

Experiment keys (defaults in brackets):
  name [synthetic], path, label_column, positive_class, dim [2],
  separation [4], n_per_class [500], test_per_class [0],
  bag_sizes [2,4,8,16,32,64], repetitions [5], cv_folds [5],
  learning_rates [0.1,0.01,0.001], decays [0.01,0.001,0.0001],
  iterations [100,800,1600,3200], lams [0.001,0],
  bandwidths [0.001,0.1,1] (or auto for the median heuristic),
  seed [0], train_fraction [0.8], standardize [false], delta [0.05],
  baseline [false]

Train keys:
  learning_rate [0.01], decay [0], iterations [100], lam [0.001],
  bandwidth [auto], loss [logistic], init [zeros], seed [0],
  sizes_policy [strict]
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import networkx
import numpy as np
import scipy

from . import __version__
from .bounds import (
    SETTINGS,
    BoundInputs,
    CoverageSpec,
    bound_master,
    empirical_coverage,
    evaluate_bound,
    master_constants,
)
from .data_io import FLOAT_FMT, read_bags, write_model, write_pairing
from .errors import DivergenceError, DomainError, InputError, UnsupportedLossError
from .eval_harness import DEFAULT_DELTA, DatasetSpec, ExperimentConfig, Grid, run_experiment
from .kernel import KernelSpec, median_heuristic
from .llp_model import pair_bags, pair_bags_bruteforce
from .losses import NoiseRates, corrected_loss, get_loss
from .solver import TrainConfig, TrainingProblem, convexity_certificate, train
from .weighting import SourceStats, source_weights

EXIT_OK, EXIT_ORACLE, EXIT_INPUT, EXIT_DIVERGED = 0, 1, 2, 3
ORACLE_LIMIT = 10


# Config and manifest -------------------------------------------------------

def read_config(path) -> dict[str, str]:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    for k, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}: line {k} is not 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


class _Keys:
    """Typed access to config values that records unknown keys."""

    def __init__(self, values: dict[str, str], allowed: Sequence[str], source: str = "config"):
        unknown = sorted(set(values) - set(allowed))
        if unknown:
            raise InputError(f"unknown {source} key(s): {', '.join(unknown)}")
        self.values = values

    def _get(self, key, default, convert):
        if key not in self.values:
            return default
        try:
            return convert(self.values[key])
        except ValueError:
            raise InputError(f"bad value for {key!r}: {self.values[key]!r}") from None

    def text(self, key, default=None):
        return self._get(key, default, str)

    def integer(self, key, default):
        return self._get(key, default, int)

    def real(self, key, default):
        return self._get(key, default, float)

    def flag(self, key, default):
        def conv(v):
            if v.lower() in ("1", "true", "yes", "on"):
                return True
            if v.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(v)

        return self._get(key, default, conv)

    def numbers(self, key, default, convert=float):
        return self._get(key, default, lambda v: tuple(convert(x) for x in v.split(",") if x.strip()))


EXPERIMENT_KEYS = (
    "name", "path", "label_column", "positive_class", "dim", "separation", "n_per_class",
    "test_per_class", "bag_sizes", "repetitions", "cv_folds", "learning_rates", "decays",
    "iterations", "lams", "bandwidths", "seed", "train_fraction", "standardize", "delta", "baseline",
)
TRAIN_KEYS = (
    "learning_rate", "decay", "iterations", "lam", "bandwidth", "loss", "init", "seed", "sizes_policy",
)


def experiment_config(values: dict[str, str], seed=None, standardize=None, delta=None) -> ExperimentConfig:
    keys = _Keys(values, EXPERIMENT_KEYS)
    grid_defaults = Grid()
    bw = keys.text("bandwidths")
    bandwidths = None if bw == "auto" else keys.numbers("bandwidths", grid_defaults.bandwidths)
    grid = Grid(
        keys.numbers("learning_rates", grid_defaults.learning_rates),
        keys.numbers("decays", grid_defaults.decays),
        keys.numbers("iterations", grid_defaults.iterations, int),
        keys.numbers("lams", grid_defaults.lams),
        bandwidths,
    )
    dataset = DatasetSpec(
        keys.text("name", "synthetic"),
        keys.text("path"),
        keys.text("label_column"),
        keys.text("positive_class"),
        keys.integer("dim", 2),
        keys.real("separation", 4.0),
        keys.integer("n_per_class", 500),
        keys.integer("test_per_class", 0),
    )
    return ExperimentConfig(
        dataset,
        keys.numbers("bag_sizes", (2, 4, 8, 16, 32, 64), int),
        keys.integer("repetitions", 5),
        keys.integer("cv_folds", 5),
        grid,
        keys.integer("seed", 0) if seed is None else seed,
        keys.real("train_fraction", 0.8),
        keys.flag("standardize", False) if standardize is None else standardize,
        keys.real("delta", DEFAULT_DELTA) if delta is None else delta,
        keys.flag("baseline", False),
    )


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def build_manifest(command: str, config: dict, inputs: Sequence = (), outputs: Sequence = ()) -> dict:
    return {
        "command": command,
        "config": config,
        # Names only, so a run replays to the same hash from any directory.
        "inputs": {Path(p).name: _file_digest(p) for p in inputs},
        "outputs": [Path(p).name for p in outputs],
        "versions": {
            "corrected_llp": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "networkx": networkx.__version__,
        },
    }


def manifest_hash(manifest: dict) -> str:
    """SHA-256 of the canonical JSON form, ignoring ``timestamps`` and the stored hash."""
    body = {k: v for k, v in manifest.items() if k not in ("timestamps", "manifest_sha256")}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(out_dir: Path, manifest: dict, started: float) -> str:
    digest = manifest_hash(manifest)
    record = dict(manifest)
    record["manifest_sha256"] = digest
    record["timestamps"] = {"started": started, "finished": time.time()}
    (out_dir / "manifest.json").write_text(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")
    return digest


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _float_list(text: Optional[str]) -> Optional[list[float]]:
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


# Subcommands ---------------------------------------------------------------

def cmd_pair(args) -> int:
    started = time.time()
    bags = read_bags(args.bags, args.proportions)
    pairing = pair_bags(bags, args.sizes_policy)
    if args.oracle:
        if len(bags) > ORACLE_LIMIT:
            print(f"oracle skipped: {len(bags)} bags exceeds {ORACLE_LIMIT}", file=sys.stderr)
        else:
            brute = pair_bags_bruteforce(bags, args.sizes_policy)
            if abs(brute.objective - pairing.objective) > 1e-12:
                print(f"oracle mismatch: {pairing.objective!r} vs brute force {brute.objective!r}", file=sys.stderr)
                return EXIT_ORACLE
            print("oracle: brute force agrees")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(
        "pair", {"sizes_policy": args.sizes_policy, "oracle": args.oracle}, [args.bags, args.proportions], [out]
    )
    digest = manifest_hash(manifest)
    weights = pairing.weights() if pairing.usable else np.zeros(len(pairing.pairs))
    write_pairing(out, pairing.pairs, weights, f"manifest: {digest}\n# objective: {FLOAT_FMT.format(pairing.objective)}")
    if args.out_dir:
        write_manifest(_out_dir(args), manifest, started)
    print(f"pairs: {len(pairing.pairs)} (zero gap: {len(pairing.dropped)})")
    print(f"objective: {FLOAT_FMT.format(pairing.objective)}")
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.time()
    keys = _Keys(read_config(args.config) if args.config else {}, TRAIN_KEYS)
    seed = keys.integer("seed", 0) if args.seed is None else args.seed
    loss = get_loss(keys.text("loss", "logistic"))
    bags = read_bags(args.bags, args.proportions)
    pairing = pair_bags(bags, keys.text("sizes_policy", "strict"))
    usable = pairing.usable
    if not usable:
        raise InputError("no usable pairs: every bag pair has zero gap")
    bw = keys.text("bandwidth", "auto")
    if bw == "auto":
        bandwidth = median_heuristic(np.vstack([p.points()[0] for p in usable]))
    else:
        bandwidth = keys.real("bandwidth", None)
    lam = keys.real("lam", 0.001)
    config = TrainConfig(
        keys.real("learning_rate", 0.01),
        keys.real("decay", 0.0),
        keys.integer("iterations", 100),
        seed,
        keys.text("init", "zeros"),
    )
    problem = TrainingProblem.from_pairs(usable, KernelSpec(bandwidth), lam, loss)
    cert = convexity_certificate(problem)
    print(f"convexity certificate: convex={cert.convex} lhs={FLOAT_FMT.format(cert.lhs)}")
    result = train(problem, config)
    print(f"final objective: {FLOAT_FMT.format(result.final_objective)}")
    print(f"monotone: {result.monotone}")

    out = _out_dir(args)
    model_path = out / "model.txt"
    resolved = {**asdict(config), "lam": lam, "bandwidth": bandwidth, "loss": loss.name,
                "sizes_policy": keys.text("sizes_policy", "strict")}
    manifest = build_manifest("train", resolved, [args.bags, args.proportions], [model_path])
    digest = write_manifest(out, manifest, started)
    write_model(model_path, result.model, lam, f"manifest: {digest}")
    print(f"model written to {model_path}")
    return EXIT_OK


def _bound_sources(args) -> tuple[list[SourceStats], str]:
    n = _float_list(args.n)
    if not n:
        raise InputError("--n is required (comma-separated sample counts)")
    count = len(n)

    def column(text, name):
        values = _float_list(text)
        if values is None:
            return None
        if len(values) == 1:
            values = values * count
        if len(values) != count:
            raise InputError(f"--{name} has {len(values)} entries for {count} sources")
        return values

    rp, rm = column(args.rho_plus, "rho-plus"), column(args.rho_minus, "rho-minus")
    pi = column(args.pi, "pi")
    gp, gm = column(args.gamma_plus, "gamma-plus"), column(args.gamma_minus, "gamma-minus")
    sources = []
    for k in range(count):
        rho = NoiseRates(rp[k], rm[k]) if rp is not None and rm is not None else None
        gammas = (gp[k], gm[k]) if gp is not None and gm is not None else None
        sources.append(SourceStats(int(n[k]), rho, None if pi is None else pi[k], gammas))
    return sources, args.setting


def cmd_bound(args) -> int:
    started = time.time()
    sources, setting = _bound_sources(args)
    loss = get_loss(args.loss)
    L = loss.lipschitz if args.L is None else args.L
    phi0 = loss.value_at_zero if args.phi0 is None else args.phi0
    if args.weights == "optimal":
        weights = source_weights(sources, setting)
    elif args.weights == "uniform":
        weights = np.full(len(sources), 1.0 / len(sources))
    else:
        weights = np.array(_float_list(args.weights))
    inputs = BoundInputs(args.R, args.K, L, phi0, args.delta, weights, sources)
    rows = []
    if not args.master_only:
        value = evaluate_bound(inputs, setting)
        rows.append((setting, value.value, list(value.contributions)))
    if args.master or args.master_only:
        master = bound_master(inputs, master_constants(inputs, setting))
        rows.append((f"master:{setting}", master, []))

    config = {
        "setting": setting, "R": args.R, "K": args.K, "L": L, "phi0": phi0, "delta": args.delta,
        "weights": [float(w) for w in weights], "n": args.n, "rho_plus": args.rho_plus,
        "rho_minus": args.rho_minus, "pi": args.pi, "gamma_plus": args.gamma_plus,
        "gamma_minus": args.gamma_minus,
    }
    out_path = Path(args.out) if args.out else None
    manifest = build_manifest("bound", config, [], [out_path] if out_path else [])
    digest = manifest_hash(manifest)
    header = ["setting", "delta", "R", "bound_value"] + [f"contribution_{k + 1}" for k in range(len(sources))]
    lines = [f"# manifest: {digest}", ",".join(header)]
    for name, value, contrib in rows:
        cells = [name, FLOAT_FMT.format(args.delta), FLOAT_FMT.format(args.R), FLOAT_FMT.format(value)]
        cells += [FLOAT_FMT.format(c) for c in contrib] + [""] * (len(sources) - len(contrib))
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if out_path:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(text)
    if args.out_dir:
        write_manifest(_out_dir(args), manifest, started)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_experiment(args) -> int:
    started = time.time()
    values = read_config(args.config) if args.config else {}
    config = experiment_config(values, args.seed, True if args.standardize else None, args.delta)
    report = run_experiment(config)
    out = _out_dir(args)
    paths = [out / "summary.csv", out / "runs.csv", out / "table.txt"]
    inputs = [config.dataset.path] if config.dataset.path else []
    manifest = build_manifest("experiment", asdict(config), inputs, paths)
    digest = write_manifest(out, manifest, started)
    report.write_csv(paths[0], f"manifest: {digest}")
    report.write_runs_csv(paths[1], f"manifest: {digest}")
    table = report.table()
    paths[2].write_text(f"# manifest: {digest}\n{table}")
    sys.stdout.write(table)
    return EXIT_OK


def _simulate_unbiased(args, rng) -> tuple[list[str], list[list]]:
    rho = NoiseRates(args.rho_plus, args.rho_minus)
    loss = get_loss(args.loss)
    rows = []
    for t in _float_list(args.t):
        for y in (1, -1):
            flips = rng.random(args.samples) < rho.flip_probability(y)
            y_noisy = np.where(flips, -y, y)
            mc = float(np.mean(corrected_loss(loss, rho, t, y_noisy)))
            clean = float(loss.value(t, y))
            rows.append([t, y, mc, clean, abs(mc - clean)])
    return ["t", "y", "monte_carlo_mean", "clean_loss", "abs_error"], rows


def cmd_simulate(args) -> int:
    started = time.time()
    out = _out_dir(args)
    seed = 0 if args.seed is None else args.seed
    if args.kind == "unbiased":
        header, rows = _simulate_unbiased(args, np.random.default_rng(seed))
    else:
        spec = CoverageSpec(separation=args.separation, n_sources=args.n_sources, source_size=args.source_size)
        result = empirical_coverage(args.setting, spec, args.R, args.delta, args.trials, args.probes, seed)
        header = ["setting", "delta", "R", "trials", "probes", "bound", "coverage", "max_deviation"]
        rows = [[args.setting, args.delta, args.R, args.trials, args.probes, result.bound,
                 result.coverage, float(result.deviations.max())]]
    path = out / f"{args.kind}.csv"
    config = {k: v for k, v in vars(args).items() if k not in ("func", "out_dir")}
    config["seed"] = seed
    manifest = build_manifest("simulate", config, [], [path])
    digest = write_manifest(out, manifest, started)
    lines = [f"# manifest: {digest}", ",".join(header)]
    for row in rows:
        lines.append(",".join(FLOAT_FMT.format(v) if isinstance(v, float) else str(v) for v in row))
    text = "\n".join(lines) + "\n"
    path.write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# Parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--out-dir", help="directory for outputs and manifest.json")
    common.add_argument("--delta", type=float, default=None, help=f"confidence parameter [{DEFAULT_DELTA}]")

    parser = argparse.ArgumentParser(
        prog="corrected-llp",
        description="Corrected-loss learning from label proportions.",
        epilog=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pair", parents=[common], help="match bags into pairs")
    p.add_argument("--bags", required=True, help="bag instances CSV (bag_id, features...)")
    p.add_argument("--proportions", required=True, help="sidecar CSV (bag_id, gamma, size)")
    p.add_argument("--out", required=True, help="pairing CSV to write")
    p.add_argument("--oracle", action="store_true", help=f"cross-check by brute force (<= {ORACLE_LIMIT} bags)")
    p.add_argument("--sizes-policy", choices=("strict", "permissive"), default="strict")
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("train", parents=[common], help="train on bags with prescribed weights")
    p.add_argument("--bags", required=True)
    p.add_argument("--proportions", required=True)
    p.set_defaults(func=cmd_train, out_dir=".")

    p = sub.add_parser("bound", parents=[common], help="evaluate a generalization bound")
    p.add_argument("--setting", choices=SETTINGS, default="common")
    p.add_argument("--n", help="comma-separated sample counts, one per source")
    p.add_argument("--rho-plus")
    p.add_argument("--rho-minus")
    p.add_argument("--pi")
    p.add_argument("--gamma-plus")
    p.add_argument("--gamma-minus")
    p.add_argument("--weights", default="optimal", help="optimal, uniform, or a comma-separated list")
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--K", type=float, default=1.0)
    p.add_argument("--L", type=float, default=None, help="Lipschitz constant [from --loss]")
    p.add_argument("--phi0", type=float, default=None, help="phi(0) [from --loss]")
    p.add_argument("--loss", default="logistic")
    p.add_argument("--master", action="store_true", help="also evaluate the general bound")
    p.add_argument("--master-only", action="store_true")
    p.add_argument("--out", help="CSV file to write (stdout always receives a copy)")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("experiment", parents=[common], help="run the repeated LLP protocol")
    p.add_argument("--standardize", action="store_true", help="standardize features with training statistics")
    p.set_defaults(func=cmd_experiment, out_dir=".")

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo unbiasedness or bound coverage")
    p.add_argument("kind", choices=("unbiased", "coverage"))
    p.add_argument("--rho-plus", type=float, default=0.3)
    p.add_argument("--rho-minus", type=float, default=0.1)
    p.add_argument("--t", default="-1,0,1")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--loss", default="logistic")
    p.add_argument("--setting", choices=("common", "llp"), default="llp")
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--probes", type=int, default=50)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--n-sources", type=int, default=20)
    p.add_argument("--source-size", type=int, default=32)
    p.set_defaults(func=cmd_simulate, out_dir=".")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("bound", "simulate") and args.delta is None:
        args.delta = DEFAULT_DELTA
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (InputError, DomainError, UnsupportedLossError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
