"""Experiment driver: configs, repeated runs, JSON records and report tables.

A run is fully determined by an :class:`ExperimentConfig` and a run index.
Run ``r`` uses seed ``config.seed + r``; every domain, the model init and the
adaptation draws get their own Philox stream derived from that seed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import itertools
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import datagen
from .evaluate import (
    adaptation_protocol,
    disentanglement_stats,
    invariant_accuracy,
    mean_stderr,
    select_and_train,
    selection_key,
    train_grid,
)
from .model import RepSplit, init_model, load_checkpoint, save_checkpoint
from .objectives import ActirHyper, BaselineHyper, train_actir, train_erm, train_irm, train_maml

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

log = logging.getLogger("actir")

TASKS = ("synthetic", "counterexample", "color_mnist")
METHODS = ("erm", "irm", "maml", "actir")
METHOD_LABELS = {"erm": "ERM", "irm": "IRM", "maml": "MAML", "actir": "ACTIR"}
SELECT_SCOPES = ("experiment", "run")
DIAGNOSTIC_BETA = 0.5
RECORD_VERSION = 1


@dataclass(frozen=True)
class AdaptSettings:
    n_support: tuple[int, ...] = (5, 10)
    repeats: int = 100
    steps: int = 20
    lr: float = 1e-2


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "synthetic"
    method: str = "actir"
    train_betas: tuple[float, ...] = (0.95, 0.7)
    val_beta: float = 0.6
    test_beta: float = 0.1
    n_per_domain: int = 1000
    n_test: Optional[int] = None
    k: int = 2
    m: int = 6
    hidden: tuple[int, ...] = (8, 8)
    downsample: int = 14
    actir: ActirHyper = field(default_factory=ActirHyper)
    baseline: BaselineHyper = field(default_factory=BaselineHyper)
    # validation grid; empty means train ``actir`` as given
    select: tuple[tuple[str, tuple], ...] = ()
    # "experiment": one grid point for all runs, by mean validation accuracy;
    # "run": each run keeps its own best grid point
    select_scope: str = "experiment"
    adapt: AdaptSettings = field(default_factory=AdaptSettings)
    seed: int = 0
    runs: int = 20
    out: str = "results"
    mnist_dir: Optional[str] = None
    workers: int = 1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        if not self.train_betas:
            raise ValueError("need at least one training domain")
        for b in (*self.train_betas, self.val_beta, self.test_beta):
            if not 0.0 <= b <= 1.0:
                raise ValueError(f"beta {b} outside [0, 1]")
        if self.n_per_domain < 1 or (self.n_test is not None and self.n_test < 1):
            raise ValueError("domain sizes must be positive")
        if any(n < 1 for n in self.adapt.n_support) or self.adapt.repeats < 1:
            raise ValueError("adaptation n_support and repeats must be positive")
        if self.select_scope not in SELECT_SCOPES:
            raise ValueError(f"unknown select_scope {self.select_scope!r}; expected one of {SELECT_SCOPES}")
        RepSplit(self.k, self.m)
        valid = {f.name for f in dataclasses.fields(ActirHyper)}
        for name, values in self.select:
            if name not in valid:
                raise ValueError(f"unknown selection axis {name!r}")
            if not values:
                raise ValueError(f"selection axis {name!r} is empty")

    # -- domains -----------------------------------------------------------

    @property
    def domain_betas(self) -> dict[str, float]:
        betas = {f"train{i}": b for i, b in enumerate(self.train_betas)}
        betas["val"] = self.val_beta
        betas["test"] = self.test_beta
        return betas

    @property
    def domain_sizes(self) -> dict[str, int]:
        sizes = {d: self.n_per_domain for d in self.domain_betas}
        sizes["test"] = self.n_test or self.n_per_domain
        return sizes

    @property
    def train_ids(self) -> list[str]:
        return [f"train{i}" for i in range(len(self.train_betas))]

    def grid(self) -> list[ActirHyper]:
        if not self.select:
            return [self.actir]
        names = [n for n, _ in self.select]
        return [
            dataclasses.replace(self.actir, **dict(zip(names, combo)))
            for combo in itertools.product(*(v for _, v in self.select))
        ]

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["select"] = {name: list(values) for name, values in self.select}
        return _lists(d)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "actir" in data:
            data["actir"] = ActirHyper(**data["actir"])
        if "baseline" in data:
            data["baseline"] = BaselineHyper(**data["baseline"])
        if "adapt" in data:
            a = dict(data["adapt"])
            if "n_support" in a:
                a["n_support"] = tuple(int(n) for n in a["n_support"])
            data["adapt"] = AdaptSettings(**a)
        if "select" in data:
            data["select"] = tuple((k, tuple(v)) for k, v in data["select"].items())
        for key in ("train_betas", "hidden"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def _lists(obj):
    if isinstance(obj, dict):
        return {k: _lists(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_lists(v) for v in obj]
    return obj


# Per-task defaults. The ACTIR selection grid is a small validation search
# that fits a 20-run synthetic experiment in under 10 minutes on one core.
SYNTHETIC_SELECT = {"gamma": [0.5, 0.9], "lambda_c": [1.0, 10.0], "lambda_g": [0.1]}

TASK_DEFAULTS = {
    "synthetic": {"train_betas": [0.95, 0.7], "val_beta": 0.6, "test_beta": 0.1, "select": SYNTHETIC_SELECT},
    "counterexample": {"train_betas": [0.95, 0.8], "val_beta": 0.2, "test_beta": 0.1, "select": SYNTHETIC_SELECT},
    "color_mnist": {
        "train_betas": [0.95, 0.7],
        "val_beta": 0.2,
        "test_beta": 0.1,
        "n_per_domain": 20000,
        "n_test": 10000,
        "hidden": [64, 64],
        "runs": 5,
        "actir": {"steps": 5000, "batch_size": 256},
        "baseline": {"steps": 5000, "batch_size": 256},
        "select": {"gamma": [0.5, 0.9], "lambda_c": [1.0, 10.0], "lambda_g": [0.1]},
    },
}


def default_config(task: str = "synthetic", method: str = "actir", **overrides) -> ExperimentConfig:
    if task not in TASK_DEFAULTS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    data = json.loads(json.dumps(TASK_DEFAULTS[task]))
    data.update(task=task, method=method)
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


def load_config(path) -> ExperimentConfig:
    """Read a TOML config; keys not given fall back to the task defaults."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    with path.open("rb") as fh:
        raw = tomllib.load(fh)
    task = raw.pop("task", "synthetic")
    method = raw.pop("method", "actir")
    base = default_config(task, method).to_dict()
    for key, value in raw.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict) and key != "select":
            base[key] = {**base[key], **value}
        else:
            base[key] = value
    return ExperimentConfig.from_dict(base)


# --------------------------------------------------------------------------
# single runs


def make_domains(config: ExperimentConfig, seed: int) -> dict:
    if config.task == "color_mnist" and config.mnist_dir is None:
        raise ValueError("color_mnist needs mnist_dir")
    return datagen.generate_domains(
        config.task,
        config.domain_betas,
        config.domain_sizes,
        seed,
        mnist_dir=config.mnist_dir,
        downsample=config.downsample,
    )


def _init(config: ExperimentConfig, n_features: int, seed: int):
    split = RepSplit(config.k, config.m)
    sizes = [n_features, *config.hidden, split.width]
    return init_model(split, sizes, datagen.domain_rng(seed, "init"), domains=config.train_ids)


def train_method(config: ExperimentConfig, domains: dict, seed: int):
    """Train ``config.method`` on the training domains.

    Returns ``(params, info)``; for ACTIR ``info`` holds the selected point
    and the validation score of every grid point. ACTIR selects on this one
    run's validation domain; :func:`run_experiment` pools runs instead when
    ``select_scope`` is ``"experiment"``.
    """
    train = {d: domains[d] for d in config.train_ids}
    n_features = domains["train0"].n_features
    rng = datagen.domain_rng(seed, "batches")
    if config.method == "actir":
        best, params, scored = select_and_train(
            config.grid(), train, domains["val"], lambda: _init(config, n_features, seed), rng
        )
        info = {
            "selected": dataclasses.asdict(best),
            "grid": [{"hyper": dataclasses.asdict(h), "val_acc": acc} for h, acc in scored],
        }
        return params, info
    params = _init(config, n_features, seed)
    trainer = {"erm": train_erm, "irm": train_irm, "maml": train_maml}[config.method]
    params, _ = trainer(params, train, config.baseline, rng)
    return params, {}


def grid_run(config: ExperimentConfig, run: int) -> list:
    """Every ACTIR grid point trained on run ``run``: ``[(hyper, params, val_acc), ...]``."""
    seed = config.seed + run
    domains = make_domains(config, seed)
    train = {d: domains[d] for d in config.train_ids}
    n_features = domains["train0"].n_features
    rng = datagen.domain_rng(seed, "batches")
    return train_grid(config.grid(), train, domains["val"], lambda: _init(config, n_features, seed), rng)


def pooled_selection(config: ExperimentConfig, grids: Sequence[list]) -> list[tuple]:
    """Pick one grid point by validation accuracy averaged over runs.

    ``grids[r]`` is :func:`grid_run` for run ``r``. Returns ``(params, info)``
    per run, where ``params`` were trained with the chosen point.
    """
    hypers = [h for h, _, _ in grids[0]]
    mean_val = {h: float(np.mean([g[i][2] for g in grids])) for i, h in enumerate(hypers)}
    order = sorted(hypers, key=lambda h: selection_key(h, mean_val[h]))
    best = order[0]
    out = []
    for g in grids:
        val = {h: acc for h, _, acc in g}
        info = {
            "selected": dataclasses.asdict(best),
            "grid": [{"hyper": dataclasses.asdict(h), "val_acc": val[h], "mean_val_acc": mean_val[h]} for h in order],
        }
        out.append((g[hypers.index(best)][1], info))
    return out


def run_single(config: ExperimentConfig, run: int, trained: Optional[tuple] = None) -> dict:
    """Train (unless ``trained = (params, info)`` is given), adapt and score run ``run``."""
    seed = config.seed + run
    t0 = time.perf_counter()
    domains = make_domains(config, seed)
    params, info = trained if trained is not None else train_method(config, domains, seed)
    adapt_rng = datagen.domain_rng(seed, "adapt")
    adaptation = {}
    for n in config.adapt.n_support:
        rep = adaptation_protocol(
            params, domains["test"], n, config.adapt.repeats, config.adapt.steps, config.adapt.lr, adapt_rng
        )
        adaptation[str(n)] = rep.to_dict()
    log.info("%s/%s run %d done in %.1fs", config.task, config.method, run, time.perf_counter() - t0)
    return {
        "version": RECORD_VERSION,
        "task": config.task,
        "method": config.method,
        "run": run,
        "seed": seed,
        "test_acc": invariant_accuracy(params, domains["test"]),
        "val_acc": invariant_accuracy(params, domains["val"]),
        "adaptation": adaptation,
        **info,
        "config": config.to_dict(),
    }


# --------------------------------------------------------------------------
# records and reports


def atomic_write(path, text: str) -> None:
    """Write-temp-then-rename so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def record_name(record: dict) -> str:
    return f"{record['task']}_{record['method']}_run{record['run']:03d}.json"


def dump_record(record: dict) -> str:
    return json.dumps(record, indent=1, sort_keys=True) + "\n"


class _Serial:
    """In-process stand-in for an executor."""

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False

    def map(self, fn, *iterables):
        return map(fn, *iterables)


def run_experiment(config: ExperimentConfig, out: Optional[str] = None) -> list[Path]:
    """Run every repeat of ``config``, write one JSON record per run and refresh the aggregate CSV."""
    out_dir = Path(out or config.out)
    if config.task == "color_mnist":
        datagen.find_mnist_files(config.mnist_dir)
    runs = list(range(config.runs))
    pooled = config.method == "actir" and config.select_scope == "experiment" and len(set(config.grid())) > 1
    with ProcessPoolExecutor(max_workers=config.workers) if config.workers > 1 and config.runs > 1 else _Serial() as pool:
        if pooled:
            trained = pooled_selection(config, list(pool.map(grid_run, itertools.repeat(config), runs)))
            records = list(pool.map(run_single, itertools.repeat(config), runs, trained))
        else:
            records = list(pool.map(run_single, itertools.repeat(config), runs))
    paths = []
    for rec in sorted(records, key=lambda r: r["run"]):
        path = out_dir / record_name(rec)
        atomic_write(path, dump_record(rec))
        paths.append(path)
    write_aggregate(out_dir)
    return paths


def load_records(result_dir) -> list[dict]:
    result_dir = Path(result_dir)
    files = sorted(result_dir.glob("*.json")) if result_dir.is_dir() else []
    if not files:
        raise FileNotFoundError(f"no result records in {result_dir}")
    records = []
    for f in files:
        try:
            rec = json.loads(f.read_text())
        except ValueError as exc:
            raise ValueError(f"malformed result record {f}: {exc}") from exc
        missing = [k for k in ("method", "run", "test_acc", "adaptation") if not isinstance(rec, dict) or k not in rec]
        if missing:
            raise ValueError(f"malformed result record {f}: missing {missing}")
        if rec["method"] not in METHODS:
            raise ValueError(f"malformed result record {f}: unknown method {rec['method']!r}")
        records.append(rec)
    return records


def aggregate(records: Sequence[dict]) -> list[dict]:
    """Rows ``(method, domain, n_support, mean, stderr)``; ``n_support = 0`` is the invariant predictor."""
    rows = []
    for method in METHODS:
        recs = sorted((r for r in records if r["method"] == method), key=lambda r: r["run"])
        if not recs:
            continue
        cells = {0: [r["test_acc"] for r in recs]}
        shots = sorted({int(n) for r in recs for n in r["adaptation"]})
        for n in shots:
            cells[n] = [r["adaptation"][str(n)]["mean"] for r in recs if str(n) in r["adaptation"]]
        for n, values in cells.items():
            mean, se = mean_stderr(values)
            rows.append({"method": method, "domain": "test", "n_support": n, "mean": mean, "stderr": se, "runs": len(values)})
    return rows


def write_aggregate(result_dir) -> Path:
    rows = aggregate(load_records(result_dir))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["method", "domain", "n_support", "mean", "stderr", "runs"], lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    path = Path(result_dir) / "aggregate.csv"
    atomic_write(path, buf.getvalue())
    return path


def emit_report(result_dir) -> str:
    """Fixed-width table, one row per method (ERM, IRM, MAML, ACTIR), accuracies in percent."""
    rows = aggregate(load_records(result_dir))
    shots = sorted({r["n_support"] for r in rows if r["n_support"] > 0})
    header = ["Method", "Test Acc."] + [f"Adaptation ({n})" for n in shots]
    table = [header]
    for method in METHODS:
        cells = {r["n_support"]: r for r in rows if r["method"] == method}
        if not cells:
            continue
        line = [METHOD_LABELS[method]]
        for n in [0, *shots]:
            c = cells.get(n)
            line.append("-" if c is None else f"{100 * c['mean']:.2f}±{100 * c['stderr']:.2f}")
        table.append(line)
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(row, widths))) for row in table]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# diagnostics and data export


def diagnose(config: ExperimentConfig, params=None, seed: Optional[int] = None, bins: int = 20):
    """Disentanglement statistics on a fresh domain with ``beta = 0.5``.

    At that beta the unstable factor is independent of the label, so a unit
    that encodes only label-stable features shows no shift with ``z``.
    """
    seed = config.seed if seed is None else seed
    if params is None:
        params, _ = train_method(dataclasses.replace(config, method="actir"), make_domains(config, seed), seed)
    betas = {"diagnostic": DIAGNOSTIC_BETA}
    sizes = {"diagnostic": max(config.n_per_domain, 1000)}
    if config.task == "color_mnist":
        probe = datagen.generate_domains(
            "color_mnist", betas, sizes, seed, config.mnist_dir, config.downsample, test_domains=("diagnostic",)
        )
    else:
        probe = datagen.generate_domains(config.task, betas, sizes, seed)
    return params, disentanglement_stats(params, probe["diagnostic"], bins=bins)


def histogram_csv(stats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["unit", "z", "bin_lo", "bin_hi", "count"])
    w.writerows(stats.histogram_rows())
    return buf.getvalue()


def save_domains(domains: dict, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for dom, ds in domains.items():
        path = out_dir / f"{dom}.npz"
        arrays = {"x": ds.x, "y": ds.y, "beta": np.array(ds.beta)}
        if ds.z is not None:
            arrays["z"] = ds.z
        np.savez(path, **arrays)
        paths.append(path)
    return paths


# --------------------------------------------------------------------------
# command line


def _config_from_args(args, task: Optional[str] = None, method: Optional[str] = None) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
        if task is not None or method is not None:
            cfg = dataclasses.replace(cfg, task=task or cfg.task, method=method or cfg.method)
    else:
        cfg = default_config(task or args.task, method or args.method)
    updates = {}
    for name in ("seed", "runs", "out", "mnist_dir", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            updates[name] = value
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _reproduce(args, task: str) -> int:
    out_root = Path(args.out or f"results/{task}")
    for method in METHODS:
        cfg = _config_from_args(args, task, method)
        cfg = dataclasses.replace(cfg, out=str(out_root))
        if cfg.task == "color_mnist" and cfg.mnist_dir is None:
            raise SystemExit("color_mnist needs --mnist-dir")
        log.info("running %s on %s (%d runs)", method, task, cfg.runs)
        run_experiment(cfg)
    print(emit_report(out_root))
    return 0


def cmd_gen_data(args) -> int:
    cfg = _config_from_args(args)
    paths = save_domains(make_domains(cfg, cfg.seed), args.out or cfg.out)
    for p in paths:
        print(p)
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    params, info = train_method(cfg, make_domains(cfg, cfg.seed), cfg.seed)
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, out / "model.json")
    if info:
        atomic_write(out / "selection.json", json.dumps(info, indent=1, sort_keys=True) + "\n")
    print(out / "model.json")
    return 0


def cmd_adapt(args) -> int:
    cfg = _config_from_args(args)
    params = load_checkpoint(args.checkpoint)
    test = make_domains(cfg, cfg.seed)["test"]
    result = {"test_acc": invariant_accuracy(params, test), "adaptation": {}}
    rng = datagen.domain_rng(cfg.seed, "adapt")
    for n in cfg.adapt.n_support:
        rep = adaptation_protocol(params, test, n, cfg.adapt.repeats, cfg.adapt.steps, cfg.adapt.lr, rng)
        result["adaptation"][str(n)] = {"mean": rep.mean, "stderr": rep.stderr}
    print(json.dumps(result, indent=1, sort_keys=True))
    return 0


def cmd_diagnose(args) -> int:
    cfg = _config_from_args(args)
    params = load_checkpoint(args.checkpoint) if args.checkpoint else None
    _, stats = diagnose(cfg, params)
    out = Path(args.out or cfg.out)
    atomic_write(out / "histograms.csv", histogram_csv(stats))
    summary = {
        "z_values": list(stats.z_values),
        "scores": stats.scores.tolist(),
        "means": stats.means.tolist(),
        "stds": stats.stds.tolist(),
        "invariant_units": list(range(cfg.k)),
    }
    atomic_write(out / "units.json", json.dumps(summary, indent=1) + "\n")
    for u, s in enumerate(stats.scores):
        kind = "invariant" if u < cfg.k else "adaptive"
        print(f"unit {u} ({kind}): z-dependence {s:.3f}")
    return 0


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    for p in run_experiment(cfg):
        print(p)
    return 0


def cmd_report(args) -> int:
    print(emit_report(args.results))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="actir", description="Anti-causal invariant and adaptive representation learning")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, task_method=True):
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--out")
        p.add_argument("--mnist-dir", dest="mnist_dir")
        p.add_argument("--workers", type=int)
        if task_method:
            p.add_argument("--task", choices=TASKS, default="synthetic")
            p.add_argument("--method", choices=METHODS, default="actir")

    p = sub.add_parser("gen-data", help="write every domain of one seed as .npz")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model and save a checkpoint")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="repeated runs with JSON records and aggregate CSV")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("adapt", help="few-shot adaptation of a checkpoint on the test domain")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("diagnose", help="per-unit z-dependence and activation histograms")
    common(p)
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("report", help="render the results table of a record directory")
    p.add_argument("results")
    p.set_defaults(func=cmd_report)

    for name, task in (("reproduce-table1", "synthetic"), ("reproduce-table3", "counterexample")):
        p = sub.add_parser(name, help=f"all four methods on the {task} task")
        common(p, task_method=False)
        p.set_defaults(func=lambda a, t=task: _reproduce(a, t))

    p = sub.add_parser("reproduce-color-mnist", help="all four methods on Color MNIST")
    common(p, task_method=False)
    p.set_defaults(func=lambda a: _reproduce(a, "color_mnist"))
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
