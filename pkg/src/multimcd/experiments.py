"""Experiment runners behind the command line: train, eval, ablate, bench.

Runs are configured by a flat TOML file (see ``configs/toy.toml``); every key
is a field of :class:`RunConfig`, and unknown keys are rejected.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    DatasetSplit,
    ToySpec,
    boundary_grid,
    load_csv,
    make_toy,
    padded_bounds,
    write_boundary_csv,
    write_boundary_ppm,
)
from .losses import LossVariant
from .model import ModelSpec, init_model, load_checkpoint, save_checkpoint
from .training import TrainConfig, evaluate, train, train_source_only, write_metrics_csv

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # task
    task: str = "toy"  # toy | csv
    source_csv: str = ""
    target_csv: str = ""
    output_dir: str = "runs/default"
    method: str = "adapt"  # adapt | source_only
    # toy data
    n_per_domain: int = 300
    rotation_deg: float = 30.0
    noise_sigma: float = 0.1
    # model
    feature_dim: int = 8
    extractor_hidden: list = field(default_factory=lambda: [16, 16])
    head_hidden: list = field(default_factory=lambda: [16])
    # training
    n_classifiers: int = 3
    epochs: int = 300
    pretrain_epochs: int = 100
    batch_size: int = 32
    lr: float = 0.05
    step3_repeats: int = 4
    seed: int = 0
    variant: str = "full"
    source_step: bool = True
    # outputs
    boundary_resolution: int = 100
    write_ppm: bool = True
    # ablation
    ablation_seeds: int = 5
    ablation_remove: str = "remove:1-2"
    ablation_duplicate: str = "duplicate:1-2:1-3"
    # bench
    n_list: list = field(default_factory=lambda: [2, 3, 4, 5, 6])

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.task not in ("toy", "csv"):
            raise ConfigError(f"task: expected 'toy' or 'csv', got {self.task!r}")
        if self.task == "csv" and not (self.source_csv and self.target_csv):
            raise ConfigError("task = 'csv' needs source_csv and target_csv")
        if self.method not in ("adapt", "source_only"):
            raise ConfigError(f"method: expected 'adapt' or 'source_only', got {self.method!r}")
        if not self.n_list or any(int(n) < 2 for n in self.n_list):
            raise ConfigError("n_list: needs at least one entry, each >= 2")
        if self.boundary_resolution < 2:
            raise ConfigError("boundary_resolution: must be >= 2")
        if self.ablation_seeds < 1:
            raise ConfigError("ablation_seeds: must be >= 1")
        try:
            self.train_config()
            self.model_spec(2, 2)
            ToySpec(self.n_per_domain, self.rotation_deg, self.noise_sigma, self.seed)
            LossVariant.parse(self.ablation_remove)
            LossVariant.parse(self.ablation_duplicate)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self, **changes) -> TrainConfig:
        kw = dict(
            n_classifiers=self.n_classifiers, epochs=self.epochs, batch_size=self.batch_size,
            lr=self.lr, step3_repeats=self.step3_repeats, seed=self.seed,
            variant=LossVariant.parse(self.variant), pretrain_epochs=self.pretrain_epochs,
            source_step=self.source_step,
        )
        kw.update(changes)
        return TrainConfig(**kw)

    def model_spec(self, input_dim, n_classes, n_classifiers=None) -> ModelSpec:
        return ModelSpec(
            input_dim=input_dim, feature_dim=self.feature_dim,
            extractor_hidden=tuple(self.extractor_hidden), head_hidden=tuple(self.head_hidden),
            n_classifiers=n_classifiers or self.n_classifiers, n_classes=n_classes,
        )

    def to_toml(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_toml_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return str(v)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_DEFAULTS = RunConfig()


def _coerce(key, value):
    expected = type(getattr(_DEFAULTS, key))
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if expected is bool and not isinstance(value, bool):
        raise ConfigError(f"{key}: expected true/false, got {value!r}")
    if expected is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if expected is list:
        if not isinstance(value, list) or not all(isinstance(x, int) for x in value):
            raise ConfigError(f"{key}: expected a list of integers, got {value!r}")
    elif not isinstance(value, expected):
        raise ConfigError(f"{key}: expected {expected.__name__}, got {value!r}")
    return value


def load_config(path=None, **overrides) -> RunConfig:
    """Read a flat TOML file, then apply ``overrides`` (None values are skipped)."""
    values = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            values = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    values.update({k: v for k, v in overrides.items() if v is not None})
    for key in values:
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
    return RunConfig(**{k: _coerce(k, v) for k, v in values.items()})


# -- data -------------------------------------------------------------------

def build_split(cfg: RunConfig, seed: int | None = None) -> DatasetSplit:
    if cfg.task == "csv":
        return load_csv(cfg.source_csv, cfg.target_csv)
    seed = cfg.seed if seed is None else seed
    return make_toy(ToySpec(cfg.n_per_domain, cfg.rotation_deg, cfg.noise_sigma, seed))


def fit(cfg: RunConfig, split: DatasetSplit, seed=None, **changes):
    """Initialise and train one model; returns ``(model, history)``."""
    tc = cfg.train_config(**({"seed": seed} if seed is not None else {}), **changes)
    spec = cfg.model_spec(split.input_dim, split.n_classes, tc.n_classifiers)
    model = init_model(spec, tc.seed)
    if cfg.method == "source_only":
        return train_source_only(model, split, tc)
    return train(model, split, tc)


# -- commands ---------------------------------------------------------------

def run_train(cfg: RunConfig) -> Path:
    """Train once and write metrics.csv, boundary.csv/.ppm, model.ckpt, config.toml."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    split = build_split(cfg)
    model, history = fit(cfg, split)

    (out / "config.toml").write_text(cfg.to_toml())
    write_metrics_csv(history, out / "metrics.csv")
    save_checkpoint(model, out / "model.ckpt")
    if split.input_dim == 2:
        grid = boundary_grid(model, padded_bounds(split.source_x, split.target_x),
                             cfg.boundary_resolution)
        write_boundary_csv(grid, out / "boundary.csv")
        if cfg.write_ppm:
            write_boundary_ppm(grid, out / "boundary.ppm")
    else:
        log.info("input is %d-D; no decision boundary written", split.input_dim)
    return out


def run_eval(checkpoint, cfg: RunConfig) -> dict:
    model = load_checkpoint(checkpoint)
    split = build_split(cfg)
    if split.input_dim != model.spec.input_dim or split.n_classes > model.spec.n_classes:
        raise ConfigError(
            f"dataset ({split.input_dim} features, {split.n_classes} classes) does not fit "
            f"checkpoint ({model.spec.input_dim} features, {model.spec.n_classes} classes)"
        )
    ev = evaluate(model, split)
    return {
        "source_accuracy": ev.source_accuracy,
        "target_accuracy": ev.target_accuracy,
        "target_risk": ev.target_risk,
        "source_per_head": ev.source_per_head,
        "target_per_head": ev.target_per_head,
    }


ABLATION_BASELINE = "mcd_n2"


def run_ablation(cfg: RunConfig) -> tuple[list[str], list[list]]:
    """Final target accuracy of full / remove / duplicate (n heads) and n=2, per seed."""
    if cfg.n_classifiers < 3:
        raise ConfigError(
            f"ablation needs n_classifiers >= 3 (a closed loop of at least three pairs); "
            f"got {cfg.n_classifiers}"
        )
    variants = ["full", cfg.ablation_remove, cfg.ablation_duplicate]
    header = ["seed", *variants, ABLATION_BASELINE]
    rows = []
    for seed in range(cfg.seed, cfg.seed + cfg.ablation_seeds):
        split = build_split(cfg, seed)
        if not split.has_target_labels:
            raise ConfigError("ablation needs target labels for evaluation")
        row = [seed]
        for v in variants:
            model, _ = fit(cfg, split, seed, variant=LossVariant.parse(v))
            row.append(evaluate(model, split).target_accuracy)
        model, _ = fit(cfg, split, seed, n_classifiers=2, variant=LossVariant.full())
        row.append(evaluate(model, split).target_accuracy)
        rows.append(row)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_table(out / "ablation.csv", header, rows)
    return header, rows


@dataclass
class BenchRow:
    n: int
    mean_epoch_ms: float
    std_epoch_ms: float
    epochs_timed: int
    final_target_accuracy: float | None


def run_bench(cfg: RunConfig) -> tuple[list[BenchRow], list[str]]:
    """Per-epoch adaptation time for each n (first epoch dropped) plus discrepancy curves.

    Returns the table and a list of warnings for any n whose mean epoch time is
    lower than the previous n's.
    """
    split = build_split(cfg)
    table, curves = [], {}
    for n in cfg.n_list:
        model, history = fit(cfg, split, n_classifiers=int(n), variant=LossVariant.full())
        epoch_ms = [r.wall_time_ms for r in history if r.phase == "epoch"][1:]
        last = [r for r in history if r.phase == "epoch"]
        table.append(BenchRow(
            int(n),
            float(np.mean(epoch_ms)) if epoch_ms else math.nan,
            float(np.std(epoch_ms)) if epoch_ms else math.nan,
            len(epoch_ms),
            last[-1].target_accuracy if last else None,
        ))
        curves[int(n)] = [r.mean_discrepancy for r in history if r.phase == "adapt"]

    warnings = []
    for prev, cur in zip(table, table[1:]):
        if cur.mean_epoch_ms < prev.mean_epoch_ms:
            msg = (f"epoch time decreased from n={prev.n} ({prev.mean_epoch_ms:.3f} ms) "
                   f"to n={cur.n} ({cur.mean_epoch_ms:.3f} ms)")
            warnings.append(msg)
            log.warning(msg)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_table(out / "bench.csv",
                 ["n", "mean_epoch_ms", "std_epoch_ms", "epochs_timed", "final_target_accuracy"],
                 [dataclasses.astuple(r) for r in table])
    length = max(len(c) for c in curves.values())
    _write_table(out / "curves.csv",
                 ["iteration", *[f"mean_discrepancy_n{n}" for n in curves]],
                 [[i, *[c[i] if i < len(c) else None for c in curves.values()]] for i in range(length)])
    return table, warnings


def _write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
