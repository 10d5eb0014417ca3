"""Shared feature extractor with ``n`` classifier heads."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import ParamBlock, Tensor


class ModelSpecError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int = 2
    feature_dim: int = 8
    extractor_hidden: tuple[int, ...] = (16, 16)
    head_hidden: tuple[int, ...] = (16,)
    n_classifiers: int = 3
    n_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "extractor_hidden", tuple(self.extractor_hidden))
        object.__setattr__(self, "head_hidden", tuple(self.head_hidden))
        self.validate()

    def validate(self):
        for name in ("input_dim", "feature_dim"):
            if int(getattr(self, name)) < 1:
                raise ModelSpecError(f"{name} must be a positive integer")
        if any(h < 1 for h in self.extractor_hidden + self.head_hidden):
            raise ModelSpecError("hidden layer widths must be positive")
        if self.n_classifiers < 2:
            raise ModelSpecError(
                f"n_classifiers must be >= 2, got {self.n_classifiers}"
            )
        if self.n_classes < 2:
            raise ModelSpecError(f"n_classes must be >= 2, got {self.n_classes}")

    def extractor_widths(self) -> list[int]:
        return [self.input_dim, *self.extractor_hidden, self.feature_dim]

    def head_widths(self) -> list[int]:
        return [self.feature_dim, *self.head_hidden, self.n_classes]


def _glorot_block(name, widths, rng) -> ParamBlock:
    tensors = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-a, a, size=(fan_in, fan_out))
        tensors.append(Tensor(w, requires_grad=True, name=f"{name}.w{i}"))
        tensors.append(Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.b{i}"))
    return ParamBlock(name, tensors)


def _mlp(block: ParamBlock, x, relu_last: bool):
    tensors = block.tensors
    n_layers = len(tensors) // 2
    h = x
    for i in range(n_layers):
        h = ad.add(ad.matmul(h, tensors[2 * i]), tensors[2 * i + 1])
        if i < n_layers - 1 or relu_last:
            h = ad.relu(h)
    return h


@dataclass
class MultiClassifierModel:
    spec: ModelSpec
    extractor: ParamBlock
    heads: list[ParamBlock]
    # Fixed input standardization (fitted on source data only); not trained.
    input_mean: np.ndarray = field(default=None)
    input_std: np.ndarray = field(default=None)

    def __post_init__(self):
        d = self.spec.input_dim
        if self.input_mean is None:
            self.input_mean = np.zeros(d)
        if self.input_std is None:
            self.input_std = np.ones(d)

    @property
    def blocks(self) -> list[ParamBlock]:
        return [self.extractor, *self.heads]

    def set_trainable(self, extractor: bool, heads: bool):
        self.extractor.trainable = extractor
        for h in self.heads:
            h.trainable = heads

    def fit_standardization(self, x):
        x = np.asarray(x, dtype=np.float64)
        self.input_mean = x.mean(axis=0)
        std = x.std(axis=0)
        self.input_std = np.where(std > 0, std, 1.0)

    def clone(self) -> "MultiClassifierModel":
        def copy_block(b):
            return ParamBlock(
                b.name,
                [Tensor(t.values.copy(), requires_grad=True, name=t.name) for t in b.tensors],
                b.trainable,
            )

        return MultiClassifierModel(
            self.spec,
            copy_block(self.extractor),
            [copy_block(h) for h in self.heads],
            self.input_mean.copy(),
            self.input_std.copy(),
        )

    def state(self) -> dict[str, np.ndarray]:
        out = {"input.mean": self.input_mean, "input.std": self.input_std}
        for block in self.blocks:
            for t in block.tensors:
                out[t.name] = t.values
        return out


def init_model(spec: ModelSpec, seed: int) -> MultiClassifierModel:
    spec.validate()
    rng = np.random.default_rng(seed)
    extractor = _glorot_block("extractor", spec.extractor_widths(), rng)
    heads = [
        _glorot_block(f"head{i + 1}", spec.head_widths(), rng)
        for i in range(spec.n_classifiers)
    ]
    return MultiClassifierModel(spec, extractor, heads)


def _check_cols(x, expected, what):
    shape = x.shape if isinstance(x, Tensor) else np.shape(x)
    if len(shape) != 2 or shape[1] != expected:
        raise ad.ShapeError(what, shape, (None, expected))


def extract_features(model: MultiClassifierModel, x) -> Tensor:
    _check_cols(x, model.spec.input_dim, "extract_features")
    xv = x.values if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    z = Tensor((xv - model.input_mean) / model.input_std)
    return _mlp(model.extractor, z, relu_last=True)


def classify_all(model: MultiClassifierModel, features) -> list[Tensor]:
    """Softmax probabilities of every head, in head order."""
    _check_cols(features, model.spec.feature_dim, "classify_all")
    return [ad.softmax_rows(_mlp(h, features, relu_last=False)) for h in model.heads]


def forward(model: MultiClassifierModel, x) -> list[Tensor]:
    return classify_all(model, extract_features(model, x))


def predict(model: MultiClassifierModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Consensus labels (argmax of the mean head probability) and per-head labels.

    Per-head labels have shape ``(n_classifiers, batch)``.
    """
    probs = np.stack([p.values for p in forward(model, x)])
    consensus = probs.mean(axis=0).argmax(axis=1)
    return consensus, probs.argmax(axis=2)


# -- checkpoint -------------------------------------------------------------
#
# Text format, one record per line:
#   multimcd-checkpoint 1
#   spec <json ModelSpec>
#   <name> <dim0>x<dim1>... <v0> <v1> ...   (row-major, float.hex for exactness)

CHECKPOINT_MAGIC = "multimcd-checkpoint 1"


def save_checkpoint(model: MultiClassifierModel, path) -> None:
    spec = model.spec
    spec_json = json.dumps({
        "input_dim": spec.input_dim,
        "feature_dim": spec.feature_dim,
        "extractor_hidden": list(spec.extractor_hidden),
        "head_hidden": list(spec.head_hidden),
        "n_classifiers": spec.n_classifiers,
        "n_classes": spec.n_classes,
    }, sort_keys=True)
    lines = [CHECKPOINT_MAGIC, f"spec {spec_json}"]
    for name, values in model.state().items():
        dims = "x".join(str(d) for d in values.shape)
        body = " ".join(float(v).hex() for v in values.ravel())
        lines.append(f"{name} {dims} {body}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path, spec: ModelSpec | None = None) -> MultiClassifierModel:
    """Load a checkpoint; if ``spec`` is given it must match the stored one."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a multimcd checkpoint")
    if not lines[1].startswith("spec "):
        raise CheckpointError(f"{path}: missing spec line")
    stored = ModelSpec(**json.loads(lines[1][5:]))
    if spec is not None and spec != stored:
        raise CheckpointError(f"{path}: checkpoint spec {stored} does not match {spec}")

    values = {}
    for lineno, line in enumerate(lines[2:], start=3):
        parts = line.split(" ")
        name, dims = parts[0], parts[1]
        shape = tuple(int(d) for d in dims.split("x")) if dims else ()
        arr = np.array([float.fromhex(v) for v in parts[2:]], dtype=np.float64)
        if arr.size != int(np.prod(shape)):
            raise CheckpointError(f"{path}:{lineno}: {name} has {arr.size} values for shape {shape}")
        values[name] = arr.reshape(shape)

    model = init_model(stored, seed=0)
    for block in model.blocks:
        for t in block.tensors:
            if t.name not in values:
                raise CheckpointError(f"{path}: missing tensor {t.name}")
            if values[t.name].shape != t.shape:
                raise CheckpointError(
                    f"{path}: tensor {t.name} has shape {values[t.name].shape}, expected {t.shape}"
                )
            t.values = values[t.name].copy()
    model.input_mean = values["input.mean"]
    model.input_std = values["input.std"]
    return model
