"""Three-step adversarial training with ``n`` classifier heads.

1. pretrain extractor and heads on labelled source data;
2. with the extractor frozen, update the heads to stay accurate on the source
   while disagreeing as much as possible on the target;
3. with the heads frozen, update the extractor so the heads agree on the target.

Steps 2 and 3 alternate over paired source/target minibatches.
"""

from __future__ import annotations

import csv
import math
import time
from contextlib import ExitStack, contextmanager
from dataclasses import dataclass, field, fields

import numpy as np

from . import autodiff as ad
from . import losses
from .autodiff import ContractError, Tensor
from .data import DatasetSplit, TrainingView
from .losses import LossVariant
from .model import MultiClassifierModel, classify_all, extract_features, predict


@dataclass(frozen=True)
class TrainConfig:
    n_classifiers: int = 3
    epochs: int = 60
    batch_size: int = 32
    lr: float = 1e-3
    step3_repeats: int = 4
    seed: int = 0
    variant: LossVariant = LossVariant()
    pretrain_epochs: int = 20
    # also take a step-1 (source) update at the start of every adaptation iteration
    source_step: bool = True

    def __post_init__(self):
        if isinstance(self.variant, str):
            object.__setattr__(self, "variant", LossVariant.parse(self.variant))
        if self.n_classifiers < 2:
            raise ContractError(f"n_classifiers must be >= 2, got {self.n_classifiers}")
        for name in ("batch_size", "step3_repeats"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        for name in ("epochs", "pretrain_epochs"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be >= 0")
        if not self.lr > 0:
            raise ContractError(f"lr must be positive, got {self.lr}")
        self.variant.validate_for(self.n_classifiers)


@dataclass
class MetricsRecord:
    phase: str  # pretrain | adapt | epoch | source_only
    epoch: int
    iteration: int
    loss1: float = math.nan
    loss_s: float = math.nan
    loss_t: float = math.nan
    mean_discrepancy: float = math.nan  # loss_t divided by its number of pair terms
    loss3: float = math.nan
    source_accuracy: float | None = None
    target_accuracy: float | None = None
    per_head_accuracy: list[float] = field(default_factory=list)
    wall_time_ms: float = 0.0


@dataclass
class EvalResult:
    source_accuracy: float
    source_per_head: list[float]
    target_accuracy: float | None  # None when the split has no target labels
    target_per_head: list[float] | None

    @property
    def target_risk(self) -> float | None:
        return None if self.target_accuracy is None else 1.0 - self.target_accuracy


def _accuracies(model, x, y):
    consensus, heads = predict(model, x)
    return float(np.mean(consensus == y)), [float(np.mean(h == y)) for h in heads]


def evaluate(model: MultiClassifierModel, split: DatasetSplit) -> EvalResult:
    src, src_heads = _accuracies(model, split.source_x, split.source_y)
    if not split.has_target_labels:
        return EvalResult(src, src_heads, None, None)
    tgt, tgt_heads = _accuracies(model, split.target_x, split.target_y_eval)
    return EvalResult(src, src_heads, tgt, tgt_heads)


@contextmanager
def _frozen(block: ad.ParamBlock, step: str):
    """Check that ``block`` comes out of the step bit-identical."""
    before = block.snapshot() if __debug__ else None
    yield
    if __debug__ and not block.matches(before):
        raise ContractError(f"{step} modified frozen block {block.name!r}")


def _batches(n: int, batch_size: int, rng) -> list[np.ndarray]:
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def _check_view(view):
    if not isinstance(view, TrainingView) or hasattr(view, "target_y_eval"):
        raise ContractError("training must consume a TrainingView without target labels")


# -- the three steps ---------------------------------------------------------

def step1_update(model, xs, ys, lr) -> float:
    model.set_trainable(True, True)
    loss = losses.loss_step1(classify_all(model, extract_features(model, xs)), ys)
    ad.sgd_step(model.blocks, ad.backward(loss, model.blocks), lr)
    return loss.item()


def step1_pretrain(model, view: TrainingView, config: TrainConfig, rng=None, epochs=None):
    """Train extractor and heads on source labels; returns per-iteration records."""
    _check_view(view)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    epochs = config.pretrain_epochs if epochs is None else epochs
    history = []
    it = 0
    for epoch in range(epochs):
        for idx in _batches(len(view.source_x), config.batch_size, rng):
            t0 = time.perf_counter()
            loss = step1_update(model, view.source_x[idx], view.source_y[idx], config.lr)
            history.append(MetricsRecord("pretrain", epoch, it, loss1=loss,
                                         wall_time_ms=1e3 * (time.perf_counter() - t0)))
            it += 1
    return model, history


def step2_max_discrepancy(model, xs, ys, xt, config: TrainConfig):
    """One head update on ``loss_s - Dis(target)``; the extractor stays fixed.

    Returns ``(loss_s, loss_t)`` evaluated before the update.
    """
    model.set_trainable(False, True)
    with _frozen(model.extractor, "step 2"):
        # features enter as constants, so no gradient reaches the extractor
        fs = Tensor(extract_features(model, xs).values)
        ft = Tensor(extract_features(model, xt).values)
        _, loss_s, loss_t = losses.loss_step2_parts(
            classify_all(model, fs), ys, classify_all(model, ft), config.variant
        )
        loss2 = ad.sub(loss_s, loss_t)
        ad.sgd_step(model.blocks, ad.backward(loss2, model.blocks), config.lr)
    return loss_s.item(), loss_t.item()


def step3_min_discrepancy(model, xt, config: TrainConfig) -> list[float]:
    """``step3_repeats`` extractor updates on Dis(target); heads stay fixed.

    Returns the loss before each update.
    """
    model.set_trainable(True, False)
    out = []
    with ExitStack() as stack:
        for h in model.heads:
            stack.enter_context(_frozen(h, "step 3"))
        for _ in range(config.step3_repeats):
            loss3 = losses.loss_step3(classify_all(model, extract_features(model, xt)),
                                      config.variant)
            ad.sgd_step(model.blocks, ad.backward(loss3, model.blocks), config.lr)
            out.append(loss3.item())
    return out


def _epoch_record(phase, epoch, it, model, split, records, wall_ms):
    def avg(attr):
        vals = [getattr(r, attr) for r in records]
        return float(np.mean(vals)) if vals else math.nan

    ev = evaluate(model, split)
    return MetricsRecord(
        phase, epoch, it,
        loss1=avg("loss1"), loss_s=avg("loss_s"), loss_t=avg("loss_t"),
        mean_discrepancy=avg("mean_discrepancy"), loss3=avg("loss3"),
        source_accuracy=ev.source_accuracy,
        target_accuracy=ev.target_accuracy,
        per_head_accuracy=ev.target_per_head if ev.target_per_head is not None else ev.source_per_head,
        wall_time_ms=wall_ms,
    )


def train(model: MultiClassifierModel, split: DatasetSplit, config: TrainConfig):
    """Pretrain, then alternate step 2 / step 3 over paired minibatches.

    Standardization is fitted to the source features. Returns ``(model,
    history)``; the history holds one ``adapt`` record per iteration and one
    ``epoch`` record (with accuracies) per epoch.
    """
    if model.spec.n_classifiers != config.n_classifiers:
        raise ContractError(
            f"model has {model.spec.n_classifiers} heads, config asks for {config.n_classifiers}"
        )
    view = split.training_view()
    _check_view(view)
    model.fit_standardization(view.source_x)
    rng = np.random.default_rng(config.seed)
    n_terms = len(config.variant.terms(config.n_classifiers))

    _, history = step1_pretrain(model, view, config, rng)
    it = 0
    for epoch in range(config.epochs):
        epoch_records = []
        t_epoch = 0.0
        src = _batches(len(view.source_x), config.batch_size, rng)
        tgt = _batches(len(view.target_x), config.batch_size, rng)
        for si, ti in zip(src, tgt):
            t0 = time.perf_counter()
            xs, ys, xt = view.source_x[si], view.source_y[si], view.target_x[ti]
            loss1 = step1_update(model, xs, ys, config.lr) if config.source_step else math.nan
            loss_s, loss_t = step2_max_discrepancy(model, xs, ys, xt, config)
            l3 = step3_min_discrepancy(model, xt, config)
            dt = time.perf_counter() - t0
            t_epoch += dt
            rec = MetricsRecord(
                "adapt", epoch, it, loss1=loss1, loss_s=loss_s, loss_t=loss_t,
                mean_discrepancy=loss_t / n_terms if n_terms else 0.0,
                loss3=l3[-1], wall_time_ms=1e3 * dt,
            )
            history.append(rec)
            epoch_records.append(rec)
            it += 1
        history.append(_epoch_record("epoch", epoch, it, model, split, epoch_records, 1e3 * t_epoch))
    return model, history


def train_source_only(model: MultiClassifierModel, split: DatasetSplit, config: TrainConfig):
    """Baseline: step 1 alone for ``pretrain_epochs + epochs`` epochs."""
    view = split.training_view()
    model.fit_standardization(view.source_x)
    rng = np.random.default_rng(config.seed)
    history = []
    it = 0
    for epoch in range(config.pretrain_epochs + config.epochs):
        t0 = time.perf_counter()
        _, recs = step1_pretrain(model, view, config, rng, epochs=1)
        dt = time.perf_counter() - t0
        for r in recs:
            r.phase, r.epoch, r.iteration = "source_only", epoch, it
            it += 1
        history.extend(recs)
        history.append(_epoch_record("epoch", epoch, it, model, split, recs, 1e3 * dt))
    return model, history


# -- metrics CSV ------------------------------------------------------------

METRICS_COLUMNS = [
    "phase", "epoch", "iteration", "loss1", "loss_s", "loss_t", "mean_discrepancy",
    "loss3", "source_accuracy", "target_accuracy", "per_head_accuracy",
]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    if isinstance(v, list):
        return ";".join(repr(float(x)) for x in v)
    return str(v)


def write_metrics_csv(history: list[MetricsRecord], path, include_time: bool = False):
    """Write records to ``path``; wall time is left out unless asked for so the
    file is byte-reproducible."""
    cols = METRICS_COLUMNS + (["wall_time_ms"] if include_time else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in history:
            w.writerow([_fmt(getattr(r, c)) for c in cols])


def history_without_time(history):
    """Records as tuples, wall time dropped; for reproducibility comparisons."""
    names = [f.name for f in fields(MetricsRecord) if f.name != "wall_time_ms"]
    return [tuple(str(getattr(r, n)) for n in names) for r in history]
