"""Classification and classifier-discrepancy losses.

All losses take probability batches (rows on the simplex) as :class:`Tensor`
and return scalar tensors, so they can be differentiated end to end.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tensor

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class LossVariant:
    """Which pair terms make up the multi-classifier discrepancy.

    ``pair`` and ``other`` hold 0-based head indices. The text form used in
    configs and on the command line is 1-based: ``full``, ``remove:1-2``,
    ``duplicate:1-2:1-3`` (replace the (1,2) term by a second (1,3) term).
    """

    kind: str = "full"
    pair: tuple[int, int] | None = None
    other: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in ("full", "remove", "duplicate"):
            raise ContractError(f"unknown loss variant kind {self.kind!r}")
        if self.kind == "full":
            return
        if self.pair is None:
            raise ContractError(f"{self.kind} variant needs a pair")
        object.__setattr__(self, "pair", _ordered(self.pair))
        if self.kind == "duplicate":
            if self.other is None:
                raise ContractError("duplicate variant needs the pair to copy")
            object.__setattr__(self, "other", _ordered(self.other))
            if self.other == self.pair:
                raise ContractError("duplicate variant must copy a different pair")

    @classmethod
    def full(cls):
        return cls("full")

    @classmethod
    def remove(cls, i, j):
        return cls("remove", (i, j))

    @classmethod
    def duplicate(cls, i, j, k, l):  # noqa: E741
        return cls("duplicate", (i, j), (k, l))

    @classmethod
    def parse(cls, text: str) -> "LossVariant":
        text = text.strip().lower()
        if text == "full":
            return cls.full()
        m = re.fullmatch(r"remove:(\d+)-(\d+)", text)
        if m:
            i, j = (int(g) - 1 for g in m.groups())
            return cls.remove(i, j)
        m = re.fullmatch(r"duplicate:(\d+)-(\d+):(\d+)-(\d+)", text)
        if m:
            i, j, k, l = (int(g) - 1 for g in m.groups())  # noqa: E741
            return cls.duplicate(i, j, k, l)
        raise ContractError(
            f"cannot parse loss variant {text!r}; expected full, remove:i-j or duplicate:i-j:k-l"
        )

    def __str__(self):
        if self.kind == "full":
            return "full"
        p = f"{self.pair[0] + 1}-{self.pair[1] + 1}"
        if self.kind == "remove":
            return f"remove:{p}"
        return f"duplicate:{p}:{self.other[0] + 1}-{self.other[1] + 1}"

    def terms(self, n: int) -> list[tuple[int, int]]:
        """Head-index pairs summed by the discrepancy for ``n`` heads."""
        if n < 2:
            raise ContractError(f"discrepancy needs at least 2 classifiers, got {n}")
        pairs = list(combinations(range(n), 2))
        if self.kind == "full":
            return pairs
        for p in (self.pair, self.other):
            if p is not None and (p[0] < 0 or p[1] >= n):
                raise ContractError(f"variant {self} refers to a head outside 1..{n}")
        if self.kind == "remove":
            return [p for p in pairs if p != self.pair]
        return [self.other if p == self.pair else p for p in pairs]

    def validate_for(self, n: int):
        self.terms(n)


def _ordered(p) -> tuple[int, int]:
    i, j = int(p[0]), int(p[1])
    if i == j:
        raise ContractError(f"pair ({i + 1},{j + 1}) must name two distinct heads")
    return (i, j) if i < j else (j, i)


def cross_entropy(probs: Tensor, labels) -> Tensor:
    """Mean negative log-probability of the true class."""
    labels = np.asarray(labels)
    n, k = probs.shape
    if labels.shape != (n,):
        raise ContractError(f"cross_entropy: {labels.shape[0] if labels.ndim else 0} labels for {n} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ContractError(f"cross_entropy: labels must lie in [0, {k})")
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    logp = ad.log(ad.clip_min(probs, LOG_FLOOR))
    return ad.negate(ad.scale(ad.sum(ad.mul(logp, onehot)), 1.0 / n))


def pair_discrepancy(p1: Tensor, p2: Tensor) -> Tensor:
    """(1/K) sum_k |p1_k - p2_k|, averaged over the batch."""
    if p1.shape != p2.shape:
        raise ad.ShapeError("pair_discrepancy", p1.shape, p2.shape)
    # mean over all B*K entries == batch mean of the per-row (1/K)-scaled sum
    return ad.mean(ad.abs(ad.sub(p1, p2)))


def multi_discrepancy(ps: list[Tensor], variant: LossVariant = LossVariant()) -> Tensor:
    """Sum of pair discrepancies over the variant's head pairs (all pairs by default)."""
    terms = variant.terms(len(ps))
    shape = ps[0].shape
    for p in ps[1:]:
        if p.shape != shape:
            raise ad.ShapeError("multi_discrepancy", shape, p.shape)
    total = None
    for i, j in terms:
        d = pair_discrepancy(ps[i], ps[j])
        total = d if total is None else ad.add(total, d)
    return total if total is not None else Tensor(0.0)


def loss_step1(source_probs: list[Tensor], source_labels) -> Tensor:
    """Sum over heads of the source cross-entropy."""
    total = cross_entropy(source_probs[0], source_labels)
    for p in source_probs[1:]:
        total = ad.add(total, cross_entropy(p, source_labels))
    return total


def loss_step2_parts(source_probs, source_labels, target_probs, variant=LossVariant()):
    """``(loss_2, loss_s, loss_t)`` where ``loss_2 = loss_s - loss_t``."""
    loss_s = loss_step1(source_probs, source_labels)
    loss_t = multi_discrepancy(target_probs, variant)
    return ad.sub(loss_s, loss_t), loss_s, loss_t


def loss_step2(source_probs, source_labels, target_probs, variant=LossVariant()) -> Tensor:
    """Source cross-entropy minus target discrepancy.

    Minimizing this w.r.t. the heads keeps them accurate on the source while
    pushing their target predictions apart.
    """
    return loss_step2_parts(source_probs, source_labels, target_probs, variant)[0]


def loss_step3(target_probs, variant=LossVariant()) -> Tensor:
    return multi_discrepancy(target_probs, variant)
