"""The pairwise discrepancy and its multi-head sum, including the two ablated
variants (one pair removed, one pair counted twice)."""

import numpy as np

from multimcd import losses
from multimcd.autodiff import Tensor
from multimcd.losses import LossVariant

rng = np.random.default_rng(1)
k = 4
heads = [Tensor(rng.dirichlet(np.ones(k), size=5)) for _ in range(3)]

d12 = losses.pair_discrepancy(heads[0], heads[1]).item()
print(f"dis(p1, p2) = {d12:.4f}   (bounded by 2/K = {2 / k})")

# two confident heads on different classes reach the bound
a, c = Tensor(np.eye(k)[[0]]), Tensor(np.eye(k)[[2]])
print("disjoint one-hot rows:", losses.pair_discrepancy(a, c).item())

for text in ("full", "remove:1-2", "duplicate:1-2:1-3"):
    v = LossVariant.parse(text)
    pairs = [(i + 1, j + 1) for i, j in v.terms(3)]
    print(f"{text:18s} pairs {pairs}  Dis = {losses.multi_discrepancy(heads, v).item():.4f}")

# term count grows quadratically with the number of heads
for n in range(2, 7):
    print(f"n={n}: {len(LossVariant.full().terms(n))} pair terms")
