"""A tour of the reverse-mode core: build a graph, inspect it, differentiate it,
and confirm the gradients against central finite differences."""

import numpy as np

from multimcd import autodiff as ad
from multimcd.autodiff import ParamBlock, Tensor

rng = np.random.default_rng(0)
x = Tensor(rng.normal(size=(4, 3)))
w = Tensor(rng.normal(size=(3, 2)), requires_grad=True, name="w")
b = Tensor(np.zeros(2), requires_grad=True, name="b")

# a one-layer softmax classifier with cross-entropy on fixed labels
labels = np.array([0, 1, 1, 0])
probs = ad.softmax_rows(ad.add(ad.matmul(x, w), b))
loss = ad.negate(ad.mean(ad.sum(ad.mul(ad.log(probs), np.eye(2)[labels]), axis=1)))

print("loss:", loss.item())
print("recorded ops, in topological order:", ad.trace(loss).ops())

grads = ad.backward(loss)
print("dL/dw:\n", grads[w])

# the same derivative by central differences, one coordinate at a time
def value():
    z = x.values @ w.values + b.values
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -logp[np.arange(4), labels].mean()

numeric = np.zeros_like(w.values)
for idx in np.ndindex(w.shape):
    old = w.values[idx]
    w.values[idx] = old + 1e-5
    up = value()
    w.values[idx] = old - 1e-5
    down = value()
    w.values[idx] = old
    numeric[idx] = (up - down) / 2e-5
print("max |analytic - numeric|:", np.abs(grads[w] - numeric).max())

# freezing: a non-trainable block is skipped by the optimizer step
block_w, block_b = ParamBlock("w", [w]), ParamBlock("b", [b], trainable=False)
before = block_b.snapshot()
ad.sgd_step([block_w, block_b], grads, lr=0.1)
print("frozen bias untouched:", block_b.matches(before))
