"""
A tour of the autodiff core
===========================

Builds a few small graphs, runs reverse mode, and cross-checks every
gradient against central finite differences.
"""

import numpy as np

from emgtcn.tensor import Tensor, linear, relu, softmax_lastdim

# a two-layer pipeline scored against fixed coefficients:
# y = sum(c * softmax(relu(x W1 + b1) W2))
rng = np.random.default_rng(0)
x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
w1 = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
b1 = Tensor(np.zeros(5), requires_grad=True)
w2 = Tensor(rng.normal(size=(5, 2)), requires_grad=True)
b2 = Tensor(np.zeros(2), requires_grad=True)
coeffs = Tensor(rng.normal(size=(3, 2)))


def forward():
    probs = softmax_lastdim(linear(relu(linear(x, w1, b1)), w2, b2))
    return (probs * coeffs).sum()


loss = forward()
tape = loss.backward()
print(f"loss = {float(loss.data):.6f}")
print("gradient shapes:", {n: t.grad.shape for n, t in
                           [("x", x), ("w1", w1), ("w2", w2)]})

# finite differences on a few coordinates of w1
h = 1e-5
flat = w1.data.reshape(-1)
worst = 0.0
for c in (0, 7, 13):
    keep = flat[c]
    flat[c] = keep + h
    up = float(forward().data)
    flat[c] = keep - h
    down = float(forward().data)
    flat[c] = keep
    fd = (up - down) / (2 * h)
    an = w1.grad.reshape(-1)[c]
    worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-3))
print(f"worst relative error vs finite differences: {worst:.2e}")

# a second backward on the same tape is refused; reset() re-arms it
try:
    loss.backward()
except Exception as err:
    print(f"double backward rejected: {err}")
tape.reset()
loss2 = forward()
loss2.backward()
print(f"after reset, a fresh pass works: loss = {float(loss2.data):.6f}")
