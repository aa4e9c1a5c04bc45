"""Pure-numpy implementations of the hot kernels.

This is the fallback backend; `quizforge._ckernels` (Cython) implements the
same signatures and is preferred when available. All arrays are C-contiguous
float64 and the two backends must agree to fp rounding, so any semantic
change here has to be mirrored in the .pyx file.
"""

from __future__ import annotations

import numpy as np


def affine_forward(X, W, b, out, relu):
    """out = X @ W.T + b, optionally clamped at zero.

    X: (B, n_in), W: (n_out, n_in), b: (n_out,), out: (B, n_out).
    """
    np.dot(X, W.T, out=out)
    out += b
    if relu:
        np.maximum(out, 0.0, out=out)


def affine_backward(X, W, act, d_out, relu, dW, db, dX):
    """Gradients of one affine(+relu) layer.

    `act` is the forward output of this layer; when relu is set, d_out is
    masked in place where act == 0. dW/db are overwritten; dX (grad w.r.t.
    X) is computed only when not None.
    """
    if relu:
        d_out *= act > 0.0
    np.dot(d_out.T, X, out=dW)
    np.sum(d_out, axis=0, out=db)
    if dX is not None:
        np.dot(d_out, W, out=dX)


def softmax_rows(logits, out):
    """Row-wise stable softmax."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    np.exp(shifted, out=out)
    out /= out.sum(axis=1, keepdims=True)


def adam_step(param, grad, m, v, t, eta, beta1, beta2, eps):
    """One fused Adam update over flat arrays. `t` is the 1-based step count."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    param -= eta * mhat / (np.sqrt(vhat) + eps)


def sgd_step(param, grad, eta):
    param -= eta * grad


def sumtree_update(nodes, capacity, data_idx, value):
    """Set the priority of one leaf and repair the partial sums above it."""
    idx = data_idx + capacity - 1
    change = value - nodes[idx]
    nodes[idx] = value
    while idx > 0:
        idx = (idx - 1) // 2
        nodes[idx] += change


def sumtree_update_batch(nodes, capacity, data_idx, values):
    for i in range(data_idx.shape[0]):
        sumtree_update(nodes, capacity, int(data_idx[i]), float(values[i]))


def sumtree_query(nodes, capacity, r):
    """Descend from the root to the leaf containing cumulative mass r."""
    idx = 0
    n = 2 * capacity - 1
    while 2 * idx + 1 < n:
        left = 2 * idx + 1
        right = left + 1
        if r <= nodes[left] or nodes[right] == 0.0:
            idx = left
        else:
            r -= nodes[left]
            idx = right
    return idx - (capacity - 1)


def sumtree_query_batch(nodes, capacity, rs, out_idx):
    for i in range(rs.shape[0]):
        out_idx[i] = sumtree_query(nodes, capacity, rs[i])
