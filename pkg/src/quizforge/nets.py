"""Feedforward function approximator with hand-rolled backprop.

A shared rectified-linear trunk feeds either a 4-output linear Q head or an
actor-critic pair (4-way softmax policy + scalar value). Parameters live in
one flat float64 vector so optimizers and checkpointing stay trivial; all
heavy math goes through the selected kernel backend.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass

import numpy as np

from . import kernels as K

N_ACTIONS = 4
Q_HEAD = "q"
AC_HEAD = "actor_critic"
PARAMS_FORMAT_VERSION = 1


class NonFiniteInputError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    """Topology of the approximator: input width, hidden widths, head type."""

    input_dim: int
    hidden: tuple[int, ...] = (64, 64)
    head: str = Q_HEAD

    def __post_init__(self):
        if self.input_dim < 2:
            raise ValueError(f"input_dim must be >= 2, got {self.input_dim}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden widths must be >= 1, got {self.hidden}")
        if self.head not in (Q_HEAD, AC_HEAD):
            raise ValueError(f"unknown head type {self.head!r}")

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(n_out, n_in) per weight matrix: trunk layers, then head layer(s)."""
        shapes = []
        prev = self.input_dim
        for h in self.hidden:
            shapes.append((h, prev))
            prev = h
        shapes.append((N_ACTIONS, prev))  # Q head or policy head
        if self.head == AC_HEAD:
            shapes.append((1, prev))  # value head
        return shapes

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes())


def _build_views(spec: NetworkSpec, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    views = []
    off = 0
    for n_out, n_in in spec.layer_shapes():
        w = theta[off:off + n_out * n_in].reshape(n_out, n_in)
        off += n_out * n_in
        b = theta[off:off + n_out]
        off += n_out
        views.append((w, b))
    assert off == theta.shape[0]
    return views


class ParamSet:
    """Flat parameter vector plus per-layer views and a version counter."""

    def __init__(self, spec: NetworkSpec, theta: np.ndarray, version: int = 0):
        if theta.shape != (spec.n_params,):
            raise ValueError(f"theta has {theta.shape}, spec needs ({spec.n_params},)")
        if not np.isfinite(theta).all():
            raise ValueError("theta contains non-finite values")
        self.spec = spec
        self.theta = np.ascontiguousarray(theta, dtype=np.float64)
        self.version = version
        self.layers = _build_views(spec, self.theta)
        self._version_lock = threading.Lock()

    def bump_version(self) -> None:
        # locked so concurrent asynchronous workers never lose an increment
        with self._version_lock:
            self.version += 1

    @property
    def n_trunk(self) -> int:
        return len(self.spec.hidden)

    def copy(self) -> "ParamSet":
        return ParamSet(self.spec, self.theta.copy(), self.version)

    def snapshot(self) -> np.ndarray:
        return self.theta.copy()

    def load_from(self, theta: np.ndarray) -> None:
        self.theta[:] = theta


def init_params(spec: NetworkSpec, seed=0) -> ParamSet:
    """He-style uniform fan-in initialization; biases start at zero.

    `seed` is anything numpy's default_rng accepts (int or sequence).
    """
    rng = np.random.default_rng(seed)
    theta = np.zeros(spec.n_params, dtype=np.float64)
    ps = ParamSet(spec, theta)
    for w, b in ps.layers:
        limit = np.sqrt(6.0 / w.shape[1])
        w[:] = rng.uniform(-limit, limit, size=w.shape)
        b[:] = 0.0
    return ps


def _as_batch(x: np.ndarray, input_dim: int) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != input_dim:
        raise ValueError(f"input has shape {x.shape}, expected (*, {input_dim})")
    if not np.isfinite(x).all():
        raise NonFiniteInputError("network input contains non-finite values")
    return x


def _trunk_forward(ps: ParamSet, x: np.ndarray) -> list[np.ndarray]:
    acts = []
    a = x
    for w, b in ps.layers[:ps.n_trunk]:
        out = np.empty((a.shape[0], w.shape[0]))
        K.affine_forward(a, w, b, out, True)
        acts.append(out)
        a = out
    return acts


def forward_q(ps: ParamSet, x: np.ndarray):
    """Batch Q-value forward pass. Returns (q (B,4), cache for backward)."""
    x = _as_batch(x, ps.spec.input_dim)
    acts = _trunk_forward(ps, x)
    a = acts[-1] if acts else x
    wq, bq = ps.layers[ps.n_trunk]
    q = np.empty((a.shape[0], N_ACTIONS))
    K.affine_forward(a, wq, bq, q, False)
    return q, (x, acts)


def forward_ac(ps: ParamSet, x: np.ndarray):
    """Actor-critic forward pass. Returns (probs (B,4), values (B,), cache)."""
    x = _as_batch(x, ps.spec.input_dim)
    acts = _trunk_forward(ps, x)
    a = acts[-1] if acts else x
    wp, bp = ps.layers[ps.n_trunk]
    wv, bv = ps.layers[ps.n_trunk + 1]
    logits = np.empty((a.shape[0], N_ACTIONS))
    K.affine_forward(a, wp, bp, logits, False)
    probs = np.empty_like(logits)
    K.softmax_rows(logits, probs)
    values = np.empty((a.shape[0], 1))
    K.affine_forward(a, wv, bv, values, False)
    return probs, values[:, 0], (x, acts)


def forward(ps: ParamSet, x: np.ndarray):
    """Head outputs for a single state or batch: Q-values, or (probs, values)."""
    if ps.spec.head == Q_HEAD:
        q, _ = forward_q(ps, x)
        return q[0] if q.shape[0] == 1 else q
    probs, values, _ = forward_ac(ps, x)
    if probs.shape[0] == 1:
        return probs[0], float(values[0])
    return probs, values


def _trunk_backward(ps, cache, d_last, grad_views) -> None:
    x, acts = cache
    inputs = [x] + acts[:-1]
    d = d_last
    for li in range(ps.n_trunk - 1, -1, -1):
        w, _ = ps.layers[li]
        dw, db = grad_views[li]
        d_in = np.empty_like(inputs[li]) if li > 0 else None
        K.affine_backward(inputs[li], w, acts[li], d, True, dw, db, d_in)
        d = d_in


def _check_grad(grad: np.ndarray) -> np.ndarray:
    if not np.isfinite(grad).all():
        raise NonFiniteGradientError("gradient contains non-finite values")
    return grad


def backward_q(ps: ParamSet, cache, d_q: np.ndarray) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. all parameters, given dLoss/dQ."""
    x, acts = cache
    grad = np.zeros_like(ps.theta)
    grad_views = _build_views(ps.spec, grad)
    a = acts[-1] if acts else x
    wq, _ = ps.layers[ps.n_trunk]
    dwq, dbq = grad_views[ps.n_trunk]
    d_q = np.ascontiguousarray(d_q, dtype=np.float64).reshape(a.shape[0], N_ACTIONS)
    d_a = np.empty_like(a) if ps.n_trunk else None
    K.affine_backward(a, wq, d_q, d_q, False, dwq, dbq, d_a)
    if ps.n_trunk:
        _trunk_backward(ps, cache, d_a, grad_views)
    return _check_grad(grad)


def backward_ac_logits(ps: ParamSet, cache, d_logits: np.ndarray,
                       d_values: np.ndarray) -> np.ndarray:
    """Actor-critic gradient given grads w.r.t. policy logits and values.

    This is the numerically safe entry point the agents use: policy-gradient
    and entropy terms have closed forms at the logit level that avoid any
    division by near-zero probabilities.
    """
    x, acts = cache
    grad = np.zeros_like(ps.theta)
    grad_views = _build_views(ps.spec, grad)
    a = acts[-1] if acts else x
    batch = a.shape[0]
    d_logits = np.ascontiguousarray(d_logits, dtype=np.float64).reshape(batch, N_ACTIONS)
    d_values = np.ascontiguousarray(d_values, dtype=np.float64).reshape(batch, 1)

    wp, _ = ps.layers[ps.n_trunk]
    wv, _ = ps.layers[ps.n_trunk + 1]
    dwp, dbp = grad_views[ps.n_trunk]
    dwv, dbv = grad_views[ps.n_trunk + 1]
    d_a_p = np.empty_like(a) if ps.n_trunk else None
    d_a_v = np.empty_like(a) if ps.n_trunk else None
    K.affine_backward(a, wp, d_logits, d_logits, False, dwp, dbp, d_a_p)
    K.affine_backward(a, wv, d_values, d_values, False, dwv, dbv, d_a_v)
    if ps.n_trunk:
        _trunk_backward(ps, cache, d_a_p + d_a_v, grad_views)
    return _check_grad(grad)


def backward_ac(ps: ParamSet, cache, probs: np.ndarray, d_probs: np.ndarray,
                d_values: np.ndarray) -> np.ndarray:
    """Actor-critic gradient given grads w.r.t. the softmax output itself."""
    probs = np.ascontiguousarray(probs, dtype=np.float64).reshape(-1, N_ACTIONS)
    d_probs = np.ascontiguousarray(d_probs, dtype=np.float64).reshape(probs.shape)
    # softmax Jacobian: dlogit_j = p_j * (dp_j - sum_k dp_k p_k)
    inner = np.sum(d_probs * probs, axis=1, keepdims=True)
    d_logits = probs * (d_probs - inner)
    return backward_ac_logits(ps, cache, d_logits, d_values)


def backward(ps: ParamSet, x: np.ndarray, loss_grad) -> np.ndarray:
    """Recompute-forward convenience wrapper around the head-specific backwards.

    For a Q head, loss_grad is dLoss/dQ. For an actor-critic head it is the
    pair (dLoss/dprobs, dLoss/dvalue).
    """
    if ps.spec.head == Q_HEAD:
        _, cache = forward_q(ps, x)
        return backward_q(ps, cache, np.asarray(loss_grad, dtype=np.float64))
    probs, _, cache = forward_ac(ps, x)
    d_probs, d_values = loss_grad
    return backward_ac(ps, cache, probs, np.asarray(d_probs, dtype=np.float64),
                       np.asarray(d_values, dtype=np.float64))


class SgdOptimizer:
    """Plain gradient descent; the config option for on-policy runs."""

    name = "sgd"

    def __init__(self, n_params: int):
        del n_params

    def step(self, ps: ParamSet, grad: np.ndarray, eta: float) -> None:
        K.sgd_step(ps.theta, grad, eta)
        ps.bump_version()


class AdamOptimizer:
    """Adaptive-moment estimation with the standard coefficient defaults."""

    name = "adam"

    def __init__(self, n_params: int, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, ps: ParamSet, grad: np.ndarray, eta: float) -> None:
        self.t += 1
        K.adam_step(ps.theta, grad, self.m, self.v, self.t, eta,
                    self.beta1, self.beta2, self.eps)
        ps.bump_version()


def make_optimizer(name: str, n_params: int):
    if name == "adam":
        return AdamOptimizer(n_params)
    if name == "sgd":
        return SgdOptimizer(n_params)
    raise ValueError(f"unknown optimizer {name!r} (use adam or sgd)")


def save_params(path, ps: ParamSet, extra: dict | None = None) -> None:
    """Checkpoint to a versioned .npz with the topology embedded."""
    np.savez(
        path,
        format_version=np.int64(PARAMS_FORMAT_VERSION),
        input_dim=np.int64(ps.spec.input_dim),
        hidden=np.asarray(ps.spec.hidden, dtype=np.int64),
        head=np.bytes_(ps.spec.head.encode()),
        theta=ps.theta,
        version=np.int64(ps.version),
        extra=np.bytes_(json.dumps(extra or {}, sort_keys=True).encode()),
    )


def load_params(path) -> tuple[ParamSet, dict]:
    with np.load(path) as data:
        fmt = int(data["format_version"])
        if fmt != PARAMS_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {fmt}")
        spec = NetworkSpec(
            input_dim=int(data["input_dim"]),
            hidden=tuple(int(h) for h in data["hidden"]),
            head=bytes(data["head"]).decode(),
        )
        ps = ParamSet(spec, data["theta"].astype(np.float64), int(data["version"]))
        extra = json.loads(bytes(data["extra"]).decode())
    return ps, extra
