"""Dense feed-forward networks, MSE loss, backprop and Adam.

    f^0 = x,   f^l = act(W^l f^{l-1} + b^l)  (l < n),   y = W^n f^{n-1} + b^n

Internally a network's parameters live in one flat vector (layer by layer,
weights row-major then bias). Stacking R such vectors as an ``(R, P)``
array lets :func:`train_batch` run R independent trainings through the same
numpy calls; every per-run quantity is computed from that run's slice only.
"""

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import NumericalError, ValidationError
from .poly_approx import PolyCoeffs

Activation = Union[str, PolyCoeffs]  # "relu", "tanh" or a polynomial


@dataclass(frozen=True)
class NetSpec:
    widths: tuple
    activation: Activation = "relu"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 2:
            raise ValidationError("a network needs at least input and output widths")
        if min(widths) < 1:
            raise ValidationError(f"widths must be positive, got {widths}")
        if not isinstance(self.activation, PolyCoeffs) and self.activation not in ("relu", "tanh"):
            raise ValidationError(f"unknown activation {self.activation!r}")

    @property
    def depth(self) -> int:
        """Number of affine layers n."""
        return len(self.widths) - 1

    @property
    def layer_shapes(self):
        return [(self.widths[l], self.widths[l - 1]) for l in range(1, len(self.widths))]

    @property
    def num_params(self) -> int:
        return sum(m * (k + 1) for m, k in self.layer_shapes)

    def offsets(self):
        """Yield ``(w_start, w_stop, b_stop)`` per layer in the flat layout."""
        pos = 0
        for m, k in self.layer_shapes:
            yield pos, pos + m * k, pos + m * k + m
            pos += m * (k + 1)


@dataclass
class ParamSet:
    """Weights ``W^l`` (shape m_l x m_{l-1}) and biases ``b^l`` for l = 1..n."""

    weights: list
    biases: list

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(np.asarray(w, dtype=float).ravel())
            parts.append(np.asarray(b, dtype=float).ravel())
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, spec: NetSpec, vec) -> "ParamSet":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (spec.num_params,):
            raise ValidationError(f"expected {spec.num_params} parameters, got {vec.shape}")
        ws, bs = [], []
        for (m, k), (w0, w1, b1) in zip(spec.layer_shapes, spec.offsets()):
            ws.append(vec[w0:w1].reshape(m, k).copy())
            bs.append(vec[w1:b1].copy())
        return cls(ws, bs)

    @classmethod
    def zeros(cls, spec: NetSpec) -> "ParamSet":
        return cls.from_flat(spec, np.zeros(spec.num_params))

    def copy(self) -> "ParamSet":
        return ParamSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def check(self, spec: NetSpec):
        if len(self.weights) != spec.depth or len(self.biases) != spec.depth:
            raise ValidationError("parameter layer count does not match the network")
        for (m, k), w, b in zip(spec.layer_shapes, self.weights, self.biases):
            if np.shape(w) != (m, k) or np.shape(b) != (m,):
                raise ValidationError(f"layer shape mismatch: want W {(m, k)}, b {(m,)}")


def _act(activation, z):
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "tanh":
        return np.tanh(z)
    return activation(z)


def _act_grad(activation, z, a):
    # ReLU'(0) is taken as 0.
    if activation == "relu":
        return (z > 0).astype(float)
    if activation == "tanh":
        return 1.0 - a * a
    return activation.derivative(z)


def _views(spec, flat):
    """Per-layer (W, b) views into a flat ``(R, P)`` array."""
    r = flat.shape[0]
    out = []
    for (m, k), (w0, w1, b1) in zip(spec.layer_shapes, spec.offsets()):
        out.append((flat[:, w0:w1].reshape(r, m, k), flat[:, w1:b1]))
    return out


def _as_inputs(spec, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and spec.widths[0] == 1 and x.shape[0] != 1:
        x = x[:, None]
    elif x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.widths[0]:
        raise ValidationError(f"inputs must have {spec.widths[0]} columns, got shape {x.shape}")
    return x


def forward_flat(spec: NetSpec, flat: np.ndarray, x: np.ndarray, keep=False):
    """Batched forward pass: ``flat`` is (R, P), ``x`` is (N, m_0).

    Returns outputs (R, N, m_n); with ``keep`` also the list of
    (pre-activation, activation) pairs needed for backprop.
    """
    a = np.broadcast_to(x, (flat.shape[0],) + x.shape)
    cache = []
    layers = _views(spec, flat)
    for i, (w, b) in enumerate(layers):
        z = np.matmul(a, w.transpose(0, 2, 1)) + b[:, None, :]
        if i == len(layers) - 1:
            out = z
        else:
            a_next = _act(spec.activation, z)
            if keep:
                cache.append((a, z, a_next))
            a = a_next
    if keep:
        cache.append((a, None, None))
    return (out, cache) if keep else out


def loss_and_grad_flat(spec: NetSpec, flat: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Per-run MSE losses (R,) and flat gradients (R, P)."""
    n = x.shape[0]
    out, cache = forward_flat(spec, flat, x, keep=True)
    resid = out - y
    loss = np.einsum("rij,rij->r", resid, resid) / n
    grad = np.empty_like(flat)
    gviews = _views(spec, grad)
    layers = _views(spec, flat)
    dz = (2.0 / n) * resid
    for i in range(len(layers) - 1, -1, -1):
        a_in = cache[i][0]
        gw, gb = gviews[i]
        gw[...] = np.matmul(dz.transpose(0, 2, 1), a_in)
        gb[...] = dz.sum(axis=1)
        if i == 0:
            break
        _, z, a = cache[i - 1]
        dz = np.matmul(dz, layers[i][0]) * _act_grad(spec.activation, z, a)
    return loss, grad


def _dataset(spec, inputs, targets):
    x = _as_inputs(spec, inputs)
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if len(x) == 0:
        raise ValidationError("empty sample set")
    if y.shape != (x.shape[0], spec.widths[-1]):
        raise ValidationError(f"targets shape {y.shape} does not match inputs/network")
    return x, y


def forward(spec: NetSpec, params: ParamSet, x) -> np.ndarray:
    """Network output for a single input vector (shape (m_0,)) or a batch
    (shape (N, m_0)); 1-D input to a scalar-input net is read as a batch."""
    params.check(spec)
    single = np.ndim(x) == 1 and not (spec.widths[0] == 1 and np.shape(x)[0] != 1)
    single = single or np.ndim(x) == 0
    xs = _as_inputs(spec, np.atleast_1d(x))
    out = forward_flat(spec, params.flatten()[None, :], xs)[0]
    return out[0] if single else out


def mse_loss(spec: NetSpec, params: ParamSet, inputs, targets) -> float:
    params.check(spec)
    x, y = _dataset(spec, inputs, targets)
    resid = forward_flat(spec, params.flatten()[None, :], x)[0] - y
    return float(np.sum(resid * resid) / len(x))


def gradient(spec: NetSpec, params: ParamSet, inputs, targets) -> ParamSet:
    params.check(spec)
    x, y = _dataset(spec, inputs, targets)
    _, g = loss_and_grad_flat(spec, params.flatten()[None, :], x, y)
    return ParamSet.from_flat(spec, g[0])


# -- Adam ----------------------------------------------------------------


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, shape) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape), 0)


def _adam_update(state, flat, grad, hyper):
    """In-place Adam update of ``flat`` and ``state``."""
    state.t += 1
    state.m *= hyper.beta1
    state.m += (1 - hyper.beta1) * grad
    state.v *= hyper.beta2
    state.v += (1 - hyper.beta2) * grad * grad
    mhat = state.m / (1 - hyper.beta1**state.t)
    vhat = state.v / (1 - hyper.beta2**state.t)
    flat -= hyper.lr * mhat / (np.sqrt(vhat) + hyper.eps)


def adam_step(state: AdamState, params: ParamSet, grad: ParamSet, hyper: AdamHyper = AdamHyper()):
    """One bias-corrected Adam step; returns new ``(state, params)``."""
    g = grad.flatten()
    if not np.all(np.isfinite(g)):
        raise NumericalError("non-finite gradient passed to adam_step")
    widths = (params.weights[0].shape[1],) + tuple(w.shape[0] for w in params.weights)
    new_state = AdamState(state.m.copy(), state.v.copy(), state.t)
    flat = params.flatten()
    _adam_update(new_state, flat, g, hyper)
    return new_state, ParamSet.from_flat(NetSpec(widths), flat)


# -- training ------------------------------------------------------------


@dataclass(frozen=True)
class TrainHyper:
    lr: float = 1e-3
    steps: int = 4000
    collapse_threshold: float = 0.09
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def adam(self) -> AdamHyper:
        return AdamHyper(self.lr, self.beta1, self.beta2, self.eps)


@dataclass
class TrainReport:
    final_loss: float
    loss_history: list
    collapsed: bool
    steps: int
    seed: object = None
    output_variance: float = float("nan")
    diverged: bool = False
    params: ParamSet = field(default=None, repr=False)


def train_batch(spec: NetSpec, inits: Sequence[ParamSet], dataset, hyper: TrainHyper, seeds=None):
    """Full-batch Adam on each initialization independently.

    Runs whose loss turns non-finite are frozen at that step and reported
    as diverged (and therefore collapsed).
    """
    if hyper.steps < 1:
        raise ValidationError("steps must be >= 1")
    x, y = _dataset(spec, *dataset)
    for p in inits:
        p.check(spec)
    flat = np.stack([p.flatten() for p in inits])
    r = flat.shape[0]
    state = AdamState.fresh(flat.shape)
    adam = hyper.adam()
    history = np.empty((r, hyper.steps + 1))
    alive = np.ones(r, dtype=bool)
    loss = None
    # Diverging runs are expected to overflow; they are flagged below.
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(hyper.steps):
            loss, grad = loss_and_grad_flat(spec, flat, x, y)
            history[:, step] = loss
            bad = ~np.isfinite(loss) | ~np.all(np.isfinite(grad), axis=1)
            if bad.any():
                alive &= ~bad
                grad[~alive] = 0.0
            before = flat[~alive].copy()
            _adam_update(state, flat, grad, adam)
            flat[~alive] = before
        out = forward_flat(spec, flat, x)
        resid = out - y
        final = np.einsum("rij,rij->r", resid, resid) / len(x)
    history[:, -1] = final
    reports = []
    for i in range(r):
        ok = alive[i] and np.isfinite(final[i])
        fl = float(final[i]) if ok else float("inf")
        reports.append(
            TrainReport(
                final_loss=fl,
                loss_history=history[i].tolist(),
                collapsed=(not ok) or fl >= hyper.collapse_threshold,
                steps=hyper.steps,
                seed=None if seeds is None else seeds[i],
                output_variance=float(out[i].var(axis=0).sum()) if ok else float("nan"),
                diverged=not ok,
                params=ParamSet.from_flat(spec, flat[i]),
            )
        )
    return reports


def train_run(spec: NetSpec, init_params: ParamSet, dataset, hyper: TrainHyper, seed=None) -> TrainReport:
    """Train one network; ``dataset`` is ``(inputs, targets)``."""
    return train_batch(spec, [init_params], dataset, hyper, seeds=[seed])[0]
