"""He, Xavier and linear-product-structure (LPS) initialization.

LPS samples hidden layer l (1 <= l < n) from N(0, 2 / (m_l (m_{l-1} + 1)))
and the output layer from N(0, 1 / (m_{n-1} + 1)), weights and biases
alike. It then runs ``reinit_count`` re-initialization rounds: each round
selects layers, and inside a selected layer every entry that is currently
<= 0 is redrawn from the layer's sampling distribution with probability 1/2.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ValidationError
from .mlp import NetSpec, ParamSet
from .rng import stream


class Kind(str, Enum):
    HE = "he"
    XAVIER = "xavier"
    LPS = "lps"
    LPS_TANH = "lps-tanh"


class Selection(str, Enum):
    BERNOULLI = "bernoulli"
    BITS = "bits"


class BiasMode(str, Enum):
    SAMPLED = "sampled"
    ZERO = "zero"


@dataclass(frozen=True)
class InitScheme:
    kind: Kind = Kind.LPS
    reinit_count: int = 0
    selection_mode: Selection = Selection.BERNOULLI
    bias_mode: BiasMode = BiasMode.SAMPLED

    def __post_init__(self):
        for name, enum in (("kind", Kind), ("selection_mode", Selection), ("bias_mode", BiasMode)):
            try:
                object.__setattr__(self, name, enum(getattr(self, name)))
            except ValueError:
                raise ValidationError(f"invalid {name}: {getattr(self, name)!r}") from None
        if self.reinit_count < 0:
            raise ValidationError("reinit_count must be non-negative")
        if self.reinit_count and self.kind not in (Kind.LPS, Kind.LPS_TANH):
            raise ValidationError("re-initialization only applies to LPS schemes")

    @property
    def label(self) -> str:
        if self.kind in (Kind.LPS, Kind.LPS_TANH):
            return f"{self.kind.value}(reinit={self.reinit_count},{self.selection_mode.value})"
        return self.kind.value


def layer_variance(spec: NetSpec, kind: Kind, layer: int) -> float:
    """Sampling variance of every weight and bias of ``layer`` (1-based)."""
    w = spec.widths
    n = spec.depth
    fan_in, width = w[layer - 1], w[layer]
    if kind is Kind.HE:
        return 2.0 / fan_in
    if kind is Kind.XAVIER:
        return 1.0 / fan_in
    if layer == n:
        return 1.0 / (fan_in + 1)
    if kind is Kind.LPS:
        return 2.0 / (width * (fan_in + 1))
    return 1.0 / (width * (fan_in + 1))


def selection_probabilities(n: int) -> np.ndarray:
    """p_l = 2^l / (2^(n+1) - 1) for l = 1..n."""
    return np.array([2.0**l for l in range(1, n + 1)]) / (2.0 ** (n + 1) - 1)


def layer_selection(n: int, mode=Selection.BERNOULLI, rng=None, d: Optional[int] = None) -> np.ndarray:
    """Boolean mask over layers 1..n (index 0 is layer 1).

    ``bernoulli`` selects layer l independently with probability p_l.
    ``bits`` draws d uniformly from 1..2^(n+1)-2 and reads its low bits,
    least significant bit to layer n; bits above the n-th are ignored.
    ``d`` overrides the draw in bits mode.
    """
    if n < 2:
        raise ValidationError("layer selection needs n >= 2")
    mode = Selection(mode)
    if mode is Selection.BERNOULLI:
        return rng.random(n) < selection_probabilities(n)
    if d is None:
        d = int(rng.integers(1, 2 ** (n + 1) - 1))
    mask = np.zeros(n, dtype=bool)
    for layer in range(n, 0, -1):
        mask[layer - 1] = d % 2 == 1
        d //= 2
    return mask


def reinit_pass(params: ParamSet, mask, spec: NetSpec, rngs, kind=Kind.LPS, redraw_prob=0.5) -> ParamSet:
    """One re-initialization pass; returns a new ParamSet.

    ``rngs`` is either one Generator or a callable ``layer -> Generator``.
    In every masked layer, entries <= 0 are redrawn with probability
    ``redraw_prob``; positive entries and unmasked layers are left alone.
    """
    kind = Kind(kind)
    out = params.copy()
    for layer, chosen in enumerate(mask, start=1):
        if not chosen:
            continue
        rng = rngs(layer) if callable(rngs) else rngs
        std = np.sqrt(layer_variance(spec, kind, layer))
        for arr in (out.weights[layer - 1], out.biases[layer - 1]):
            hit = (arr <= 0) & (rng.random(arr.shape) < redraw_prob)
            arr[hit] = rng.normal(0.0, std, size=int(hit.sum()))
    return out


def _step1(spec, kind, seed, trial):
    ws, bs = [], []
    for layer, (m, k) in enumerate(spec.layer_shapes, start=1):
        rng = stream(seed, trial, layer, 0)
        std = np.sqrt(layer_variance(spec, kind, layer))
        ws.append(rng.normal(0.0, std, size=(m, k)))
        bs.append(rng.normal(0.0, std, size=m))
    return ParamSet(ws, bs)


def init_params(spec: NetSpec, scheme: InitScheme, seed: int, trial: int = 0) -> ParamSet:
    """Draw an initialization; deterministic in ``(spec, scheme, seed, trial)``.

    He and Xavier sample biases from the same law as the weights;
    ``bias_mode="zero"`` zeroes all biases at the end for any kind. In
    Bernoulli selection the output layer is never re-initialized; bit
    selection follows the literal loop over all n layers.
    """
    params = _step1(spec, scheme.kind, seed, trial)
    n = spec.depth
    for rnd in range(1, scheme.reinit_count + 1):
        sel_rng = stream(seed, trial, 0, rnd)
        if n >= 2:
            mask = layer_selection(n, scheme.selection_mode, sel_rng)
        else:
            mask = np.zeros(1, dtype=bool)
        if scheme.selection_mode is Selection.BERNOULLI:
            mask[-1] = False
        params = reinit_pass(
            params, mask, spec, lambda layer, r=rnd: stream(seed, trial, layer, r), scheme.kind
        )
    if scheme.bias_mode is BiasMode.ZERO:
        for b in params.biases:
            b[:] = 0.0
    return params
