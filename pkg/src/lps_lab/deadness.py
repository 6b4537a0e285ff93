"""Born-dead detection, Monte Carlo dead probabilities and closed-form bounds."""

from dataclasses import dataclass, field
from math import sqrt
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .errors import NumericalError, ValidationError
from .initializers import InitScheme, init_params, selection_probabilities
from .mlp import NetSpec, ParamSet, forward_flat
from .stats import proportion_ci95

DEAD_VARIANCE = 1e-10
MAX_GRID_POINTS = 10**6


def evaluation_grid(m0: int, step: float = 0.1) -> np.ndarray:
    """Uniform grid on [-1, 1]^m0 with the given spacing, shape (N, m0)."""
    if step == 0.1 and m0 > 3:
        raise ValidationError("a 0.1-step grid in more than 3 input dimensions is too large")
    per_axis = int(round(2.0 / step)) + 1
    if per_axis**m0 > MAX_GRID_POINTS:
        raise ValidationError(f"grid of {per_axis}^{m0} points exceeds {MAX_GRID_POINTS}")
    axis = np.linspace(-1.0, 1.0, per_axis)
    mesh = np.meshgrid(*([axis] * m0), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def _dead_flags(spec, flat, grid):
    out = forward_flat(spec, flat, grid)
    return out.var(axis=1).sum(axis=1) < DEAD_VARIANCE


def is_born_dead(spec: NetSpec, params: ParamSet, grid_step: float = 0.1) -> bool:
    """True iff the network output is (numerically) constant on the grid.

    The test is on output variance, so a live network whose last layer is
    zero also counts as dead.
    """
    params.check(spec)
    flat = params.flatten()
    if not np.all(np.isfinite(flat)):
        raise ValidationError("parameters must be finite")
    return bool(_dead_flags(spec, flat[None, :], evaluation_grid(spec.widths[0], grid_step))[0])


@dataclass
class DeadnessReport:
    trials: int
    dead_count: int
    estimate: float
    ci95_halfwidth: float
    scheme: Optional[InitScheme] = None
    spec: Optional[NetSpec] = field(default=None, repr=False)


def estimate_dead_prob(
    spec: NetSpec,
    scheme: InitScheme,
    trials: int,
    seed: int,
    grid_step: float = 0.1,
    init_fn: Optional[Callable[[int], ParamSet]] = None,
    chunk: int = 256,
) -> DeadnessReport:
    """Fraction of ``trials`` initializations that are born dead.

    Trial ``i`` uses ``init_params(spec, scheme, seed, trial=i)`` unless
    ``init_fn(i)`` is given.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    grid = evaluation_grid(spec.widths[0], grid_step)
    make = init_fn or (lambda i: init_params(spec, scheme, seed, trial=i))
    dead = 0
    for start in range(0, trials, chunk):
        flat = np.stack([make(i).flatten() for i in range(start, min(trials, start + chunk))])
        dead += int(_dead_flags(spec, flat, grid).sum())
    return DeadnessReport(trials, dead, dead / trials, proportion_ci95(dead, trials), scheme, spec)


# -- bounds ----------------------------------------------------------------


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the dead-probability bounds.

    ``widths`` are (m_0, m_1, ..., m_{n-1}); the hidden layers are 1..n-1 and
    n = len(widths). ``p`` holds p_1..p_{n-1}; ``None`` means the LPS values
    2^l / (2^(n+1) - 1).
    """

    widths: tuple
    p: Optional[tuple] = None
    delta: float = 0.0
    N: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ValidationError("need input width and at least one positive hidden width")
        if not 0.0 <= self.delta <= 0.5:
            raise ValidationError("delta must lie in [0, 1/2]")
        if self.N < 0:
            raise ValidationError("N must be non-negative")
        if self.p is not None:
            p = tuple(float(v) for v in self.p)
            if len(p) != len(self.widths) - 1 or not all(0.0 <= v <= 1.0 for v in p):
                raise ValidationError("p needs one value in [0, 1] per hidden layer")
            object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return len(self.widths)

    @property
    def hidden(self) -> np.ndarray:
        return np.array(self.widths[1:], dtype=float)

    @property
    def probs(self) -> np.ndarray:
        if self.p is None:
            return selection_probabilities(self.n)[: self.n - 1]
        return np.array(self.p)

    @property
    def M(self) -> np.ndarray:
        w = np.array(self.widths, dtype=float)
        return w[1:] * (w[:-1] + 1)


def bound_one_reinit(bp: BoundParams) -> float:
    """Upper bound on the born-dead probability after one LPS round.

    1 - prod_l (1 - 2^-m_l ((1 - p_l) + p_l (1 - delta/2)^m_l))
    """
    m, p = bp.hidden, bp.probs
    inner = 2.0**-m * ((1 - p) + p * (1 - bp.delta / 2) ** m)
    return float(np.clip(1 - np.prod(1 - inner), 0.0, 1.0))


def bound_N_reinit(bp: BoundParams) -> float:
    """Upper bound after ``bp.N`` rounds, clamped to [0, 1]:
    1 - prod_l (1 - M_l/2 (1 - p_l/4)^N)."""
    factors = 1 - bp.M / 2 * (1 - bp.probs / 4) ** bp.N
    if np.any(factors < 0):
        return 1.0
    return float(np.clip(1 - np.prod(factors), 0.0, 1.0))


def delta_estimate(v: float, v_tilde: float, c: float) -> float:
    """delta = 1/2 - P(X <= -W c | W > 0), X ~ N(0, v_tilde^2), W ~ N(0, v^2).

    The inner Gaussian integral over X is done exactly (normal CDF); the
    outer one over W by adaptive quadrature.
    """
    if not (v > 0 and v_tilde > 0 and c >= 0):
        raise ValidationError("need v > 0, v_tilde > 0, c >= 0")
    if c == 0:
        return 0.0

    def integrand(w):
        return np.exp(-0.5 * (w / v) ** 2) / (v * sqrt(2 * np.pi)) * special.ndtr(-w * c / v_tilde)

    val, err = integrate.quad(integrand, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12)
    if not np.isfinite(val) or err > 1e-9:
        raise NumericalError("delta quadrature failed", residual=err)
    return float(min(max(0.5 - 2.0 * val, 0.0), 0.5))


def remark_bound(hidden_widths: Sequence[int]) -> float:
    """No re-initialization: 1 - prod (1 - 2^-m_i)."""
    m = np.asarray(hidden_widths, dtype=float)
    return float(1 - np.prod(1 - 2.0**-m))
