"""Legendre projection of activation functions on [-1, 1].

The degree-d projection of an activation ``f`` is

    P_d f = sum_k alpha_k L_k(x),   alpha_k = (f, L_k) / ||L_k||^2,

with ``||L_k||^2 = 2 / (2k + 1)``. For ReLU the coefficients have a closed
form (see :func:`relu_legendre_coeff`); for anything else they are computed
by composite Gauss-Legendre quadrature split at the function's kinks.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as nppoly

from .errors import NumericalError, ValidationError

MAX_DEGREE = 64


def relu(x):
    return np.maximum(x, 0.0)


@dataclass(frozen=True)
class PolyCoeffs:
    """Degree-d polynomial held both in the Legendre and the monomial basis.

    ``monomial_coeffs[j]`` multiplies ``x**j``.
    """

    degree: int
    legendre_coeffs: tuple
    monomial_coeffs: tuple

    @classmethod
    def from_legendre(cls, coeffs: Sequence[float]) -> "PolyCoeffs":
        coeffs = tuple(float(c) for c in coeffs)
        return cls(len(coeffs) - 1, coeffs, tuple(legendre_to_monomial(coeffs)))

    def __call__(self, x):
        return nppoly.polyval(x, self.monomial_coeffs)

    def eval_legendre(self, x):
        return npleg.legval(x, self.legendre_coeffs)

    def derivative(self, x):
        return nppoly.polyval(x, nppoly.polyder(self.monomial_coeffs))


def _check_degree(k):
    if not 0 <= k <= MAX_DEGREE:
        raise ValidationError(f"degree {k} outside supported range 0..{MAX_DEGREE}")


def legendre_eval(k: int, x):
    """Evaluate L_k(x) by the three-term recurrence.

    (j + 1) L_{j+1} = (2j + 1) x L_j - j L_{j-1}
    """
    _check_degree(k)
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if k == 0:
        return prev[()]
    cur = x.copy()
    for j in range(1, k):
        prev, cur = cur, ((2 * j + 1) * x * cur - j * prev) / (j + 1)
    return cur[()]


@lru_cache(maxsize=None)
def _legendre_monomial_table(k):
    """Exact monomial coefficients of L_k as Fractions (index = power)."""
    p_prev, p_cur = [Fraction(1)], [Fraction(0), Fraction(1)]
    if k == 0:
        return tuple(p_prev)
    for j in range(1, k):
        nxt = [Fraction(0)] * (j + 2)
        for i, c in enumerate(p_cur):
            nxt[i + 1] += Fraction(2 * j + 1, j + 1) * c
        for i, c in enumerate(p_prev):
            nxt[i] -= Fraction(j, j + 1) * c
        p_prev, p_cur = p_cur, nxt
    return tuple(p_cur)


def legendre_to_monomial(coeffs: Sequence[float]) -> list:
    """Convert Legendre-basis coefficients to monomial coefficients.

    Accumulation is exact (rational arithmetic on the binary values of the
    inputs); only the final result is rounded to float.
    """
    d = len(coeffs) - 1
    _check_degree(d)
    out = [Fraction(0)] * (d + 1)
    for k, a in enumerate(coeffs):
        if a == 0:
            continue
        a = Fraction(a)
        for j, c in enumerate(_legendre_monomial_table(k)):
            out[j] += a * c
    return [float(c) for c in out]


def relu_legendre_coeff_exact(k: int) -> Fraction:
    if k < 0:
        raise ValidationError("k must be non-negative")
    if k == 0:
        return Fraction(1, 4)  # (1/2) * int_0^1 x dx
    if k == 1:
        return Fraction(1, 2)  # (3/2) * int_0^1 x^2 dx
    if k % 2:
        return Fraction(0)
    m = k // 2
    return Fraction((-1) ** m * (2 * k + 1) * comb(2 * m, m), 2 * (2 - k * (k + 1)) * 4**m)


def relu_legendre_coeff(k: int) -> float:
    """Closed-form Legendre coefficient alpha_k of ReLU on [-1, 1].

    Even ``k = 2m >= 2``::

        alpha_k = (-1)^m (2k+1) / (2 (2 - k(k+1)) 4^m) * C(2m, m)

    odd ``k >= 3`` gives 0, and ``alpha_0 = 1/4``, ``alpha_1 = 1/2`` come from
    the inner products directly.
    """
    return float(relu_legendre_coeff_exact(k))


def relu_projection(d: int) -> PolyCoeffs:
    _check_degree(d)
    return PolyCoeffs.from_legendre([relu_legendre_coeff(k) for k in range(d + 1)])


@lru_cache(maxsize=None)
def _gauss_nodes(n):
    return npleg.leggauss(n)


def _composite_rule(breaks, panels, n):
    """Nodes/weights of n-point Gauss-Legendre on each of ``panels`` equal
    subintervals of every piece between consecutive breakpoints."""
    t, w = _gauss_nodes(n)
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        xs.append((mid[:, None] + half[:, None] * t).ravel())
        ws.append((half[:, None] * w).ravel())
    return np.concatenate(xs), np.concatenate(ws)


def _breaks(breakpoints):
    inner = sorted(b for b in breakpoints if -1.0 < b < 1.0)
    return [-1.0, *inner, 1.0]


def _converged_integrals(integrand, breakpoints, n, tol, max_panels):
    """Integrate a vector-valued integrand, doubling panels until stable."""
    breaks = _breaks(breakpoints)
    panels = 1
    x, w = _composite_rule(breaks, panels, n)
    prev = integrand(x) @ w
    while panels < max_panels:
        panels *= 2
        x, w = _composite_rule(breaks, panels, n)
        cur = integrand(x) @ w
        diff = np.max(np.abs(cur - prev))
        if diff <= tol * max(1.0, np.max(np.abs(cur))):
            return cur
        prev = cur
    raise NumericalError(
        f"quadrature did not converge with {panels} panels per piece", residual=float(diff)
    )


def project_activation(
    f: Callable,
    d: int,
    breakpoints: Sequence[float] = (0.0,),
    tol: float = 1e-13,
    max_panels: int = 1024,
) -> PolyCoeffs:
    """L2([-1, 1]) projection of ``f`` onto polynomials of degree ``d``.

    Parameters
    ----------
    f : callable
        Vectorised function on [-1, 1].
    d : int
        Degree, at most 64.
    breakpoints : sequence of float
        Points where ``f`` is not smooth; the quadrature is split there.
        The default suits ReLU-like activations.
    tol : float
        Relative stopping tolerance between successive panel refinements.

    Raises
    ------
    NumericalError
        If panel doubling stops improving before ``max_panels``; the
        exception carries the last change as ``residual``.
    """
    _check_degree(d)
    ks = np.arange(d + 1)

    def integrand(x):
        fx = np.asarray(f(x), dtype=float)
        return np.stack([fx * legendre_eval(k, x) for k in ks])

    inner = _converged_integrals(integrand, breakpoints, d + 16, tol, max_panels)
    return PolyCoeffs.from_legendre(inner * (2 * ks + 1) / 2.0)


def l2_error(
    f: Callable,
    d: int,
    breakpoints: Sequence[float] = (0.0,),
    tol: float = 1e-13,
    max_panels: int = 1024,
) -> float:
    """||f - P_d f|| in L2([-1, 1]), by quadrature of the squared remainder."""
    p = project_activation(f, d, breakpoints, tol, max_panels)

    def integrand(x):
        r = np.asarray(f(x), dtype=float) - p.eval_legendre(x)
        return (r * r)[None, :]

    sq = _converged_integrals(integrand, breakpoints, d + 16, tol, max_panels)[0]
    return float(np.sqrt(max(sq, 0.0)))


def legendre_norm_sq(k: int) -> float:
    return 2.0 / (2 * k + 1)


def h1_norm_sq(f: Callable, df: Callable, breakpoints: Sequence[float] = (0.0,)) -> float:
    def integrand(x):
        return (np.asarray(f(x)) ** 2 + np.asarray(df(x)) ** 2)[None, :]

    return float(_converged_integrals(integrand, breakpoints, 32, 1e-13, 1024)[0])


def relu_h1_norm() -> tuple:
    """Return ``(norm, squared_norm)`` of ReLU in H1([-1, 1]): (2/sqrt(3), 4/3)."""
    sq = h1_norm_sq(relu, lambda x: (np.asarray(x) > 0).astype(float))
    return float(np.sqrt(sq)), sq
