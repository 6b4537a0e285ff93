"""Polynomial systems and total-degree homotopy continuation.

The homotopy is H(x, t) = (1 - t) F(x) + t gamma G(x), tracked from t = 1
(start system G with known roots) down to t = 0 (target F). Paths are
tracked in lockstep as numpy batches, each with its own t and step size.
"""

import itertools
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .rng import stream

MAX_PATHS = 10**5
DIVERGENCE_NORM = 1e8


class PolySystem:
    """Square-or-not system of multivariate polynomials.

    ``equations[i]`` is a list of ``(coefficient, exponents)`` terms with
    ``len(exponents) == num_vars``.
    """

    def __init__(self, num_vars: int, equations):
        self.num_vars = int(num_vars)
        eqs = []
        for eq in equations:
            terms = []
            for coeff, exps in eq:
                exps = tuple(int(e) for e in exps)
                if len(exps) != self.num_vars or min(exps, default=0) < 0:
                    raise ValidationError(f"bad exponent vector {exps}")
                terms.append((coeff, exps))
            eqs.append(terms)
        self.equations = eqs

    def __repr__(self):
        return f"PolySystem(num_vars={self.num_vars}, degrees={self.degrees})"

    @property
    def degrees(self) -> tuple:
        return tuple(max((sum(e) for c, e in eq if c != 0), default=0) for eq in self.equations)

    @property
    def is_square(self) -> bool:
        return len(self.equations) == self.num_vars

    def evaluate_exact(self, point) -> list:
        """Evaluate with Python arithmetic (exact for Fraction inputs)."""
        out = []
        for eq in self.equations:
            total = 0
            for c, exps in eq:
                term = c
                for v, e in zip(point, exps):
                    term = term * v**e
                total += term
            out.append(total)
        return out

    @cached_property
    def _compiled(self):
        n = self.num_vars
        neq = len(self.equations)
        slots = n + 1  # value, then d/dx_j
        monos, index = [], {}
        rows, cols, vals = [], [], []

        def add(exps, row, coeff):
            if exps not in index:
                index[exps] = len(monos)
                monos.append(exps)
            rows.append(row)
            cols.append(index[exps])
            vals.append(complex(coeff))

        for i, eq in enumerate(self.equations):
            for c, exps in eq:
                add(exps, i * slots, c)
                for j, e in enumerate(exps):
                    if e:
                        d = list(exps)
                        d[j] -= 1
                        add(tuple(d), i * slots + 1 + j, c * e)
        mat = np.zeros((neq * slots, len(monos)), dtype=complex)
        np.add.at(mat, (rows, cols), vals)
        exps = np.array(monos, dtype=int).reshape(len(monos), n)
        return exps, mat.T.copy(), int(exps.max(initial=0))

    def eval_and_jac(self, x: np.ndarray):
        """Values (P, neq) and Jacobians (P, neq, n) at points ``x`` (P, n)."""
        x = np.asarray(x, dtype=complex)
        exps, mat, dmax = self._compiled
        p, n = x.shape
        pows = np.empty((dmax + 1, p, n), dtype=complex)
        pows[0] = 1.0
        for k in range(1, dmax + 1):
            pows[k] = pows[k - 1] * x
        mono = np.ones((p, exps.shape[0]), dtype=complex)
        for j in range(n):
            mono *= pows[exps[:, j], :, j].T
        out = (mono @ mat).reshape(p, len(self.equations), n + 1)
        return out[:, :, 0], out[:, :, 1:]

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=complex))
        return self.eval_and_jac(x)[0]

    def to_text(self) -> str:
        return "\n".join(_format_equation(eq) for eq in self.equations)


def residual(system: PolySystem, point) -> float:
    """Euclidean norm of the system evaluated at ``point``."""
    point = np.asarray(point, dtype=complex)
    if point.shape != (system.num_vars,):
        raise ValidationError(f"point must have {system.num_vars} coordinates")
    return float(np.linalg.norm(system(point[None, :])[0]))


# -- the one-hidden-layer |x| fitting system --------------------------------

ABS_FIT_VARS = ("w1_1", "w1_2", "w2_1", "w2_2", "b1_1", "b1_2", "b2")


def build_abs_fit_system() -> PolySystem:
    """P_2-activation fit of a width-2 one-hidden-layer net to |x|.

    Variables (w1_1, w1_2, w2_1, w2_2, b1_1, b1_2, b2). The network becomes
    a2 x^2 + a1 x + a0 with

        a2 = 15/32 (w2_1 w1_1^2 + w2_2 w1_2^2)
        a1 = 1/2 (w1_1 w2_1 + w1_2 w2_2) + 15/16 (b1_1 w1_1 w2_1 + b1_2 w1_2 w2_2)
        a0 = b2 + 1/32 w2_1 (15 b1_1^2 + 16 b1_1 + 3) + 1/32 w2_2 (15 b1_2^2 + 16 b1_2 + 3)

    matched to P_2|x| = 15/16 x^2 + 3/16, plus the three symmetry equations
    and b2 = 0. Coefficients are exact Fractions.
    """
    F = Fraction

    def e(**powers):
        return tuple(powers.get(v, 0) for v in ABS_FIT_VARS)

    a2 = [
        (F(15, 32), e(w2_1=1, w1_1=2)),
        (F(15, 32), e(w2_2=1, w1_2=2)),
        (F(-15, 16), e()),
    ]
    a1 = [
        (F(1, 2), e(w1_1=1, w2_1=1)),
        (F(1, 2), e(w1_2=1, w2_2=1)),
        (F(15, 16), e(b1_1=1, w1_1=1, w2_1=1)),
        (F(15, 16), e(b1_2=1, w1_2=1, w2_2=1)),
    ]
    a0 = [(F(1), e(b2=1))]
    for w, b in (("w2_1", "b1_1"), ("w2_2", "b1_2")):
        a0 += [
            (F(15, 32), e(**{w: 1, b: 2})),
            (F(16, 32), e(**{w: 1, b: 1})),
            (F(3, 32), e(**{w: 1})),
        ]
    a0.append((F(-3, 16), e()))
    sym = [
        [(F(1), e(w1_1=2)), (F(-1), e(w1_2=2))],
        [(F(1), e(w2_1=2)), (F(-1), e(w2_2=2))],
        [(F(1), e(b1_1=2)), (F(-1), e(b1_2=2))],
    ]
    return PolySystem(7, [a2, a1, a0, *sym, [(F(1), e(b2=1))]])


# Known real solutions, rounded to 4 decimals.
ABS_FIT_REFERENCE = (
    (4.7773, -4.7773, 0.0438, 0.0438, 1.6228, 1.6228, 0.0),
    (1.0, -1.0, 1.0, 1.0, 0.0, 0.0, 0.0),
    (0.7588, -0.7588, 1.7369, 1.7369, -0.9801, -0.9801, 0.0),
    (-1.0061, 1.0061, 0.9879, 0.9879, -1.0690, -1.0690, 0.0),
    (-1.4877, 1.4877, 0.4518, 0.4518, 0.1927, 0.1927, 0.0),
    (1.2318, -1.2318, 0.6591, 0.6591, 0.0895, 0.0895, 0.0),
)


# -- start system ------------------------------------------------------------


def total_degree_start(system: PolySystem, gamma: complex = 1.0):
    """Start system g_i = gamma (x_i^d_i - 1) and its prod(d_i) roots."""
    if not system.is_square:
        raise ValidationError("total-degree start needs a square system")
    degs = system.degrees
    if min(degs) < 1:
        raise ValidationError("every equation needs positive degree")
    count = int(np.prod(degs))
    if count > MAX_PATHS:
        raise ValidationError(f"Bezout number {count} exceeds the cap of {MAX_PATHS}")
    n = system.num_vars
    eqs = []
    for i, d in enumerate(degs):
        mono = tuple(d if j == i else 0 for j in range(n))
        eqs.append([(gamma, mono), (-gamma, (0,) * n)])
    roots = [np.exp(2j * np.pi * np.arange(d) / d) for d in degs]
    points = [np.array(p) for p in itertools.product(*roots)]
    return PolySystem(n, eqs), points


# -- tracking ----------------------------------------------------------------


class Status(str, Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    TRUNCATED = "truncated"


@dataclass(frozen=True)
class TrackSettings:
    initial_step: float = 0.05
    min_step: float = 1e-7
    corrector_tol: float = 1e-10
    max_corrector_iters: int = 3
    endgame_start_t: float = 0.05
    gamma: complex = complex(np.cos(1.0), np.sin(1.0))
    path_tol: float = 1e-9  # relative Newton step accepted during tracking
    endgame_ratio: float = 0.5  # t -> ratio * t per endgame step
    endgame_final_t: float = 1e-12
    polish_iters: int = 30
    max_steps: int = 20000

    def __post_init__(self):
        if not 0 < self.min_step <= self.initial_step <= 1:
            raise ValidationError("need 0 < min_step <= initial_step <= 1")
        if self.corrector_tol <= 0:
            raise ValidationError("corrector_tol must be positive")


@dataclass
class PathOutcome:
    start_index: int
    status: Status
    endpoint: np.ndarray
    residual: float
    steps_taken: int


def _solve(a, b):
    """Batched a x = b with a least-squares fallback for singular slices."""
    try:
        return np.linalg.solve(a, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.stack([np.linalg.lstsq(ai, bi, rcond=None)[0] for ai, bi in zip(a, b)])


class _Homotopy:
    def __init__(self, target, start, gamma):
        self.f, self.g, self.gamma = target, start, gamma

    def __call__(self, x, t):
        fv, fj = self.f.eval_and_jac(x)
        gv, gj = self.g.eval_and_jac(x)
        tt = t[:, None]
        h = (1 - tt) * fv + tt * self.gamma * gv
        hx = (1 - tt)[..., None] * fj + (tt * self.gamma)[..., None] * gj
        ht = self.gamma * gv - fv
        return h, hx, ht


def _newton(hom, x, t, iters, tol):
    """Up to ``iters`` Newton steps on H(., t); returns (x, ok)."""
    ok = np.zeros(len(x), dtype=bool)
    for _ in range(iters):
        h, hx, _ = hom(x, t)
        with np.errstate(all="ignore"):
            dx = _solve(hx, h)
        x = x - dx
        step = np.linalg.norm(dx, axis=1)
        ok = np.isfinite(step) & (step <= tol * (1 + np.linalg.norm(x, axis=1)))
        if ok.all():
            break
    return x, ok


def polish(system: PolySystem, x: np.ndarray, iters: int = 30, tol: float = 1e-10):
    """Gauss-Newton on F alone (least squares, so rank-deficient Jacobians at
    points of positive-dimensional components are tolerated)."""
    x = np.array(x, dtype=complex)
    for _ in range(iters):
        fv, fj = system.eval_and_jac(x[None, :])
        res = np.linalg.norm(fv[0])
        if not np.isfinite(res):
            break
        dx = np.linalg.lstsq(fj[0], fv[0], rcond=1e-14)[0]
        x = x - dx
        if res < tol * 1e-2 or np.linalg.norm(dx) < 1e-15 * (1 + np.linalg.norm(x)):
            break
    return x, residual(system, x) if np.all(np.isfinite(x)) else float("inf")


def track_paths(target: PolySystem, start: PolySystem, start_points, settings=TrackSettings()):
    """Track every start point from t = 1 to t = 0; one PathOutcome each."""
    if target.num_vars != start.num_vars:
        raise ValidationError("target and start systems must share variables")
    hom = _Homotopy(target, start, settings.gamma)
    x = np.array(start_points, dtype=complex).reshape(len(start_points), target.num_vars)
    p = len(x)
    t = np.ones(p)
    h = np.full(p, settings.initial_step)
    ratio = np.full(p, settings.endgame_ratio)
    wins = np.zeros(p, dtype=int)
    steps = np.zeros(p, dtype=int)
    active = np.ones(p, dtype=bool)
    status = np.array([Status.TRUNCATED] * p, dtype=object)
    eg = settings.endgame_start_t

    for _ in range(settings.max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xi, ti = x[idx], t[idx]
        in_eg = ti <= eg * (1 + 1e-12)
        t_new = np.where(in_eg, ti * ratio[idx], np.maximum(ti - h[idx], eg))
        _, hx, ht = hom(xi, ti)
        with np.errstate(all="ignore"):
            v = -_solve(hx, ht)
        x_pred = xi + v * (t_new - ti)[:, None]
        x_corr, ok = _newton(hom, x_pred, t_new, settings.max_corrector_iters, settings.path_tol)
        steps[idx] += 1

        acc = idx[ok]
        x[acc], t[acc] = x_corr[ok], t_new[ok]
        wins[acc] += 1
        grow = acc[(wins[acc] >= 3) & ~in_eg[ok]]
        h[grow] = np.minimum(2 * h[grow], settings.initial_step)
        wins[grow] = 0

        rej = idx[~ok]
        wins[rej] = 0
        rej_eg, rej_main = rej[in_eg[~ok]], rej[~in_eg[~ok]]
        h[rej_main] /= 2
        ratio[rej_eg] = np.sqrt(ratio[rej_eg])

        norms = np.linalg.norm(x, axis=1)
        diverged = active & (norms > DIVERGENCE_NORM)
        status[diverged] = Status.DIVERGED
        active &= ~diverged
        too_small = active & (h < settings.min_step)
        active &= ~too_small
        # Endgame trouble (near-singular endpoints): stop tracking and let
        # the final polish decide.
        done = active & ((t < settings.endgame_final_t) | (ratio > 1 - 1e-3))
        active &= ~done

    outcomes = []
    for i in range(p):
        if status[i] is Status.DIVERGED:
            outcomes.append(PathOutcome(i, Status.DIVERGED, x[i], float("inf"), int(steps[i])))
            continue
        if t[i] > eg:
            outcomes.append(PathOutcome(i, Status.TRUNCATED, x[i], float("nan"), int(steps[i])))
            continue
        end, res = polish(target, x[i], settings.polish_iters, settings.corrector_tol)
        if res < settings.corrector_tol:
            st = Status.CONVERGED
        elif max(np.linalg.norm(x[i]), np.linalg.norm(end)) > 1e4:
            st = Status.DIVERGED
        else:
            st = Status.TRUNCATED
        outcomes.append(PathOutcome(i, st, end, res, int(steps[i])))
    return outcomes


def track_path(target: PolySystem, start: PolySystem, start_point, settings=TrackSettings()) -> PathOutcome:
    """Track a single path; see :func:`track_paths`."""
    start_point = np.asarray(start_point, dtype=complex)
    res0 = residual(start, start_point)
    if res0 > max(settings.corrector_tol, 1e-8):
        raise ValidationError(f"start point is not a root of the start system (residual {res0:.3g})")
    return track_paths(target, start, [start_point], settings)[0]


# -- solve_all ---------------------------------------------------------------


@dataclass
class Solution:
    point: np.ndarray
    residual: float
    is_real: bool
    multiplicity: int
    path_indices: list = field(default_factory=list)


@dataclass
class SolveResult:
    solutions: list
    paths: list
    gamma: complex

    @property
    def real_solutions(self):
        return [s for s in self.solutions if s.is_real]


def random_gamma(seed: int) -> complex:
    angle = stream(seed, 0).uniform(0.0, 2 * np.pi)
    return complex(np.cos(angle), np.sin(angle))


def cluster_endpoints(points: Sequence[np.ndarray], tol: float = 1e-6):
    """Greedy clustering after a canonical sort; returns lists of indices.

    The sort makes the result independent of the input order.
    """
    order = sorted(
        range(len(points)),
        key=lambda i: tuple(np.round(np.concatenate([points[i].real, points[i].imag]), 9)) + (i,),
    )
    clusters = []
    for i in order:
        for cl in clusters:
            if np.linalg.norm(points[i] - points[cl[0]]) < tol:
                cl.append(i)
                break
        else:
            clusters.append([i])
    return clusters


def solve_all(
    target: PolySystem,
    settings: Optional[TrackSettings] = None,
    seed_for_gamma: int = 0,
    cluster_tol: float = 1e-6,
    real_tol: float = 1e-6,
) -> SolveResult:
    """Track all total-degree paths and cluster the converged endpoints.

    Failed paths are kept in ``paths`` with their status; they never abort
    the batch.
    """
    settings = settings or TrackSettings()
    gamma = random_gamma(seed_for_gamma)
    settings = TrackSettings(**{**settings.__dict__, "gamma": gamma})
    start, points = total_degree_start(target)
    paths = track_paths(target, start, points, settings)
    good = [o for o in paths if o.status is Status.CONVERGED]
    clusters = cluster_endpoints([o.endpoint for o in good], cluster_tol)
    sols = []
    for cl in clusters:
        best = min(cl, key=lambda i: good[i].residual)
        pt = good[best].endpoint
        is_real = bool(np.max(np.abs(pt.imag)) < real_tol)
        sols.append(
            Solution(pt, good[best].residual, is_real, len(cl), sorted(good[i].start_index for i in cl))
        )
    return SolveResult(sols, paths, gamma)


# -- text format ---------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<paren>\([^)]*\))|(?P<var>x(?P<idx>\d+)(?:\^(?P<exp>\d+))?)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?(?:/\d+)?j?)|(?P<op>[+\-*]))"
)


def _parse_coeff(text):
    text = text.replace(" ", "")
    if text.startswith("("):
        text = text[1:-1]
    if "j" in text:
        return complex(text)
    return Fraction(text)


def parse_system(text: str, num_vars: Optional[int] = None) -> PolySystem:
    """Parse one equation per line; terms like ``3/4 * x1^2 x3 - (1-2j) x2``.

    Variables are ``x1..xk`` (1-based). Blank lines and ``#`` comments are
    skipped.
    """
    raw = []
    nv = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        terms, sign, coeff, mono, pos = [], 1, None, {}, 0
        pending = False

        def flush():
            nonlocal coeff, mono, sign, pending
            if pending:
                terms.append((sign * (coeff if coeff is not None else 1), dict(mono)))
            sign, coeff, mono, pending = 1, None, {}, False

        while pos < len(line):
            m = _TOKEN.match(line, pos)
            if not m or m.end() == pos:
                raise ValidationError(f"line {lineno}: cannot parse near {line[pos:]!r}")
            pos = m.end()
            if m.group("op") in ("+", "-"):
                if pending:
                    flush()
                if m.group("op") == "-":
                    sign = -sign
            elif m.group("op") == "*":
                continue
            elif m.group("var"):
                k = int(m.group("idx"))
                if k < 1:
                    raise ValidationError(f"line {lineno}: variables start at x1")
                mono[k] = mono.get(k, 0) + int(m.group("exp") or 1)
                nv = max(nv, k)
                pending = True
            else:
                if coeff is not None:
                    raise ValidationError(f"line {lineno}: two coefficients in one term")
                coeff = _parse_coeff(m.group("paren") or m.group("num"))
                pending = True
        flush()
        if not terms:
            raise ValidationError(f"line {lineno}: empty equation")
        raw.append(terms)
    n = num_vars or nv
    if nv > n:
        raise ValidationError(f"variable x{nv} exceeds num_vars={n}")
    eqs = [[(c, tuple(m.get(j, 0) for j in range(1, n + 1))) for c, m in terms] for terms in raw]
    return PolySystem(n, eqs)


def _format_coeff(c):
    if isinstance(c, complex):
        return f"({c.real!r}{c.imag:+}j)" if c.imag else repr(c.real)
    if isinstance(c, Fraction):
        return str(c)
    return repr(c)


def _format_equation(eq):
    parts = []
    for c, exps in eq:
        mono = " ".join(f"x{j + 1}" + (f"^{e}" if e > 1 else "") for j, e in enumerate(exps) if e)
        parts.append(_format_coeff(c) + (" * " + mono if mono else ""))
    return " + ".join(parts) if parts else "0"
