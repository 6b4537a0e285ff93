"""Acceptance criteria, each at its stated tolerance.

Every test reports one PASS/FAIL line (shown in the terminal summary) before
asserting, so a red criterion still prints its measured numbers.
"""

import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from _oracles import fd_gradient, lps_probs, mp_bound_N, mp_bound_one, relative_error
from _report import report
from lps_lab import bench
from lps_lab.deadness import BoundParams, bound_N_reinit, bound_one_reinit, estimate_dead_prob
from lps_lab.homotopy import ABS_FIT_REFERENCE, build_abs_fit_system, solve_all
from lps_lab.initializers import InitScheme, Kind, Selection, reinit_pass
from lps_lab.mlp import NetSpec, ParamSet, gradient, mse_loss
from lps_lab.poly_approx import l2_error, project_activation, relu, relu_legendre_coeff
from lps_lab.stats import one_sided_p


def test_criterion_1_closed_form_p2_p4():
    t0 = time.perf_counter()
    p2 = project_activation(relu, 2).monomial_coeffs
    p4 = project_activation(relu, 4).monomial_coeffs
    elapsed = time.perf_counter() - t0
    want2 = [Fraction(3, 32), Fraction(1, 2), Fraction(15, 32)]
    want4 = [Fraction(15, 256), Fraction(1, 2), Fraction(105, 128), Fraction(0), Fraction(-105, 256)]
    err = max(abs(a - float(b)) for a, b in zip(p2 + p4, want2 + want4))
    ok = err < 1e-12 and elapsed < 1.0
    report(1, ok, f"max coefficient error {err:.2e} (< 1e-12), {elapsed:.3f}s (< 1s)")
    assert ok


def test_criterion_2_closed_form_vs_quadrature():
    quad = project_activation(relu, 20).legendre_coeffs
    err = max(abs(relu_legendre_coeff(k) - quad[k]) for k in range(21))
    ok = err < 1e-10
    report(2, ok, f"max |closed form - quadrature| for k<=20: {err:.2e} (< 1e-10)")
    assert ok


def test_criterion_3_approximation_rate():
    t0 = time.perf_counter()
    ds = (2, 4, 8, 16, 32)
    errs = [l2_error(relu, d) for d in ds]
    elapsed = time.perf_counter() - t0
    decreasing = all(a > b for a, b in zip(errs, errs[1:]))
    scaled = [d * e for d, e in zip(ds, errs)]
    bounded = max(scaled) <= 2 * scaled[0]
    ok = decreasing and bounded and elapsed < 10
    report(3, ok, f"errors {['%.5f' % e for e in errs]}, d*err max {max(scaled):.4f} <= {2 * scaled[0]:.4f}, "
                  f"{elapsed:.2f}s")
    assert ok


def test_criterion_4_homotopy_reproduction():
    theta2 = np.array([1, -1, 1, 1, 0, 0, 0], dtype=float)
    theta4 = np.array(ABS_FIT_REFERENCE[3])
    t0 = time.perf_counter()
    res = solve_all(build_abs_fit_system(), seed_for_gamma=0)
    elapsed = time.perf_counter() - t0
    real = [s.point.real for s in res.real_solutions]
    d2 = min(np.max(np.abs(p - theta2)) for p in real)
    d4 = min(np.max(np.abs(p - theta4)) for p in real)
    worst = max(s.residual for s in res.solutions)
    checks = {
        "216 paths": len(res.paths) == 216,
        ">=6 real clusters": len(real) >= 6,
        "theta2 within 1e-4": d2 < 1e-4,
        "theta4 within 1e-3": d4 < 1e-3,
        "residuals < 1e-8": worst < 1e-8,
        "< 60 s": elapsed < 60,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    report(4, ok, f"{len(res.paths)} paths, {len(real)} real clusters, d(theta2)={d2:.1e}, d(theta4)={d4:.3e}, "
                  f"max residual {worst:.1e}, {elapsed:.1f}s" + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok, failed


def test_criterion_5_born_dead_ordering():
    spec = NetSpec(bench.family_widths("1d-w2", 10))
    trials = 1000
    t0 = time.perf_counter()
    he = estimate_dead_prob(spec, InitScheme(Kind.HE), trials, 0)
    lps = estimate_dead_prob(spec, InitScheme(Kind.LPS, 1, bench.EXPERIMENT_SELECTION), trials, 0)
    lps_b = estimate_dead_prob(spec, InitScheme(Kind.LPS, 1, Selection.BERNOULLI), trials, 0)
    elapsed = time.perf_counter() - t0
    p = one_sided_p(he.dead_count, trials, lps.dead_count, trials)
    bound = 1 - 0.75**9
    contained = he.estimate <= bound + 3 * he.ci95_halfwidth
    ok = p < 0.05 and contained and elapsed < 120
    report(5, ok, f"He {he.estimate:.3f} vs LPS(reinit=1,bits) {lps.estimate:.3f}: one-sided p={p:.3f} (< 0.05); "
                  f"He <= {bound:.4f}+3CI: {contained}; [bernoulli LPS {lps_b.estimate:.3f}]; {elapsed:.1f}s")
    assert ok


def test_criterion_6_bound_evaluators():
    bp1 = BoundParams((1,) + (2,) * 9, p=(0.0,) * 9)
    v1 = bound_one_reinit(bp1)
    o1 = float(mp_bound_one([2] * 9, [0] * 9, 0))
    v2 = bound_N_reinit(BoundParams((1, 2), N=10))
    o2 = float(mp_bound_N((1, 2), lps_probs(2), 10))
    seq = [bound_N_reinit(BoundParams((1, 2), N=n)) for n in range(0, 201)]
    monotone = all(a >= b for a, b in zip(seq, seq[1:]))
    ok = abs(v1 - o1) < 1e-9 and abs(v2 - o2) < 1e-9 and monotone and seq[-1] < 1e-5
    with mpmath.workdps(20):
        check = mpmath.nstr(1 - mpmath.mpf(3) ** 9 / 4**9, 10)
    report(6, ok, f"one-reinit {v1:.10f} vs mp {o1:.10f} (1-(3/4)^9 = {check}); N-reinit {v2:.10f} vs mp {o2:.10f}; "
                  f"monotone {monotone}; N=200 -> {seq[-1]:.2e}")
    assert ok


def test_criterion_7_reinit_kernel():
    t0 = time.perf_counter()
    spec = NetSpec((1, 1000, 100, 1))
    lines, ok = [], True
    for k in (1, 2, 3):
        rng = np.random.default_rng(100 + k)
        p = ParamSet.from_flat(spec, rng.normal(size=spec.num_params))
        for _ in range(k):
            p = reinit_pass(p, [False, True, False], spec, rng)
        x = np.concatenate([p.weights[1].ravel(), p.biases[1]])
        want = 0.5 * 0.75**k
        sigma = np.sqrt(want * (1 - want) / x.size)
        frac = np.mean(x <= 0)
        ok &= abs(frac - want) < 3 * sigma and x.size >= 10**5
        lines.append(f"k={k}: {frac:.5f} vs {want:.5f} ({abs(frac - want) / sigma:.1f} sigma)")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 10
    report(7, ok, "; ".join(lines) + f"; {elapsed:.2f}s")
    assert ok


def test_criterion_8_table1_direction():
    t0 = time.perf_counter()
    he = bench.run_table1(bench.make_config("f1", "he", runs=100))
    lps = bench.run_table1(bench.make_config("f1", "lps", 4, bench.EXPERIMENT_SELECTION, runs=100))
    elapsed = time.perf_counter() - t0
    p = one_sided_p(lps.non_collapse, 100, he.non_collapse, 100, factor=2.0)
    ok = p < 0.05 and lps.non_collapse >= 2 * he.non_collapse
    report(8, ok, f"f1 non-collapse He {he.non_collapse_pct:.0f}% vs LPS(reinit=4,bits) {lps.non_collapse_pct:.0f}%; "
                  f"one-sided p for LPS > 2*He: {p:.4f} (< 0.05); {elapsed:.0f}s")
    assert ok


def test_criterion_9_gradient_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        depth = int(rng.integers(2, 5))
        widths = (int(rng.integers(1, 3)),) + tuple(int(w) for w in rng.integers(1, 5, depth - 1))
        widths += (int(rng.integers(1, 3)),)
        spec = NetSpec(widths)
        p = ParamSet.from_flat(spec, rng.normal(size=spec.num_params))
        x = rng.uniform(-1, 1, (8, widths[0]))
        y = rng.normal(size=(8, widths[-1]))
        g = gradient(spec, p, x, y).flatten()
        fd = fd_gradient(lambda v: mse_loss(spec, ParamSet.from_flat(spec, v), x, y), p.flatten())
        worst = max(worst, relative_error(g, fd).max())
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 10
    report(9, ok, f"worst per-coordinate relative error over 100 nets {worst:.2e} (< 1e-5), {elapsed:.2f}s")
    assert ok
