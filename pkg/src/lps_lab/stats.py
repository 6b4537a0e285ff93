"""Binomial proportion helpers for comparing Monte Carlo rates."""

from math import sqrt

from scipy.stats import norm


def proportion_ci95(count: int, trials: int) -> float:
    p = count / trials
    return 1.96 * sqrt(p * (1 - p) / trials)


def one_sided_p(k_a: int, n_a: int, k_b: int, n_b: int, factor: float = 1.0) -> float:
    """p-value for H0: rate_a <= factor * rate_b against rate_a > factor * rate_b.

    Wald z-test on ``p_a - factor * p_b`` with unpooled variances. Zero
    variance on both sides is resolved by the sign of the difference.
    """
    pa, pb = k_a / n_a, k_b / n_b
    diff = pa - factor * pb
    var = pa * (1 - pa) / n_a + factor**2 * pb * (1 - pb) / n_b
    if var == 0:
        return 0.0 if diff > 0 else 1.0
    return float(norm.sf(diff / sqrt(var)))
