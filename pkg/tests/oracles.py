"""Independent reference implementations used to check the package.

Everything here is written directly from the definitions with plain loops and
the standard library, sharing no code with ``pktcount`` beyond data classes.
"""

import math


def log_binom_pmf(c, n, p):
    return math.log(math.comb(n, c)) + c * math.log(p) + (n - c) * math.log1p(-p)


def log_p_reduced(b, d, f, r):
    """``b = (b0, b_f, b_r, b_d, b_rd)``."""
    b0, bf, br, bd, brd = b
    return b0 + bf * f + br * r + bd * d + brd * r * d


def clamped_p(logp, eps=1e-9):
    return min(max(math.exp(logp), eps), 1 - eps)


def normal_logpdf(x, mu, sd):
    return -0.5 * math.log(2 * math.pi) - math.log(sd) - 0.5 * ((x - mu) / sd) ** 2


def brute_pcmcl_log_posterior(xs, ys, speeds, tau1, tau2, counts, n_sent, beacons, stack_of, coeffs,
                              f, r, delta, W, L, s_max, floor=0.05):
    """Straight transcription of the trajectory posterior.

    ``beacons`` is a list of (x, y, group); ``stack_of(aisle, group)`` gives the
    stack count; ``coeffs[s]`` is a reduced 5-tuple; ``counts[i][k]``.
    """
    n = len(xs)
    for i in range(n):
        if not (0 <= xs[i] <= W and 0 <= ys[i] <= L):
            return -math.inf
    for s in speeds:
        if not (0 <= s <= s_max):
            return -math.inf
    if not (0 <= tau1 <= tau2 <= L):
        return -math.inf
    lp = -math.log(W) - math.log(L)  # first position
    lp += -(n - 1) * math.log(s_max)  # speeds
    lp += math.log(2.0 / (L * L))  # ordered thresholds: two uniforms on [0, L], sorted
    for i in range(1, n):
        sd = max(speeds[i - 1] * delta, floor)
        lp += normal_logpdf(xs[i], xs[i - 1], sd) + normal_logpdf(ys[i], ys[i - 1], sd)
    for i in range(n):
        if ys[i] < tau1:
            a = 0
        elif ys[i] <= tau2:
            a = 1
        else:
            a = 2
        for k, (bx, by, g) in enumerate(beacons):
            d = math.sqrt((xs[i] - bx) ** 2 + (ys[i] - by) ** 2)
            p = clamped_p(log_p_reduced(coeffs[stack_of(a, g)], d, f, r))
            lp += log_binom_pmf(counts[i][k], n_sent[i], p)
    return lp


def grid_moments(logf, lo, hi, n=2000):
    """Mean and sd of the density proportional to ``exp(logf)`` by midpoint quadrature."""
    h = (hi - lo) / n
    xs = [lo + (j + 0.5) * h for j in range(n)]
    lv = [logf(x) for x in xs]
    m = max(lv)
    w = [math.exp(v - m) for v in lv]
    z = sum(w)
    mean = sum(wi * x for wi, x in zip(w, xs)) / z
    var = sum(wi * (x - mean) ** 2 for wi, x in zip(w, xs)) / z
    return mean, math.sqrt(var)


def ar1_ess(n, rho):
    return n * (1 - rho) / (1 + rho)


def nearest_rank(values, q):
    v = sorted(values)
    return v[max(1, math.ceil(q * len(v))) - 1]
