"""Independent reference implementations used to derive expected values.

These are written from the textbook definitions with plain Python floats and
do not import anything from ``popr``.
"""

from __future__ import annotations

import math


def js_bits(p, q):
    m = [(a + b) / 2 for a, b in zip(p, q)]

    def kl(x, y):
        return sum(a * math.log2(a / b) for a, b in zip(x, y) if a > 0)

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def kl_bits(p, q):
    return sum(a * math.log2(a / b) for a, b in zip(p, q) if a > 0)


def smoothed_one_hot(index, n, eps):
    return [((1.0 if i == index else 0.0) + eps) / (1.0 + n * eps) for i in range(n)]


def mmd2_biased(xs, ys, bandwidths):
    def k(a, b):
        d2 = sum((u - v) ** 2 for u, v in zip(a, b))
        return sum(math.exp(-d2 / (2 * h * h)) for h in bandwidths)

    def mean_k(a, b):
        return sum(k(u, v) for u in a for v in b) / (len(a) * len(b))

    return mean_k(xs, xs) + mean_k(ys, ys) - 2 * mean_k(xs, ys)


def beta_pdf(x, a, b):
    return math.exp((a - 1) * math.log(x) + (b - 1) * math.log(1 - x) + math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b))


def spearman(pred, truth):
    rank_p = {k: i for i, k in enumerate(pred)}
    rank_t = {k: i for i, k in enumerate(truth)}
    n = len(pred)
    d2 = sum((rank_p[k] - rank_t[k]) ** 2 for k in pred)
    return 1 - 6 * d2 / (n * (n * n - 1))


def ndcg(pred, truth):
    n = len(truth)
    rel = {k: n - i for i, k in enumerate(truth)}

    def dcg(order):
        return sum((2 ** rel[k] - 1) / math.log2(i + 2) for i, k in enumerate(order))

    return dcg(pred) / dcg(truth)


def trapezoid_cdf(pdf, grid_points=1000):
    """Grid-integrated CDF of an unnormalised density on [0, 1]."""
    xs = [i / (grid_points - 1) for i in range(grid_points)]
    ys = [pdf(x) for x in xs]
    cdf = [0.0]
    for i in range(1, grid_points):
        cdf.append(cdf[-1] + 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]))
    total = cdf[-1]
    return xs, [c / total for c in cdf]


def ks_distance(samples, xs, cdf):
    """Two-sided KS statistic of ``samples`` against a piecewise-linear CDF."""
    import bisect

    data = sorted(samples)
    n = len(data)

    def F(x):
        j = bisect.bisect_right(xs, x)
        if j <= 0:
            return 0.0
        if j >= len(xs):
            return 1.0
        x0, x1 = xs[j - 1], xs[j]
        return cdf[j - 1] + (cdf[j] - cdf[j - 1]) * (x - x0) / (x1 - x0)

    d = 0.0
    for i, x in enumerate(data):
        f = F(x)
        d = max(d, (i + 1) / n - f, f - i / n)
    return d


def ring_expert_return(n_states, slip, length, episodes, rng):
    """Monte-Carlo return of the ring expert with Python's own ``random`` stream."""
    total = 0.0
    for _ in range(episodes):
        s = 0
        for _ in range(length):
            a = 1 if s == n_states - 1 else 0
            if rng.random() < slip:
                o = rng.randrange(n_states - 1)
                s = o if o < s else o + 1
            else:
                s = (s + 1) % n_states if a == 0 else (s - 1) % n_states
            total += s
    return total / episodes
