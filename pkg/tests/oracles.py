"""Independent numerical oracles shared by several test modules."""

import math

import numpy as np

from metaflex.core import ArmData, MetaDataset

GOLD = (math.sqrt(5) - 1) / 2


def matrix_restricted_loglik(tau2, y, v):
    """Textbook matrix form: -(log|V| + log|X'V^-1 X| + r'Pr) / 2 with X a column of ones."""
    V = np.diag(v + tau2)
    Vi = np.linalg.inv(V)
    X = np.ones((y.size, 1))
    XtViX = X.T @ Vi @ X
    P = Vi - Vi @ X @ np.linalg.inv(XtViX) @ X.T @ Vi
    return -0.5 * (np.linalg.slogdet(V)[1] + np.linalg.slogdet(XtViX)[1] + y @ P @ y)


def golden_max(f, a, b, tol=1e-10):
    c, d = b - GOLD * (b - a), a + GOLD * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLD * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLD * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def brute_reml(y, v):
    upper = 20.0 * max(float(np.var(y)), 0.01) + 1.0
    grid = np.concatenate([[0.0], np.geomspace(1e-6, upper, 600)])
    vals = [matrix_restricted_loglik(t, y, v) for t in grid]
    k = int(np.argmax(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    return golden_max(lambda t: matrix_restricted_loglik(t, y, v), a, b)


def random_effect_sets(n_sets, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n_sets):
        k = int(rng.integers(3, 30))
        v = rng.uniform(0.01, 1.0, k)
        tau2 = rng.choice([0.0, 0.05, 0.3, 2.0])
        yield rng.normal(rng.normal(), np.sqrt(v + tau2)), v


def conjugate_problem(seed=3, tau=0.3):
    rng = np.random.default_rng(seed)
    v = rng.uniform(0.05, 0.5, 12)
    y = rng.normal(0.4, np.sqrt(v + tau**2))
    w = 1.0 / (v + tau**2)
    prec = w.sum() + 1.0 / 1000.0**2
    return y, v, (w * y).sum() / prec, prec**-0.5


def two_block_data(m=2000, per_block=7):
    """Arms with control risk 0.5 and log odds ratios of -2.5 or +2.5, so v_i is about 0.009."""
    studies = []
    for i in range(2 * per_block):
        theta = -2.5 if i < per_block else 2.5
        t = int(round(m / (1 + math.exp(-theta))))
        studies.append(ArmData(f"s{i + 1}", t, m, m // 2, m))
    return MetaDataset(tuple(studies))
