import numpy as np


def hessian(f, x, step=1e-4):
    """Central-difference Hessian of scalar ``f`` at ``x``."""
    x = np.asarray(x, dtype=float)
    k = x.size
    h = step * np.maximum(1.0, np.abs(x))
    H = np.empty((k, k))
    f0 = f(x)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            val = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (
                4.0 * h[i] * h[j]
            )
            H[i, j] = H[j, i] = val
    return H


def jacobian(g, x, step=1e-6):
    """Central-difference Jacobian of vector ``g``; symmetrized when square."""
    x = np.asarray(x, dtype=float)
    h = step * np.maximum(1.0, np.abs(x))
    cols = []
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h[i]
        cols.append((np.asarray(g(x + e)) - np.asarray(g(x - e))) / (2.0 * h[i]))
    J = np.column_stack(cols)
    if J.shape[0] == J.shape[1]:
        J = 0.5 * (J + J.T)
    return J


def safe_inverse(H):
    """Inverse of a symmetric positive-definite matrix, or ``None`` if singular."""
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        return None
    inv_l = np.linalg.inv(L)
    out = inv_l.T @ inv_l
    return out if np.all(np.isfinite(out)) else None
