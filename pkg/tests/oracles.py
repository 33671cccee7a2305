"""Independent reference computations shared by the module and acceptance tests."""

import numpy as np


def dirac_oracle(d, n_grid=100001, rounds=4):
    """``max_s min(s d, 2 (1 - s))`` by repeated grid refinement in ``s``."""
    lo, hi = 0.0, 1.0
    for _ in range(rounds):
        s = np.linspace(lo, hi, n_grid)
        v = np.minimum(s * d, 2.0 * (1.0 - s))
        i = int(np.argmax(v))
        step = s[1] - s[0]
        lo, hi = max(s[i] - step, 0.0), min(s[i] + step, 1.0)
    return float(v[i])


def grid_oracle(x, a, h=1e-2):
    """Exhaustive search over f in {-1, -1+h, ..., 1}^n and s in {0, h, ..., 1}.

    Atoms lie on a line, so the Lipschitz constraint only couples neighbours
    and the search over the f-grid factorizes into a chain recursion.
    """
    order = np.argsort(x)
    x, a = x[order], a[order]
    fg = np.round(np.arange(-1.0, 1.0 + h / 2, h), 12)
    best = 0.0
    for s in np.round(np.arange(0.0, 1.0 + h / 2, h), 12):
        ok = np.abs(fg) <= 1.0 - s + 1e-12
        V = np.where(ok, a[-1] * fg, -np.inf)
        for i in range(len(x) - 2, -1, -1):
            reach = np.abs(fg[:, None] - fg[None, :]) <= s * (x[i + 1] - x[i]) + 1e-12
            V = np.where(ok, a[i] * fg + np.max(np.where(reach, V[None, :], -np.inf), axis=1), -np.inf)
        best = max(best, float(V.max()))
    return best


def ou_exact(x0, gamma, b, T, dW, h):
    """Exact OU state at ``T`` driven by fine increments ``dW`` of width ``h`` (midpoint weights)."""
    s = (np.arange(dW.shape[0]) + 0.5) * h
    return np.exp(-gamma * T) * x0 + b * np.sum(np.exp(-gamma * (T - s))[:, None] * dW, axis=0)
