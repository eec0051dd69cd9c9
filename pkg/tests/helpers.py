"""Independent reference computations used by the tests.

Everything here is deliberately implemented by a different route than the
package (finite differences, Euclidean projected gradient, exhaustive grids)
so the tests cross-check the production code rather than restating it.
"""

from __future__ import annotations

import math

import numpy as np

from pasto.objective import objective_value_batch


def finite_difference_gradient(f, z, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function at z."""
    z = np.asarray(z, dtype=float)
    out = np.empty(z.size)
    for i in range(z.size):
        zp = z.copy()
        zp[i] += h
        zm = z.copy()
        zm[i] -= h
        out[i] = (f(zp) - f(zm)) / (2.0 * h)
    return out


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, n + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1] + 1
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def kl_prox_reference(weights: np.ndarray, gradient: np.ndarray, gamma: float,
                      iters: int = 20000) -> np.ndarray:
    """Numerically minimize -<g, p> + KL(p || w/|w|) / gamma over the simplex.

    Projected gradient with backtracking; independent of the closed-form
    multiplicative update it is used to check.
    """
    q = weights / weights.sum()

    def value(p: np.ndarray) -> float:
        mask = p > 0
        kl = float(p[mask] @ np.log(p[mask] / q[mask]))
        return float(-(gradient @ p)) + kl / gamma

    def grad(p: np.ndarray) -> np.ndarray:
        pc = np.maximum(p, 1e-300)
        return -gradient + (np.log(pc / q) + 1.0) / gamma

    p = q.copy()
    fp = value(p)
    step = 1.0
    for _ in range(iters):
        g = grad(p)
        while True:
            cand = project_to_simplex(p - step * g)
            fc = value(cand)
            if fc <= fp or step < 1e-18:
                break
            step *= 0.5
        moved = float(np.abs(cand - p).max())
        p, fp = cand, fc
        if moved < 1e-14:
            break
        step = min(step * 2.0, 1e8)
    return p


def simplex_grid_max(mu_values: np.ndarray, objective, steps: int = 100):
    """Exhaustive grid search for max f(mu p) over the simplex.

    Enumerates every integer composition of `steps` into K parts, chunked over
    the first coordinate to bound memory.
    """
    m, k = mu_values.shape
    if k == 1:
        vals = objective_value_batch(objective, np.ones((1, 1)) @ mu_values.T)
        return np.ones(1), float(vals[0])

    best_val = -math.inf
    best_p = None
    if k == 2:
        qs = np.arange(steps + 1)
        points = np.stack([qs, steps - qs], axis=1)
        chunks = [points]
    else:
        mid = k - 2
        base = np.indices((steps + 1,) * mid).reshape(mid, -1).T
        base_sum = base.sum(axis=1)
        chunks = None

    if k == 2:
        iterator = chunks
    else:
        def gen():
            for c in range(steps + 1):
                rem = steps - c - base_sum
                ok = rem >= 0
                if not ok.any():
                    continue
                yield np.concatenate(
                    [np.full((int(ok.sum()), 1), c), base[ok], rem[ok][:, None]],
                    axis=1,
                )
        iterator = gen()

    for points in iterator:
        pmf_rows = points / steps
        vals = objective_value_batch(objective, pmf_rows @ mu_values.T)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val = float(vals[i])
            best_p = pmf_rows[i].copy()
    return best_p, best_val


def nearest_rank_oracle(values, q: float) -> float:
    """Nearest-rank percentile computed the naive way on a python list."""
    ordered = sorted(float(v) for v in values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


def sign_test_p_value(wins: int, losses: int) -> float:
    """One-sided exact sign test: P(#wins >= observed | fair coin)."""
    n = wins + losses
    if n == 0:
        return 1.0
    return sum(math.comb(n, i) for i in range(wins, n + 1)) / 2.0 ** n
