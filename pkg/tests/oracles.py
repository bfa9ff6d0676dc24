"""Independent numeric oracles used by the tests.

These deliberately avoid the closed forms in the package: demand is recovered
by projected gradient ascent on the budget simplex, Hicksian bundles by
projected descent along the utility contour, derivatives by central finite
differences.  Slow and simple on purpose; they guard the analytic paths.
"""

from __future__ import annotations

import numpy as np

from edgeworth import prefs


def numeric_demand(u, p, iters: int = 20000, tol: float = 1e-12) -> np.ndarray:
    """Maximize utility on {c > 0 : p . c = 1} by projected gradient ascent."""
    p = np.asarray(p, dtype=np.float64)
    n = p.size
    c = np.full(n, 1.0 / n) / p
    pp = float(p @ p)
    step = 0.1
    for _ in range(iters):
        g = prefs.gradient(u, c)
        d = g - (float(g @ p) / pp) * p
        if float(np.max(np.abs(d))) < tol:
            break
        trial = step
        base = prefs.utility(u, c)
        while trial > 1e-18:
            cand = c + trial * d
            if np.all(cand > 0) and prefs.utility(u, cand) > base:
                c = cand
                break
            trial *= 0.5
        else:
            break
    # exact budget repair
    return c / float(p @ c)


def numeric_hicksian(u, p, target: float, iters: int = 20000, tol: float = 1e-12) -> np.ndarray:
    """Minimize p . c on {c > 0 : u(c) = target} by projected gradient descent."""
    p = np.asarray(p, dtype=np.float64)
    n = p.size

    def pull_to_contour(c: np.ndarray) -> np.ndarray:
        for _ in range(200):
            err = prefs.utility(u, c) - target
            if abs(err) < 1e-14 * max(1.0, abs(target)):
                break
            g = prefs.gradient(u, c)
            c = c - err * g / float(g @ g)
            c = np.maximum(c, 1e-12)
        return c

    c = pull_to_contour(np.full(n, 1.0))
    step = 0.1
    for _ in range(iters):
        g = prefs.gradient(u, c)
        d = -(p - (float(p @ g) / float(g @ g)) * g)
        if float(np.max(np.abs(d))) < tol:
            break
        trial = step
        base = float(p @ c)
        moved = False
        while trial > 1e-18:
            cand = c + trial * d
            if np.all(cand > 0):
                cand = pull_to_contour(cand)
                if float(p @ cand) < base - 1e-16:
                    c = cand
                    moved = True
                    break
            trial *= 0.5
        if not moved:
            break
    return c


def fd_gradient(f, x, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient with per-coordinate relative steps."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for k in range(x.size):
        h = rel_step * max(abs(x[k]), 1e-3)
        hi = x.copy()
        lo = x.copy()
        hi[k] += h
        lo[k] -= h
        out[k] = (f(hi) - f(lo)) / (2 * h)
    return out


def fd_jacobian(f, x, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector-valued function (rows = outputs)."""
    x = np.asarray(x, dtype=np.float64)
    f0 = np.asarray(f(x), dtype=np.float64)
    out = np.empty((f0.size, x.size))
    for k in range(x.size):
        h = rel_step * max(abs(x[k]), 1e-3)
        hi = x.copy()
        lo = x.copy()
        hi[k] += h
        lo[k] -= h
        out[:, k] = (np.asarray(f(hi)) - np.asarray(f(lo))) / (2 * h)
    return out


def fd_hessian(f, x, rel_step: float = 1e-5) -> np.ndarray:
    """Hessian via central differences of a central-difference gradient."""
    h = fd_jacobian(lambda z: fd_gradient(f, z, rel_step), x, rel_step)
    return 0.5 * (h + h.T)


def log_uniform(rng: np.random.Generator, size, lo: float = 0.1, hi: float = 10.0) -> np.ndarray:
    """Draws spanning two decades around 1, the desk-scale test regime."""
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=size))


def clearing_price(economy, allocation, weights=None) -> np.ndarray:
    """Rates q solving the weighted market-clearing system, via scipy.

    With unit weights this is a competitive equilibrium price for the
    economy re-endowed at ``allocation``; any positive weight vector yields
    a member of the trade-compatible price set.
    """
    from scipy.optimize import root

    h = allocation.bundles.shape[0]
    w = np.ones(h) if weights is None else np.asarray(weights, dtype=np.float64)
    rates = np.stack(
        [
            prefs.substitution_rates(hh.spec, b)
            for hh, b in zip(economy.households, allocation.bundles)
        ]
    )
    start = np.log((w @ rates) / w.sum())

    def excess(v: np.ndarray) -> np.ndarray:
        p = np.append(np.exp(v), 1.0)
        total = np.zeros_like(p)
        for wh, hh, b in zip(w, economy.households, allocation.bundles):
            total += wh * (prefs.normalized_demand(hh.spec, p / float(p @ b)) - b)
        return total[:-1]

    sol = root(excess, start, tol=1e-13)
    if not sol.success or float(np.max(np.abs(excess(sol.x)))) > 1e-10:
        raise RuntimeError(f"clearing-price oracle failed: {sol.message}")
    return np.exp(sol.x)
