"""Scalar root finding used across the package."""
from __future__ import annotations

import numpy as np
from scipy.optimize import bisect

from .errors import DegenerateResonance, NoResonantAction


def safeguarded_newton(f, df, lo, hi, tol=1e-12, deriv_floor=1e-10, maxiter=200):
    """Newton's method kept inside the bracket ``[lo, hi]`` by bisection.

    Raises NoResonantAction when ``f`` has no sign change on the bracket and
    DegenerateResonance when ``|df|`` drops below ``deriv_floor`` at an iterate.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoResonantAction(f"no sign change on [{lo}, {hi}]: f = {flo:.3g}, {fhi:.3g}")
    if flo > 0:
        lo, hi = hi, lo  # keep f(lo) < 0 < f(hi)
    x = 0.5 * (lo + hi)
    best = x
    best_abs = np.inf
    for _ in range(maxiter):
        fx = f(x)
        if abs(fx) < best_abs:
            best, best_abs = x, abs(fx)
        if abs(fx) < tol:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x
        d = df(x)
        if abs(d) < deriv_floor:
            raise DegenerateResonance(f"|d omega0/dI| = {abs(d):.3g} at I = {x!r}")
        step = x - fx / d
        if not (min(lo, hi) < step < max(lo, hi)):
            step = 0.5 * (lo + hi)
        if step == x or abs(hi - lo) <= 4 * np.spacing(max(abs(lo), abs(hi))):
            return best
        x = step
    return best


def scan_roots(f, lo, hi, n_grid=1024):
    """All roots of ``f`` on ``[lo, hi)`` by a sign scan on ``n_grid`` cells.

    ``f`` must accept arrays.  Roots closer than one cell to each other can be
    missed; callers pick ``n_grid`` accordingly.
    """
    grid = np.linspace(lo, hi, n_grid + 1)
    vals = np.asarray(f(grid), dtype=float)
    period = hi - lo
    roots = []
    for k in range(n_grid):
        a, b = vals[k], vals[k + 1]
        if a == 0.0:
            roots.append(grid[k])
        elif b != 0.0 and np.sign(a) != np.sign(b):
            scalar = lambda t: float(f(np.asarray(t)))  # noqa: E731
            roots.append(bisect(scalar, grid[k], grid[k + 1], xtol=1e-15, maxiter=400))
    # a root sitting exactly on hi is the same as one on lo
    if vals[-1] == 0.0 and vals[0] != 0.0:
        roots.append(lo)
    roots = sorted(r if r < hi else r - period for r in roots)
    return np.array(roots)
