"""Box-constrained limited-memory quasi-Newton minimizer.

Projected-gradient L-BFGS with a monotone backtracking line search
(default) or a strong-Wolfe search.  Objectives may return +inf to mark
forbidden regions (resonance guard bands, unstable spectra); the line
search treats such points as rejected trials and shortens the step, so
iterates never settle in a forbidden region.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    n_eval: int
    converged: bool
    history: list = field(default_factory=list)  # accepted objective values


def minimize_box(
    objective: Objective,
    x0: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    line_search: str = "backtracking",
    memory: int = 8,
    max_iter: int = 2000,
    tol_df: float = 1e-10,
    tol_grad: float = 1e-8,
) -> MinimizeResult:
    """Minimize objective(x) -> (f, grad) subject to lower <= x <= upper."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise InvalidArgumentError("lower bound exceeds upper bound")
    if line_search not in ("backtracking", "wolfe"):
        raise InvalidArgumentError(f"unknown line search {line_search!r}")
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    f, g = objective(x)
    n_eval = 1
    if not np.isfinite(f):
        raise InvalidArgumentError("objective is not finite at the starting point")
    history = [f]
    s_mem: deque = deque(maxlen=memory)
    y_mem: deque = deque(maxlen=memory)
    rho_mem: deque = deque(maxlen=memory)

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        pg = _projected_gradient(x, g, lower, upper)
        if np.max(np.abs(pg)) < tol_grad:
            converged = True
            break
        d = -_two_loop(pg, s_mem, y_mem, rho_mem)
        if float(d @ pg) > -1e-12 * (np.linalg.norm(d) * np.linalg.norm(pg) + 1e-300):
            d = -pg  # stale curvature; fall back to steepest descent

        if line_search == "backtracking":
            step = _backtrack(objective, x, f, g, d, lower, upper)
        else:
            step = _strong_wolfe(objective, x, f, g, d, lower, upper)
        if step is None and not np.array_equal(d, -pg):
            d = -pg
            step = _backtrack(objective, x, f, g, d, lower, upper)
        if step is None:
            break  # no acceptable step along the projected gradient either
        x_new, f_new, g_new, evals = step
        n_eval += evals
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_mem.append(s)
            y_mem.append(y)
            rho_mem.append(1.0 / sy)
        df = f - f_new
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if df < tol_df:
            converged = True
            break
    return MinimizeResult(x, f, g, it, n_eval, converged, history)


def _projected_gradient(x, g, lower, upper):
    pg = g.copy()
    pg[(x <= lower) & (g > 0)] = 0.0
    pg[(x >= upper) & (g < 0)] = 0.0
    return pg


def _two_loop(q, s_mem, y_mem, rho_mem):
    if not s_mem:
        return q
    q = q.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_mem), reversed(y_mem), reversed(rho_mem)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    s, y = s_mem[-1], y_mem[-1]
    q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(s_mem, y_mem, rho_mem), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def _backtrack(objective, x, f, g, d, lower, upper, c1=1e-4, max_halvings=60):
    alpha = 1.0
    evals = 0
    for _ in range(max_halvings):
        x_t = np.clip(x + alpha * d, lower, upper)
        if np.array_equal(x_t, x):
            return None
        f_t, g_t = objective(x_t)
        evals += 1
        slope = float(g @ (x_t - x))
        sufficient = f + c1 * slope if slope < 0 else np.nextafter(f, -np.inf)
        if np.isfinite(f_t) and f_t <= sufficient:
            return x_t, f_t, g_t, evals
        alpha *= 0.5
    return None


def _strong_wolfe(objective, x, f, g, d, lower, upper, c1=1e-4, c2=0.9, max_steps=25):
    """Bracket/zoom on phi(a) = f(clip(x + a d)); falls back on barriers."""

    def phi(a):
        x_t = np.clip(x + a * d, lower, upper)
        f_t, g_t = objective(x_t)
        return x_t, f_t, g_t, float(g_t @ d)

    phi0, dphi0 = f, float(g @ d)
    if dphi0 >= 0:
        return None
    a_prev, f_prev, dphi_prev = 0.0, phi0, dphi0
    a = 1.0
    evals = 0
    best = None
    for i in range(max_steps):
        x_t, f_t, g_t, dphi_t = phi(a)
        evals += 1
        if not np.isfinite(f_t):
            a = 0.5 * (a_prev + a)  # barrier: shrink toward the last good point
            continue
        if f_t > phi0 + c1 * a * dphi0 or (f_t >= f_prev and i > 0):
            best = _zoom(phi, phi0, dphi0, a_prev, f_prev, a, f_t, c1, c2)
            break
        if abs(dphi_t) <= -c2 * dphi0:
            best = (x_t, f_t, g_t, 0)
            break
        if dphi_t >= 0:
            best = _zoom(phi, phi0, dphi0, a, f_t, a_prev, f_prev, c1, c2)
            break
        a_prev, f_prev, dphi_prev = a, f_t, dphi_t
        a *= 2.0
    if best is None:
        return None
    x_t, f_t, g_t, extra = best
    if f_t >= phi0:
        return None
    return x_t, f_t, g_t, evals + extra


def _zoom(phi, phi0, dphi0, a_lo, f_lo, a_hi, f_hi, c1, c2, max_iter=30):
    evals = 0
    result = None
    for _ in range(max_iter):
        a = 0.5 * (a_lo + a_hi)
        x_t, f_t, g_t, dphi_t = phi(a)
        evals += 1
        if not np.isfinite(f_t) or f_t > phi0 + c1 * a * dphi0 or f_t >= f_lo:
            a_hi, f_hi = a, f_t
        else:
            if abs(dphi_t) <= -c2 * dphi0:
                result = (x_t, f_t, g_t, evals)
                break
            if dphi_t * (a_hi - a_lo) >= 0:
                a_hi, f_hi = a_lo, f_lo
            a_lo, f_lo = a, f_t
            result = (x_t, f_t, g_t, evals)
        if abs(a_hi - a_lo) < 1e-14:
            break
    return result
