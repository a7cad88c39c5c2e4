"""Brute-force proximal and conjugate oracles.

These are deliberately independent of the closed-form shrinkage
operators: a coarse grid scan followed by golden-section refinement on
the bracketing cell. They are the ground truth the closed forms are
tested against, so they must stay free of shortcuts.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .shrinkage import Penalty

__all__ = [
    "sprox_oracle_1d",
    "sprox_oracle_nd",
    "convex_conjugate_1d",
    "convex_conjugate_batch",
    "conjugate_penalty",
    "ConjugateResult",
]

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_min(f, lo, hi, iters: int):
    """Vectorised golden-section minimisation over per-element brackets.

    `lo`, `hi` are arrays of bracket endpoints; `f` must broadcast.
    Returns the bracket midpoints after `iters` shrink steps.
    """
    a = np.asarray(lo, dtype=float).copy()
    b = np.asarray(hi, dtype=float).copy()
    for _ in range(iters):
        gap = _INVPHI * (b - a)
        c = b - gap
        d = a + gap
        take = f(c) < f(d)
        b = np.where(take, d, b)
        a = np.where(take, a, c)
    return 0.5 * (a + b)


def _refine_iters(refine_tol: float) -> int:
    # shrink factor per step is 1/phi
    return max(int(np.ceil(np.log(refine_tol) / np.log(_INVPHI))), 1)


def sprox_oracle_1d(penalty: Penalty, x: float, gamma: float = 1.0,
                    lo: float | None = None, hi: float | None = None,
                    coarse_steps: int = 4001, refine_tol: float = 1e-8) -> float:
    """Minimise gamma*phi(y) + (x-y)^2/2 by coarse scan plus golden section.

    Valid only while gamma * weak_convexity < 1, which makes the
    penalised objective strongly convex with a unique minimiser. +inf
    penalty values are allowed and simply lose the scan.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if gamma * penalty.weak_convexity >= 1.0:
        raise ValueError(
            "gamma * weak_convexity must stay below 1 for a unique minimiser "
            f"(got {gamma * penalty.weak_convexity:.3g})"
        )
    if lo is None or hi is None:
        span = abs(x) + 10.0 * gamma
        lo = -span if lo is None else lo
        hi = span if hi is None else hi
    if not lo < hi:
        raise ValueError("empty search interval")

    def objective(y):
        y = np.asarray(y, dtype=float)
        return gamma * penalty(y) + 0.5 * (x - y) ** 2

    grid = np.linspace(lo, hi, coarse_steps)
    vals = objective(grid)
    finite = np.isfinite(vals)
    if not np.any(finite):
        raise ValueError("penalty is +inf on the whole search interval")
    best = int(np.argmin(np.where(finite, vals, np.inf)))
    cell_lo = grid[max(best - 1, 0)]
    cell_hi = grid[min(best + 1, coarse_steps - 1)]
    y = _golden_min(objective, np.asarray([cell_lo]), np.asarray([cell_hi]),
                    _refine_iters(refine_tol))
    return float(y[0])


def sprox_oracle_nd(penalty_fn: Callable[[np.ndarray], np.ndarray],
                    weak_convexity: float, x, gamma: float = 1.0,
                    span: float | None = None, coarse_steps: int = 401,
                    zoom_rounds: int = 2, zoom_steps: int = 41) -> np.ndarray:
    """Exhaustive grid minimisation of gamma*phi(y) + ||x-y||^2/2 in k <= 2 dims.

    ``penalty_fn`` maps an (N, k) array of candidate points to N values.
    After the coarse scan the grid is zoomed onto the best cell
    ``zoom_rounds`` times.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    k = x.size
    if k > 2:
        raise ValueError("brute-force oracle supports at most 2 dimensions")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if gamma * weak_convexity >= 1.0:
        raise ValueError("gamma * weak_convexity must stay below 1")
    if span is None:
        span = float(np.linalg.norm(x)) + 10.0 * gamma

    def objective(points):
        diff = points - x
        return gamma * penalty_fn(points) + 0.5 * np.sum(diff * diff, axis=-1)

    center = x.copy()
    half = span
    steps = coarse_steps
    best_pt = center
    for _ in range(zoom_rounds + 1):
        axes = [np.linspace(c - half, c + half, steps) for c in center]
        if k == 1:
            points = axes[0].reshape(-1, 1)
        else:
            g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
            points = np.stack([g0.ravel(), g1.ravel()], axis=-1)
        vals = objective(points)
        vals = np.where(np.isfinite(vals), vals, np.inf)
        best_pt = points[int(np.argmin(vals))]
        center = best_pt
        half = 2.0 * (2.0 * half / (steps - 1))  # two cells around the winner
        steps = zoom_steps
    return best_pt


@dataclass(frozen=True)
class ConjugateResult:
    value: float
    at_boundary: bool


def convex_conjugate_batch(penalty: Penalty, us, lo: float | None = None,
                           hi: float | None = None, coarse_steps: int = 4001,
                           refine_tol: float = 1e-8, max_widen: int = 3):
    """Conjugate of the convexified penalty at many points at once.

    Computes sup_y (u*y - phi_check(y)) on a grid with golden-section
    refinement, widening the interval (up to ``max_widen`` times) while
    the sup sits on the search boundary. Returns ``(values, at_boundary)``
    arrays; a raised boundary flag means the conjugate is judged
    unbounded (+inf) at that point.
    """
    us = np.atleast_1d(np.asarray(us, dtype=float))
    if us.size == 0:
        raise ValueError("need at least one conjugate evaluation point")
    if lo is None or hi is None:
        span = 10.0 * (1.0 + float(np.max(np.abs(us))))
        lo = -span if lo is None else lo
        hi = span if hi is None else hi

    def neg_obj(u_col, y):
        # minimise phi_check(y) - u y  ==  maximise u y - phi_check(y)
        return penalty.convexified(y) - u_col * y

    for _ in range(max_widen + 1):
        grid = np.linspace(lo, hi, coarse_steps)
        phi_grid = penalty.convexified(grid)
        best = np.empty(us.size, dtype=int)
        for start in range(0, us.size, 512):  # chunked to bound memory
            block = us[start:start + 512, None]
            vals = phi_grid[None, :] - block * grid[None, :]
            vals = np.where(np.isfinite(vals), vals, np.inf)
            best[start:start + 512] = np.argmin(vals, axis=1)
        at_boundary = (best == 0) | (best == coarse_steps - 1)
        if not np.any(at_boundary):
            break
        lo, hi = 4.0 * lo, 4.0 * hi
    cell_lo = grid[np.maximum(best - 1, 0)]
    cell_hi = grid[np.minimum(best + 1, coarse_steps - 1)]
    y_star = _golden_min(lambda y: neg_obj(us, y), cell_lo, cell_hi,
                         _refine_iters(refine_tol))
    values = us * y_star - penalty.convexified(y_star)
    return values, at_boundary


def convex_conjugate_1d(penalty: Penalty, u: float, lo: float | None = None,
                        hi: float | None = None, coarse_steps: int = 4001,
                        refine_tol: float = 1e-8, max_widen: int = 3) -> ConjugateResult:
    """Scalar wrapper around :func:`convex_conjugate_batch`."""
    values, flags = convex_conjugate_batch(
        penalty, [u], lo=lo, hi=hi, coarse_steps=coarse_steps,
        refine_tol=refine_tol, max_widen=max_widen,
    )
    return ConjugateResult(float(values[0]), bool(flags[0]))


def conjugate_penalty(penalty: Penalty, scale: float = 1.0,
                      coarse_steps: int = 4001, refine_tol: float = 1e-8) -> Penalty:
    """scale * conjugate-of-convexified-penalty, packaged as a convex Penalty.

    Unbounded points evaluate to +inf, so downstream grid oracles skip
    them. Used to exercise the decomposition identities oracle-vs-oracle.
    """

    def evaluator(y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        values, flags = convex_conjugate_batch(
            penalty, y, coarse_steps=coarse_steps, refine_tol=refine_tol)
        return scale * np.where(flags, np.inf, values)

    return Penalty(evaluator, 0.0, f"{scale}*conj({penalty.name})")
