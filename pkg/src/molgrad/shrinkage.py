"""Closed-form shrinkage operators and the weakly convex penalties they induce.

All scalar operators accept numpy arrays and broadcast elementwise; the
penalty evaluators do the same so that brute-force minimisation over a
grid stays vectorised. ``weak_convexity`` is the constant c such that
``penalty + (c/2)|.|^2`` is convex.
"""

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "soft",
    "firm",
    "garrote",
    "mc_penalty",
    "garrote_penalty",
    "moreau_envelope_abs",
    "moreau_envelope_l1",
    "vector_firm",
    "group_firm",
    "GroupStructure",
    "Penalty",
    "make_penalty",
    "PENALTY_NAMES",
]


def _check_firm_params(lambda1: float, lambda2: float) -> None:
    if not (0.0 < lambda1 < lambda2):
        raise ValueError(
            f"firm-family thresholds need 0 < lambda1 < lambda2, got ({lambda1}, {lambda2})"
        )


def soft(x, lam: float):
    """Soft shrinkage: kill |x| <= lam, shift the rest toward zero by lam."""
    if lam <= 0:
        raise ValueError("threshold must be positive")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)
    return out if out.ndim else float(out)


def firm(x, lambda1: float, lambda2: float):
    """Firm shrinkage: dead zone up to lambda1, linear ramp of slope
    lambda2/(lambda2-lambda1) up to lambda2, identity beyond."""
    _check_firm_params(lambda1, lambda2)
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    ramp = np.sign(x) * lambda2 * (a - lambda1) / (lambda2 - lambda1)
    out = np.where(a <= lambda1, 0.0, np.where(a <= lambda2, ramp, x))
    return out if out.ndim else float(out)


def garrote(x, lam: float):
    """Nonnegative-garrote shrinkage: 0 inside the dead zone, x - lam^2/x outside."""
    if lam <= 0:
        raise ValueError("threshold must be positive")
    x = np.asarray(x, dtype=float)
    outside = np.abs(x) > lam
    safe = np.where(outside, x, 1.0)
    out = np.where(outside, x - lam**2 / safe, 0.0)
    return out if out.ndim else float(out)


def mc_penalty(x, lambda2: float):
    """Minimax concave penalty: |x| - x^2/(2 lambda2) capped at lambda2/2."""
    if lambda2 <= 0:
        raise ValueError("lambda2 must be positive")
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    out = np.where(a <= lambda2, a - x * x / (2.0 * lambda2), 0.5 * lambda2)
    return out if out.ndim else float(out)


def garrote_penalty(x, lam: float):
    """The 1/2-weakly convex penalty whose shrinkage map is the garrote.

    The log term is evaluated as log1p of a difference quotient so the
    value stays accurate near x = 0 where the naive form cancels.
    """
    if lam <= 0:
        raise ValueError("threshold must be positive")
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    r = np.hypot(x, 2.0 * lam)
    alg = 0.25 * (a * r - x * x)
    # log(a + r) - log(2 lam) = log1p((a + r - 2 lam) / (2 lam)),
    # with r - 2 lam = x^2 / (r + 2 lam) to avoid cancellation
    log_arg = (a + x * x / (r + 2.0 * lam)) / (2.0 * lam)
    out = alg + lam**2 * np.log1p(log_arg)
    return out if out.ndim else float(out)


def moreau_envelope_abs(x, gamma: float):
    """Value and derivative of the index-gamma smoothing of |.| at x.

    value = min_y |y| + (x-y)^2/(2 gamma);  derivative = (x - soft(x, gamma))/gamma.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    value = np.where(a <= gamma, x * x / (2.0 * gamma), a - 0.5 * gamma)
    grad = (x - soft(x, gamma)) / gamma
    if value.ndim:
        return value, grad
    return float(value), float(grad)


def moreau_envelope_l1(z, gamma: float):
    """Componentwise sum of the smoothed absolute value, with its gradient."""
    z = np.asarray(z, dtype=float)
    values, grad = moreau_envelope_abs(z, gamma)
    return float(np.sum(values)), np.asarray(grad)


def vector_firm(x, lambda1: float, lambda2: float) -> np.ndarray:
    """Radial firm shrinkage: rescale x by firm(||x||)/||x||, zero at the origin."""
    _check_firm_params(lambda1, lambda2)
    x = np.asarray(x, dtype=float)
    nx = float(np.linalg.norm(x))
    if nx == 0.0:
        return np.zeros_like(x)
    return (firm(nx, lambda1, lambda2) / nx) * x


@dataclass(frozen=True)
class GroupStructure:
    """Disjoint half-open index ranges covering 0..n."""

    ranges: tuple[tuple[int, int], ...]

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "GroupStructure":
        edges = np.concatenate([[0], np.cumsum(sizes)])
        return cls(tuple((int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])))

    def validate(self, n: int) -> None:
        if not self.ranges:
            raise ValueError("empty partition")
        spans = sorted(self.ranges)
        cursor = 0
        for a, b in spans:
            if a != cursor or b <= a:
                raise ValueError(f"partition ranges must tile 0..{n} without gaps or overlaps")
            cursor = b
        if cursor != n:
            raise ValueError(f"partition covers 0..{cursor}, expected 0..{n}")


def group_firm(x, groups: GroupStructure, lambda1: float, lambda2: float) -> np.ndarray:
    """Vector firm shrinkage applied independently to each group block."""
    x = np.asarray(x, dtype=float)
    groups.validate(x.size)
    out = np.empty_like(x)
    for a, b in groups.ranges:
        out[a:b] = vector_firm(x[a:b], lambda1, lambda2)
    return out


@dataclass(frozen=True)
class Penalty:
    """A scalar penalty with a declared weak-convexity modulus.

    ``evaluator`` must broadcast over numpy arrays and may return +inf to
    encode an indicator-type penalty.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    weak_convexity: float
    name: str = ""

    def __call__(self, y):
        return self.evaluator(np.asarray(y, dtype=float))

    def convexified(self, y):
        """phi-check(y) = phi(y) + (weak_convexity/2) y^2, convex by declaration."""
        y = np.asarray(y, dtype=float)
        return self.evaluator(y) + 0.5 * self.weak_convexity * y * y


def make_penalty(name: str, **params) -> Penalty:
    """Penalty catalog addressable by name + parameter map.

    Names: ``soft`` (lam |.|), ``firm`` (lambda1 * capped-quadratic with
    knee lambda2), ``garrote`` (lam-parameterised, 1/2-weakly convex).
    """
    if name == "soft":
        lam = float(params["lam"])
        if lam <= 0:
            raise ValueError("threshold must be positive")
        return Penalty(lambda y: lam * np.abs(y), 0.0, f"soft(lam={lam})")
    if name == "firm":
        l1, l2 = float(params["lambda1"]), float(params["lambda2"])
        _check_firm_params(l1, l2)
        return Penalty(
            lambda y: l1 * mc_penalty(y, l2), l1 / l2, f"firm(l1={l1}, l2={l2})"
        )
    if name == "garrote":
        lam = float(params["lam"])
        if lam <= 0:
            raise ValueError("threshold must be positive")
        return Penalty(lambda y: garrote_penalty(y, lam), 0.5, f"garrote(lam={lam})")
    raise KeyError(f"unknown penalty {name!r}")


PENALTY_NAMES = ("soft", "firm", "garrote")
