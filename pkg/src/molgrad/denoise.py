"""Denoiser abstraction and empirical certification.

A denoiser here is an operator T together with a declared cocoercivity
constant beta in (0, 1], meaning beta*T is expected to be firmly
nonexpansive (hence T is 1/beta-Lipschitz). The checks below probe that
claim on seeded samples: Lipschitz estimation, monotonicity,
cocoercivity, the averagedness relation, and Jacobian symmetry
(conservativeness of the vector field).
"""

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import linalg
from .shrinkage import (
    GroupStructure,
    Penalty,
    firm,
    garrote,
    group_firm,
    make_penalty,
    soft,
    vector_firm,
)

__all__ = [
    "Denoiser",
    "make_denoiser",
    "DENOISER_NAMES",
    "tied_weight_relu_denoiser",
    "ViolationReport",
    "CertificationReport",
    "estimate_lipschitz",
    "check_monotonicity",
    "check_cocoercivity",
    "averagedness_relation_check",
    "check_jacobian_symmetry",
    "sample_probes",
    "certify",
]

# absolute slack, scaled by ||x - y||^2, separating float noise from
# genuine violations of the sampled inequalities
VIOLATION_SLACK = 1e-10


@dataclass
class Denoiser:
    """An operator with a declared cocoercivity constant.

    ``induced_penalty``, when present, is the scalar penalty whose
    single-valued prox the operator realises (componentwise for
    separable operators, through the input norm for radial ones).
    """

    fn: Callable[[np.ndarray], np.ndarray]
    beta: float
    name: str
    induced_penalty: Optional[Penalty] = None
    radial: bool = False
    classically_nonexpansive: bool = False
    # probe filter for Jacobian checks: True where T is differentiable
    smooth_at: Optional[Callable[[np.ndarray], bool]] = None

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise ValueError("beta must lie in (0, 1]")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.fn(x), dtype=float)
        if out.shape != x.shape:
            raise ValueError(f"{self.name}: output shape {out.shape} != input {x.shape}")
        return out


def _kink_filter(kinks, margin):
    def ok(x):
        a = np.abs(np.asarray(x, dtype=float))
        return bool(np.all(np.abs(a[..., None] - np.asarray(kinks)) > margin))
    return ok


def make_denoiser(name: str, **params) -> Denoiser:
    """Denoiser catalog addressable by name + parameter map.

    Names: ``soft`` (lam, optional beta), ``firm`` (lambda1, lambda2),
    ``garrote`` (lam), ``vector-firm`` (lambda1, lambda2), ``group-firm``
    (lambda1, lambda2, sizes), ``tied-relu`` (weights). Scalar entries act
    componentwise on vectors of any length.
    """
    margin = 1e-3
    if name == "soft":
        lam = float(params["lam"])
        # nonexpansive; any beta in (0,1] certifies, callers may override
        beta = float(params.get("beta", 1.0 - 1e-9))
        return Denoiser(
            lambda x: soft(x, lam), beta, f"soft(lam={lam})",
            induced_penalty=make_penalty("soft", lam=lam),
            smooth_at=_kink_filter([lam], margin),
        )
    if name == "firm":
        l1, l2 = float(params["lambda1"]), float(params["lambda2"])
        return Denoiser(
            lambda x: firm(x, l1, l2), 1.0 - l1 / l2, f"firm(l1={l1}, l2={l2})",
            induced_penalty=make_penalty("firm", lambda1=l1, lambda2=l2),
            smooth_at=_kink_filter([l1, l2], margin),
        )
    if name == "garrote":
        lam = float(params["lam"])
        return Denoiser(
            lambda x: garrote(x, lam), 0.5, f"garrote(lam={lam})",
            induced_penalty=make_penalty("garrote", lam=lam),
            smooth_at=_kink_filter([lam], margin),
        )
    if name == "vector-firm":
        l1, l2 = float(params["lambda1"]), float(params["lambda2"])

        def norm_ok(x):
            r = float(np.linalg.norm(x))
            return abs(r - l1) > margin and abs(r - l2) > margin and r > margin

        return Denoiser(
            lambda x: vector_firm(x, l1, l2), 1.0 - l1 / l2,
            f"vector-firm(l1={l1}, l2={l2})",
            induced_penalty=make_penalty("firm", lambda1=l1, lambda2=l2),
            radial=True, smooth_at=norm_ok,
        )
    if name == "group-firm":
        l1, l2 = float(params["lambda1"]), float(params["lambda2"])
        groups = params["groups"]
        if not isinstance(groups, GroupStructure):
            groups = GroupStructure.from_sizes(groups)

        def blocks_ok(x):
            for a, b in groups.ranges:
                r = float(np.linalg.norm(np.asarray(x, dtype=float)[a:b]))
                if abs(r - l1) <= margin or abs(r - l2) <= margin or r <= margin:
                    return False
            return True

        return Denoiser(
            lambda x: group_firm(x, groups, l1, l2), 1.0 - l1 / l2,
            f"group-firm(l1={l1}, l2={l2})", smooth_at=blocks_ok,
        )
    if name == "tied-relu":
        return tied_weight_relu_denoiser(params["weights"],
                                         guard=float(params.get("guard", 1e-9)))
    raise KeyError(f"unknown denoiser {name!r}")


DENOISER_NAMES = ("soft", "firm", "garrote", "vector-firm", "group-firm", "tied-relu")


def tied_weight_relu_denoiser(W, guard: float = 1e-9) -> Denoiser:
    """T(x) = W^T relu(W x), a conservative field with symmetric Jacobian.

    With k = ||W^T W||, the operator is 1/k-cocoercive when k > 1; for
    k <= 1 it is already (firmly) nonexpansive, so beta is guarded at
    1/(1+guard) and the denoiser flagged ``classically_nonexpansive``.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or not np.any(W):
        raise ValueError("weight matrix must be a nonzero 2-D array")
    k = linalg.dense_matrix(W).norm_estimate().value ** 2
    fd_margin = 1e-3

    def fn(x):
        return W.T @ np.maximum(W @ x, 0.0)

    def smooth_at(x):
        return bool(np.all(np.abs(W @ np.asarray(x, dtype=float)) > fd_margin))

    return Denoiser(
        fn, 1.0 / max(k, 1.0 + guard), f"tied-relu({W.shape[0]}x{W.shape[1]})",
        classically_nonexpansive=k <= 1.0, smooth_at=smooth_at,
    )


# ---------------------------------------------------------------------------
# sampling helpers

def _sample_box(rng, dim, bounds, n):
    lo, hi = bounds
    if not lo < hi:
        raise ValueError("degenerate sampling box")
    return rng.uniform(lo, hi, size=(n, dim))


def _pair_diffs(den, X, Y):
    TX = np.stack([den(x) for x in X])
    TY = np.stack([den(y) for y in Y])
    return X - Y, TX - TY


def estimate_lipschitz(den: Denoiser, dim: int, bounds=(-20.0, 20.0),
                       n_pairs: int = 10_000, seed: int = 0,
                       near_offset: float = 1e-4) -> float:
    """Empirical lower bound on the best Lipschitz constant of T.

    Takes the max difference ratio over uniform pairs plus near-coincident
    pairs at distance ``near_offset``; the latter catch local slope maxima
    that uniform sampling misses on piecewise-linear operators.
    """
    if n_pairs < 1:
        raise ValueError("need at least one pair")
    rng = np.random.default_rng(seed)
    X = _sample_box(rng, dim, bounds, n_pairs)
    Y = _sample_box(rng, dim, bounds, n_pairs)
    dirs = rng.standard_normal((n_pairs, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    Xn = _sample_box(rng, dim, bounds, n_pairs)
    Yn = Xn + near_offset * dirs

    best = 0.0
    for A, B in ((X, Y), (Xn, Yn)):
        dx, dT = _pair_diffs(den, A, B)
        nx = np.linalg.norm(dx, axis=1)
        keep = nx > 0
        ratios = np.linalg.norm(dT[keep], axis=1) / nx[keep]
        if ratios.size:
            best = max(best, float(np.max(ratios)))
    return best


@dataclass(frozen=True)
class ViolationReport:
    violations: int
    worst_margin: float
    samples: int

    @property
    def passed(self) -> bool:
        return self.violations == 0


def check_monotonicity(den: Denoiser, dim: int, bounds=(-20.0, 20.0),
                       n_pairs: int = 10_000, seed: int = 0) -> ViolationReport:
    """Count sampled pairs with <x - y, T(x) - T(y)> noticeably negative."""
    rng = np.random.default_rng(seed)
    dx, dT = _pair_diffs(den, _sample_box(rng, dim, bounds, n_pairs),
                         _sample_box(rng, dim, bounds, n_pairs))
    inner = np.sum(dx * dT, axis=1)
    slack = VIOLATION_SLACK * np.sum(dx * dx, axis=1)
    margins = inner + slack
    bad = margins < 0
    worst = float(np.min(margins)) if bad.any() else 0.0
    return ViolationReport(int(np.count_nonzero(bad)), worst, n_pairs)


def check_cocoercivity(den: Denoiser, beta: float, dim: int, bounds=(-20.0, 20.0),
                       n_pairs: int = 10_000, seed: int = 0) -> ViolationReport:
    """Test <beta*dT, dx> >= ||beta*dT||^2 on sampled pairs."""
    if not (0.0 < beta <= 1.0):
        raise ValueError("beta must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    dx, dT = _pair_diffs(den, _sample_box(rng, dim, bounds, n_pairs),
                         _sample_box(rng, dim, bounds, n_pairs))
    bdT = beta * dT
    lhs = np.sum(bdT * dx, axis=1) - np.sum(bdT * bdT, axis=1)
    margins = lhs + VIOLATION_SLACK * np.sum(dx * dx, axis=1)
    bad = margins < 0
    worst = float(np.min(margins)) if bad.any() else 0.0
    return ViolationReport(int(np.count_nonzero(bad)), worst, n_pairs)


def averagedness_relation_check(den: Denoiser, beta: float, dim: int,
                                bounds=(-20.0, 20.0), n_pairs: int = 10_000,
                                seed: int = 0) -> ViolationReport:
    """Check that S = T(beta * .) is firmly nonexpansive.

    Equivalent to beta-cocoercivity of T, but exercised through the
    scaled composition rather than the cocoercivity inequality.
    """
    rng = np.random.default_rng(seed)
    X = _sample_box(rng, dim, bounds, n_pairs)
    Y = _sample_box(rng, dim, bounds, n_pairs)
    SX = np.stack([den(beta * x) for x in X])
    SY = np.stack([den(beta * y) for y in Y])
    dS = SX - SY
    dx = X - Y
    lhs = np.sum(dS * dx, axis=1) - np.sum(dS * dS, axis=1)
    margins = lhs + VIOLATION_SLACK * np.sum(dx * dx, axis=1)
    bad = margins < 0
    worst = float(np.min(margins)) if bad.any() else 0.0
    return ViolationReport(int(np.count_nonzero(bad)), worst, n_pairs)


def sample_probes(dim: int, n: int, bounds=(-5.0, 5.0), seed: int = 0,
                  accept: Optional[Callable[[np.ndarray], bool]] = None,
                  max_tries: int = 100_000) -> np.ndarray:
    """Seeded probe points, rejection-sampled away from excluded loci."""
    rng = np.random.default_rng(seed)
    out = []
    tries = 0
    while len(out) < n:
        x = rng.uniform(bounds[0], bounds[1], size=dim)
        tries += 1
        if tries > max_tries:
            raise RuntimeError("probe rejection sampling did not terminate")
        if accept is None or accept(x):
            out.append(x)
    return np.stack(out)


def check_jacobian_symmetry(den: Denoiser, probes, fd_step: float = 1e-6) -> float:
    """Worst relative Jacobian asymmetry over the probe points.

    Forward differences; the caller is responsible for keeping probes
    away from nondifferentiability loci (see ``Denoiser.smooth_at``).
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    worst = 0.0
    for x in probes:
        dim = x.size
        base = den(x)
        J = np.empty((dim, dim))
        for j in range(dim):
            step = np.zeros(dim)
            step[j] = fd_step
            J[:, j] = (den(x + step) - base) / fd_step
        asym = np.linalg.norm(J - J.T) / (1.0 + np.linalg.norm(J))
        worst = max(worst, float(asym))
    return worst


@dataclass
class CertificationReport:
    """Aggregated evidence that an operator honours its declared beta."""

    name: str
    beta: float
    lipschitz_estimate: float
    monotone_violations: int
    monotone_worst: float
    cocoercive_violations: int
    cocoercive_worst: float
    averaged_violations: int
    jacobian_asymmetry: float
    samples_used: int
    verdict: str = field(init=False)
    lipschitz_slack: float = 0.02

    def __post_init__(self):
        ok = (
            self.monotone_violations == 0
            and self.cocoercive_violations == 0
            and self.averaged_violations == 0
            and self.lipschitz_estimate <= (1.0 / self.beta) * (1.0 + self.lipschitz_slack)
        )
        self.verdict = "pass" if ok else "fail"

    def to_json(self) -> str:
        doc = {
            "name": self.name,
            "beta": self.beta,
            "lipschitz_estimate": self.lipschitz_estimate,
            "monotone_violations": self.monotone_violations,
            "monotone_worst": self.monotone_worst,
            "cocoercive_violations": self.cocoercive_violations,
            "cocoercive_worst": self.cocoercive_worst,
            "averaged_violations": self.averaged_violations,
            "jacobian_asymmetry": self.jacobian_asymmetry,
            "samples_used": self.samples_used,
            "verdict": self.verdict,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def certify(den: Denoiser, dim: int = 1, bounds=(-20.0, 20.0),
            n_pairs: int = 10_000, n_probes: int = 100, fd_step: float = 1e-6,
            seed: int = 0, lipschitz_slack: float = 0.02) -> CertificationReport:
    """Run the full certification battery against the declared beta."""
    lip = estimate_lipschitz(den, dim, bounds, n_pairs, seed)
    mono = check_monotonicity(den, dim, bounds, n_pairs, seed + 1)
    coco = check_cocoercivity(den, den.beta, dim, bounds, n_pairs, seed + 2)
    avg = averagedness_relation_check(den, den.beta, dim, bounds, n_pairs, seed + 3)
    probes = sample_probes(dim, n_probes, (-5.0, 5.0), seed + 4, accept=den.smooth_at)
    asym = check_jacobian_symmetry(den, probes, fd_step)
    return CertificationReport(
        name=den.name, beta=den.beta, lipschitz_estimate=lip,
        monotone_violations=mono.violations, monotone_worst=mono.worst_margin,
        cocoercive_violations=coco.violations, cocoercive_worst=coco.worst_margin,
        averaged_violations=avg.violations, jacobian_asymmetry=asym,
        samples_used=n_pairs, lipschitz_slack=lipschitz_slack,
    )
