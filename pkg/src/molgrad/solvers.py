"""Iterative schemes built around shrinkage-type denoisers.

Three solvers live here:

* forward-backward splitting, ``x <- T(x - mu * grad f(x))``, with the
  step-size window validated at configuration time;
* a modified primal-dual splitting scheme whose dual update evaluates a
  denoiser T instead of a proximity operator, with the two step-size
  conditions validated at configuration time;
* the classical Condat-Vu iteration (form II) for smooth + l1-composite
  objectives, used as the reference when verifying the modified scheme.

Every run is single-threaded and deterministic; traces record residuals,
optional objective values, and strided iterate snapshots.
"""

import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from .denoise import Denoiser
from .linalg import LinearMap, QuadraticFidelity, as_vector
from .shrinkage import Penalty, firm, soft

__all__ = [
    "StepSizeError",
    "DivergenceError",
    "SolverTrace",
    "FbsConfig",
    "run_fbs",
    "derive_pd_params",
    "PdConfig",
    "iterate_pd_molgrad",
    "run_pd_molgrad",
    "iterate_condat_vu",
    "run_condat_vu_form2",
    "iterate_pd_heuristic",
    "run_pd_heuristic",
    "implicit_objective",
]

DIVERGENCE_NORM = 1e12


class StepSizeError(ValueError):
    """A step-size condition failed at configuration time."""

    def __init__(self, condition: str, message: str):
        super().__init__(message)
        self.condition = condition


class DivergenceError(RuntimeError):
    """An iterate left the finite range; carries the partial trace."""

    def __init__(self, message: str, trace: "SolverTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass
class SolverTrace:
    """Per-iteration record of a solver run.

    ``residuals[k]`` is the fixed-point residual of update k;
    ``iterates`` holds snapshots every ``stride`` updates plus the final
    point. ``iterations`` equals the number of updates performed.
    """

    stride: int = 10
    residuals: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    iterates: dict = field(default_factory=dict)
    stop_reason: str = ""
    iterations: int = 0
    wall_time: float = 0.0

    def record(self, k: int, x: np.ndarray, residual: float,
               objective: Optional[float] = None) -> None:
        self.residuals.append(float(residual))
        if objective is not None:
            self.objectives.append(float(objective))
        if self.stride > 0 and k % self.stride == 0:
            self.iterates[k] = np.array(x, copy=True)

    def finish(self, k: int, x: np.ndarray, reason: str, t0: float) -> None:
        self.iterates[k] = np.array(x, copy=True)
        self.iterations = len(self.residuals)
        self.stop_reason = reason
        self.wall_time = time.perf_counter() - t0


def _guard_finite(x: np.ndarray, trace: SolverTrace, what: str) -> None:
    if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
        raise DivergenceError(f"{what} diverged (NaN/Inf or norm growth)", trace)


# ---------------------------------------------------------------------------
# forward-backward splitting


@dataclass
class FbsConfig:
    """Forward-backward configuration with step-size window validation.

    Requires f kappa-smooth and rho-strongly convex (kappa >= rho > 0),
    a denoiser with beta in ((kappa-rho)/(kappa+rho), 1), and
    mu in [(1-beta)/rho, (1+beta)/kappa). Construction fails outside the
    window. rho/kappa default to the extreme eigenvalues of A^T A.
    """

    mu: float
    denoiser: Denoiser
    fidelity: QuadraticFidelity
    rho: Optional[float] = None
    kappa: Optional[float] = None
    max_iter: int = 10_000
    stop_tol: Optional[float] = 1e-10

    def __post_init__(self):
        if self.rho is None or self.kappa is None:
            lo, hi = self.fidelity.curvature_bounds()
            self.rho = lo if self.rho is None else self.rho
            self.kappa = hi if self.kappa is None else self.kappa
        if not (0.0 < self.rho <= self.kappa):
            raise StepSizeError(
                "fbs-curvature",
                f"need kappa >= rho > 0, got rho={self.rho}, kappa={self.kappa}",
            )
        beta = self.denoiser.beta
        beta_inf = (self.kappa - self.rho) / (self.kappa + self.rho)
        if not (beta_inf < beta < 1.0):
            raise StepSizeError(
                "fbs-beta-range",
                f"step-size window requires beta in ({beta_inf:.6g}, 1), got {beta}",
            )
        lo = (1.0 - beta) / self.rho
        hi = (1.0 + beta) / self.kappa
        if not (lo <= self.mu < hi):
            raise StepSizeError(
                "fbs-step-size-window",
                f"step-size window requires mu in [{lo:.6g}, {hi:.6g}), got {self.mu}",
            )


def run_fbs(cfg: FbsConfig, x0, objective_fn: Optional[Callable] = None):
    """Iterate x <- T(x - mu * grad f(x)) until the fixed-point residual
    drops below stop_tol * (1 + ||x||) or max_iter is reached.

    Returns ``(x_hat, trace)``; raises :class:`DivergenceError` on
    NaN/Inf or norm blow-up, with the partial trace attached.
    """
    x = as_vector(x0, cfg.fidelity.dim)
    trace = SolverTrace()
    t0 = time.perf_counter()
    T, mu = cfg.denoiser, cfg.mu
    for k in range(cfg.max_iter):
        x_new = T(x - mu * cfg.fidelity.gradient(x))
        _guard_finite(x_new, trace, "forward-backward iterate")
        residual = float(np.linalg.norm(x_new - x))
        obj = objective_fn(x_new) if objective_fn is not None else None
        trace.record(k, x_new, residual, obj)
        if cfg.stop_tol is not None and residual <= cfg.stop_tol * (1.0 + np.linalg.norm(x)):
            trace.finish(k, x_new, "fixed-point", t0)
            return x_new, trace
        x = x_new
    trace.finish(cfg.max_iter - 1, x, "max-iter", t0)
    return x, trace


# ---------------------------------------------------------------------------
# primal-dual splitting with a plugged-in denoiser


def derive_pd_params(rho: float, kappa: float, L_norm: float, beta: float,
                     delta: float = 1.0, gamma: float = 0.9):
    """Step sizes satisfying both primal-dual conditions by construction.

    sigma = delta * rho * beta / (||L||^2 (1 - beta)) saturates the dual
    bound at delta = 1; tau = gamma / (sigma ||L||^2 + kappa/2) keeps the
    step product strictly below one. Undefined at beta >= 1 (zero weak
    convexity): supply sigma explicitly in that case.
    """
    if not (0.0 < beta < 1.0):
        raise ValueError("sigma formula needs beta in (0,1); supply sigma explicitly")
    if not (0.0 < delta <= 1.0 and 0.0 < gamma < 1.0):
        raise ValueError("need delta in (0,1] and gamma in (0,1)")
    if min(rho, kappa, L_norm) <= 0.0:
        raise ValueError("rho, kappa and ||L|| must be positive")
    sigma = delta * rho * beta / (L_norm**2 * (1.0 - beta))
    tau = gamma / (sigma * L_norm**2 + 0.5 * kappa)
    return sigma, tau


@dataclass
class PdConfig:
    """Primal-dual configuration; validates both step-size conditions.

    condition (i):  sigma <= rho*beta / (||L||^2 (1-beta))
    condition (ii): tau * (sigma ||L||^2 + kappa/2) < 1

    ``kappa`` is the smoothness constant of the quadratically deflated
    fidelity f - rho/(2||L||^2) ||L.||^2. Condition (i) is vacuous for a
    denoiser with zero weak convexity (beta effectively 1).
    """

    sigma: float
    tau: float
    L: LinearMap
    denoiser: Denoiser
    fidelity: QuadraticFidelity
    rho: float
    kappa: float
    L_norm: Optional[float] = None
    max_iter: int = 10_000
    stop_tol: Optional[float] = 1e-10

    def __post_init__(self):
        if self.L_norm is None:
            self.L_norm = self.L.norm_upper()
        if min(self.sigma, self.tau, self.rho, self.kappa, self.L_norm) <= 0.0:
            raise StepSizeError("pd-positivity", "all constants must be positive")
        beta = self.denoiser.beta
        wc = (self.denoiser.induced_penalty.weak_convexity
              if self.denoiser.induced_penalty is not None else 1.0 - beta)
        if wc > 0.0 and beta < 1.0:
            bound = self.rho * beta / (self.L_norm**2 * (1.0 - beta))
            if self.sigma > bound * (1.0 + 1e-12):
                raise StepSizeError(
                    "pd-condition-i",
                    f"condition (i) dual step bound: sigma={self.sigma:.6g} exceeds "
                    f"rho*beta/(||L||^2 (1-beta)) = {bound:.6g}",
                )
        product = self.tau * (self.sigma * self.L_norm**2 + 0.5 * self.kappa)
        if product >= 1.0:
            raise StepSizeError(
                "pd-condition-ii",
                f"condition (ii) step product: tau*(sigma ||L||^2 + kappa/2) = "
                f"{product:.6g} must stay below 1",
            )


def iterate_pd_molgrad(cfg: PdConfig, x0, u0) -> Iterator[tuple]:
    """Yield (x_k, u_k) after each update of the modified primal-dual scheme.

    Recursions (s = sigma + rho/||L||^2):
        u~    = u + sigma * L x
        u_new = u~ - sigma * T(u~ / s)
        x_new = x + (tau*rho/||L||^2) L^T L x - tau grad f(x) - tau L^T (2 u_new - u)
    The L^T L term is applied as two operator applications, never
    materialised.
    """
    x = as_vector(x0, cfg.L.input_dim)
    u = as_vector(u0, cfg.L.output_dim)
    sigma, tau, T = cfg.sigma, cfg.tau, cfg.denoiser
    ratio = cfg.rho / cfg.L_norm**2
    s = sigma + ratio
    while True:
        u_tilde = u + sigma * cfg.L.apply(x)
        u_new = u_tilde - sigma * T(u_tilde / s)
        x_new = (
            x + (tau * ratio) * cfg.L.adjoint_apply(cfg.L.apply(x))
            - tau * cfg.fidelity.gradient(x)
            - tau * cfg.L.adjoint_apply(2.0 * u_new - u)
        )
        yield x_new, u_new
        x, u = x_new, u_new


def _run_pd(stepper, x0, u0, max_iter, stop_tol, objective_fn, what):
    x = np.array(x0, dtype=float)
    u = np.array(u0, dtype=float)
    trace = SolverTrace()
    t0 = time.perf_counter()
    for k in range(max_iter):
        x_new, u_new = next(stepper)
        _guard_finite(x_new, trace, what)
        _guard_finite(u_new, trace, what)
        residual = float(np.sqrt(np.linalg.norm(x_new - x) ** 2
                                 + np.linalg.norm(u_new - u) ** 2))
        obj = objective_fn(x_new) if objective_fn is not None else None
        trace.record(k, x_new, residual, obj)
        if stop_tol is not None:
            scale = 1.0 + np.sqrt(np.linalg.norm(x) ** 2 + np.linalg.norm(u) ** 2)
            if residual <= stop_tol * scale:
                trace.finish(k, x_new, "fixed-point", t0)
                return x_new, u_new, trace
        x, u = x_new, u_new
    trace.finish(max_iter - 1, x, "max-iter", t0)
    return x, u, trace


def run_pd_molgrad(cfg: PdConfig, x0, u0,
                   objective_fn: Optional[Callable] = None):
    """Run the modified primal-dual scheme; returns (x_hat, u_hat, trace).

    Stops on the joint primal-dual residual against stop_tol (relative),
    or after max_iter updates. Divergence raises
    :class:`DivergenceError` with the partial trace attached.
    """
    stepper = iterate_pd_molgrad(cfg, x0, u0)
    return _run_pd(stepper, x0, u0, cfg.max_iter, cfg.stop_tol,
                   objective_fn, "primal-dual iterate")


# ---------------------------------------------------------------------------
# classical Condat-Vu baseline (form II)


def iterate_condat_vu(grad_smooth: Callable, dual_prox: Callable,
                      L: LinearMap, sigma: float, tau: float, x0, u0) -> Iterator[tuple]:
    """Generic form-II iteration for min_x h(x) + g(Lx):

        u_new = dual_prox(u + sigma * L x)      # prox of sigma * g^*
        x_new = x - tau * grad_smooth(x) - tau * L^T (2 u_new - u)
    """
    x = as_vector(x0, L.input_dim)
    u = as_vector(u0, L.output_dim)
    while True:
        u_new = dual_prox(u + sigma * L.apply(x))
        x_new = x - tau * grad_smooth(x) - tau * L.adjoint_apply(2.0 * u_new - u)
        yield x_new, u_new
        x, u = x_new, u_new


def l1_dual_prox(sigma: float, lam_g: float) -> Callable:
    """prox of sigma * (lam_g ||.||_1)^*, via the classical decomposition:
    v - sigma * soft(v/sigma, lam_g/sigma), i.e. projection onto the
    lam_g-radius sup-norm ball (the zero map when lam_g == 0)."""
    if lam_g < 0:
        raise ValueError("l1 weight must be nonnegative")
    if lam_g == 0.0:
        return lambda v: np.zeros_like(v)

    def prox(v):
        return v - sigma * soft(v / sigma, lam_g / sigma)

    return prox


def run_condat_vu_form2(grad_smooth: Callable, lam_g: float, L: LinearMap,
                        sigma: float, tau: float, x0, u0,
                        max_iter: int = 10_000,
                        stop_tol: Optional[float] = None,
                        objective_fn: Optional[Callable] = None):
    """Condat-Vu form II for min_x h(x) + lam_g ||L x||_1.

    ``grad_smooth`` evaluates grad h. Returns (x, u, trace); the dual
    iterate converges into the lam_g sup-norm ball (a subgradient of the
    weighted l1 norm at L x_hat).
    """
    if sigma <= 0 or tau <= 0:
        raise StepSizeError("cv-positivity", "sigma and tau must be positive")
    stepper = iterate_condat_vu(grad_smooth, l1_dual_prox(sigma, lam_g),
                                L, sigma, tau, x0, u0)
    return _run_pd(stepper, x0, u0, max_iter, stop_tol, objective_fn,
                   "Condat-Vu iterate")


# ---------------------------------------------------------------------------
# heuristic plug-in (no convergence guarantee)


def iterate_pd_heuristic(grad_smooth: Callable, L: LinearMap, lambda2: float,
                         mu: float, sigma: float, tau: float, x0, u0) -> Iterator[tuple]:
    """Direct nonconvex plug-in: the dual prox of the l1 term is replaced by

        v - sigma * firm(v / sigma; 1/(mu*sigma), lambda2)

    mimicking the classical decomposition although the penalty is only
    weakly convex. Requires 1/(mu*sigma) < lambda2 so the thresholds stay
    ordered. No convergence guarantee; the trace captures whatever happens.
    """
    lam1 = 1.0 / (mu * sigma)
    if not lam1 < lambda2:
        raise StepSizeError(
            "heuristic-threshold-order",
            f"need 1/(mu*sigma) < lambda2, got {lam1:.6g} >= {lambda2:.6g}",
        )

    def dual_prox(v):
        return v - sigma * firm(v / sigma, lam1, lambda2)

    return iterate_condat_vu(grad_smooth, dual_prox, L, sigma, tau, x0, u0)


def run_pd_heuristic(grad_smooth: Callable, L: LinearMap, lambda2: float,
                     mu: float, sigma: float, tau: float, x0, u0,
                     max_iter: int = 10_000,
                     stop_tol: Optional[float] = None):
    """Run the heuristic plug-in; returns (x, u, trace)."""
    stepper = iterate_pd_heuristic(grad_smooth, L, lambda2, mu, sigma, tau, x0, u0)
    return _run_pd(stepper, x0, u0, max_iter, stop_tol, None, "heuristic iterate")


def implicit_objective(x, fidelity: QuadraticFidelity, L: LinearMap,
                       penalty: Penalty, weight: float) -> float:
    """f(x) + weight * sum_i penalty((Lx)_i) for a separable scalar penalty."""
    z = L.apply(np.asarray(x, dtype=float))
    return fidelity.value(x) + weight * float(np.sum(penalty(z)))
