"""Problem generation, metrics, and the three verification studies.

The studies reproduce, at configurable scale, the piecewise-constant
signal-recovery comparisons: (1) agreement of the modified primal-dual
scheme with the classical Condat-Vu iteration on the equivalent convex
rewrite, (2) disagreement of the heuristic plug-in, and (3) a parameter
sweep comparing firm shrinkage against the l1 total-variation approach.

Everything is a deterministic function of (seed, config); trials inside
a sweep use the sub-seed ``seed ^ trial_index`` and are aggregated in
ascending trial order.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import solvers
from .denoise import make_denoiser
from .linalg import (
    LinearMap,
    QuadraticFidelity,
    difference_operator,
    fidelity_constants,
)
from .shrinkage import soft

__all__ = [
    "ProblemInstance",
    "default_piece_count",
    "generate_piecewise_signal",
    "generate_problem",
    "discrepancy",
    "system_mismatch",
    "InstanceConstants",
    "instance_constants",
    "ExperimentCurves",
    "run_agreement_experiment",
    "run_disagreement_experiment",
    "SweepResult",
    "SweepAborted",
    "run_sweep",
]


def default_piece_count(n: int) -> int:
    """Piece count used when none is requested: grows mildly with n so
    constant segments stay short at every scale."""
    return max(8, n // 16)


def generate_piecewise_signal(n: int, n_pieces: int, level_range=(-2.0, 2.0),
                              seed: int = 0, jitter: float = 0.4) -> np.ndarray:
    """Piecewise-constant signal with seeded breakpoints and levels.

    Breakpoints are stratified: one per equal-width stratum, jittered by
    up to ``jitter`` of the stratum width. This bounds the longest
    constant segment (unlike uniform draws, which produce occasional
    very long segments whose dual modes converge arbitrarily slowly in
    the splitting schemes driven by these signals).
    """
    if not (1 <= n_pieces <= n):
        raise ValueError("need 1 <= n_pieces <= n")
    rng = np.random.default_rng(seed)
    if n_pieces > 1:
        stratum = n / n_pieces
        edges = (np.arange(1, n_pieces) + jitter * rng.uniform(-1, 1, n_pieces - 1))
        breaks = np.unique(np.clip(np.round(edges * stratum).astype(int), 1, n - 1))
    else:
        breaks = np.array([], dtype=int)
    levels = rng.uniform(level_range[0], level_range[1], size=breaks.size + 1)
    x = np.empty(n)
    bounds = np.concatenate([[0], breaks, [n]])
    for i in range(levels.size):
        x[bounds[i]:bounds[i + 1]] = levels[i]
    return x


@dataclass(frozen=True)
class ProblemInstance:
    """Linear observation model y = A x_true + noise."""

    x_true: np.ndarray
    A: np.ndarray
    y: np.ndarray
    noise_std: float
    seed: int

    @property
    def n(self) -> int:
        return self.x_true.size

    @property
    def m(self) -> int:
        return self.y.size

    def fidelity(self) -> QuadraticFidelity:
        return QuadraticFidelity(self.A, self.y)


def generate_problem(n: int, m: int, noise_std: Optional[float] = None,
                     n_pieces: Optional[int] = None, level_range=(-2.0, 2.0),
                     seed: int = 0, noise_rel: float = 0.1,
                     max_attempts: int = 16) -> ProblemInstance:
    """Seeded instance with Gaussian A (entries N(0, 1/m)) and Gaussian noise.

    Requires m >= n; a rank-deficient draw (numerically singular A^T A)
    is retried under a derived sub-seed. ``noise_std=None`` resolves to
    ``noise_rel * ||A x_true|| / sqrt(m)`` and the resolved value is
    recorded on the instance. ``n_pieces=None`` resolves via
    :func:`default_piece_count`.
    """
    if m < n:
        raise ValueError("overdetermined case required: m >= n")
    if n_pieces is None:
        n_pieces = default_piece_count(n)
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        x_true = generate_piecewise_signal(n, n_pieces, level_range,
                                           seed=int(rng.integers(2**32)))
        A = rng.standard_normal((m, n)) / np.sqrt(m)
        if np.linalg.eigvalsh(A.T @ A)[0] <= 1e-12:
            continue
        clean = A @ x_true
        std = noise_std if noise_std is not None else noise_rel * float(
            np.linalg.norm(clean)) / np.sqrt(m)
        y = clean + std * rng.standard_normal(m)
        return ProblemInstance(x_true, A, y, float(std), seed)
    raise RuntimeError("could not draw a full-rank sensing matrix")


def discrepancy(x, x_ref, u, u_ref) -> float:
    """(||x - x_ref||^2 + ||u - u_ref||^2) / (||x||^2 + ||u||^2).

    Zero denominator is allowed only when the numerator also vanishes
    (the quotient is then defined as 0).
    """
    x, x_ref = np.asarray(x, float), np.asarray(x_ref, float)
    u, u_ref = np.asarray(u, float), np.asarray(u_ref, float)
    if x.shape != x_ref.shape or u.shape != u_ref.shape:
        raise ValueError("mismatched shapes")
    num = float(np.sum((x - x_ref) ** 2) + np.sum((u - u_ref) ** 2))
    den = float(np.sum(x * x) + np.sum(u * u))
    if den == 0.0:
        if num == 0.0:
            return 0.0
        raise ValueError("zero denominator with nonzero numerator")
    return num / den


def system_mismatch(x_true, x) -> float:
    """Normalised squared estimation error ||x_true - x||^2 / ||x_true||^2."""
    x_true = np.asarray(x_true, float)
    x = np.asarray(x, float)
    den = float(np.sum(x_true * x_true))
    if den == 0.0:
        raise ValueError("reference signal must be nonzero")
    return float(np.sum((x_true - x) ** 2)) / den


@dataclass(frozen=True)
class InstanceConstants:
    """Spectral constants of an instance, computed once and shared."""

    L: LinearMap
    norm_L: float       # upper estimate of ||L||, inflated by its tolerance
    rho: float          # smallest eigenvalue of A^T A
    kappa: float        # smoothness of the deflated fidelity
    lam_max: float      # largest eigenvalue of A^T A


def instance_constants(instance: ProblemInstance) -> InstanceConstants:
    L = difference_operator(instance.n)
    rho, kappa = fidelity_constants(instance.A, L)
    lam_max = float(np.linalg.eigvalsh(instance.A.T @ instance.A)[-1])
    return InstanceConstants(L, L.norm_upper(), rho, kappa, lam_max)


@dataclass
class ExperimentCurves:
    """Per-iteration joint/x/u discrepancy curves plus terminal iterates.

    Entry k of each curve is the discrepancy after k updates (entry 0
    compares the initial points).
    """

    joint: np.ndarray
    x_only: np.ndarray
    u_only: np.ndarray
    x_hat: np.ndarray
    u_hat: np.ndarray
    x_ref: np.ndarray
    u_ref: np.ndarray
    params: dict = field(default_factory=dict)
    objective: Optional[np.ndarray] = None
    objective_stride: int = 10


def _lockstep_curves(stepper_a, stepper_b, x_a, u_a, x_b, u_b, iters,
                     objective_fn=None, objective_stride: int = 10):
    joint = np.empty(iters + 1)
    x_only = np.empty(iters + 1)
    u_only = np.empty(iters + 1)
    objective = [] if objective_fn is not None else None

    def measure(k):
        den_x = float(np.sum(x_a * x_a))
        den_u = float(np.sum(u_a * u_a))
        num_x = float(np.sum((x_a - x_b) ** 2))
        num_u = float(np.sum((u_a - u_b) ** 2))
        den = den_x + den_u
        joint[k] = (num_x + num_u) / den if den > 0 else 0.0
        x_only[k] = num_x / den_x if den_x > 0 else 0.0
        u_only[k] = num_u / den_u if den_u > 0 else 0.0

    measure(0)
    for k in range(1, iters + 1):
        x_a, u_a = next(stepper_a)
        x_b, u_b = next(stepper_b)
        if not (np.all(np.isfinite(x_a)) and np.all(np.isfinite(x_b))):
            raise solvers.DivergenceError("lockstep run diverged", solvers.SolverTrace())
        measure(k)
        if objective is not None and (k % objective_stride == 0 or k == iters):
            objective.append(objective_fn(x_a))
    obj = np.asarray(objective) if objective is not None else None
    return joint, x_only, u_only, x_a, u_a, x_b, u_b, obj


def _rewrite_gradient(fidelity: QuadraticFidelity, L: LinearMap,
                      lam2: float, mu: float):
    """Gradient of the smooth part of the convex rewrite:
    f(x) - (1/mu) * [index-lam2 envelope of ||.||_1](L x)."""

    def grad(x):
        z = L.apply(x)
        env_grad = (z - soft(z, lam2)) / lam2
        return fidelity.gradient(x) - (1.0 / mu) * L.adjoint_apply(env_grad)

    return grad


def run_agreement_experiment(instance: ProblemInstance, lam1: float = 2.5,
                             lam2: float = 5.0, delta: float = 1.0,
                             gamma: float = 0.9, sigma_baseline: float = 0.2,
                             iters: int = 10_000,
                             consts: Optional[InstanceConstants] = None,
                             with_objective: bool = True) -> ExperimentCurves:
    """Modified primal-dual scheme vs Condat-Vu on the convex rewrite.

    The firm denoiser with thresholds (lam1, lam2) is plugged into the
    modified scheme with (sigma, tau) derived from (delta, gamma). The
    baseline runs Condat-Vu form II on the equivalent convex problem

        min_x f(x) - (1/mu) env(Lx) + (1/mu) ||Lx||_1,
        mu = ||L||^2 / (rho ((1-delta) lam1 + delta lam2)),

    whose nonsmooth weight 1/mu matches the implicit penalty weight of
    the modified scheme, so primal and dual iterates are comparable.
    Both runs start from zero and proceed in lockstep for ``iters``
    updates; the three discrepancy curves are recorded every iteration.
    """
    consts = consts or instance_constants(instance)
    fid = instance.fidelity()
    den = make_denoiser("firm", lambda1=lam1, lambda2=lam2)
    sigma, tau = solvers.derive_pd_params(consts.rho, consts.kappa, consts.norm_L,
                                          den.beta, delta, gamma)
    cfg = solvers.PdConfig(sigma=sigma, tau=tau, L=consts.L, denoiser=den,
                           fidelity=fid, rho=consts.rho, kappa=consts.kappa,
                           L_norm=consts.norm_L)
    mu = consts.norm_L**2 / (consts.rho * ((1.0 - delta) * lam1 + delta * lam2))
    grad_rewrite = _rewrite_gradient(fid, consts.L, lam2, mu)
    tau_baseline = gamma / (sigma_baseline * consts.norm_L**2 + 0.5 * consts.lam_max)

    n, p = instance.n, consts.L.output_dim
    x0, u0 = np.zeros(n), np.zeros(p)
    stepper_a = solvers.iterate_pd_molgrad(cfg, x0, u0)
    stepper_b = solvers.iterate_condat_vu(
        grad_rewrite, solvers.l1_dual_prox(sigma_baseline, 1.0 / mu),
        consts.L, sigma_baseline, tau_baseline, x0, u0)

    objective_fn = None
    if with_objective:
        pen = den.induced_penalty
        weight = sigma + consts.rho / consts.norm_L**2
        objective_fn = lambda x: solvers.implicit_objective(x, fid, consts.L, pen, weight)

    joint, x_only, u_only, x_a, u_a, x_b, u_b, obj = _lockstep_curves(
        stepper_a, stepper_b, x0, u0, x0, u0, iters, objective_fn)
    params = dict(lam1=lam1, lam2=lam2, delta=delta, gamma=gamma,
                  sigma=sigma, tau=tau, sigma_baseline=sigma_baseline,
                  tau_baseline=tau_baseline, mu=mu, rho=consts.rho,
                  kappa=consts.kappa, norm_L=consts.norm_L, iters=iters)
    return ExperimentCurves(joint, x_only, u_only, x_a, u_a, x_b, u_b,
                            params, objective=obj)


def run_disagreement_experiment(instance: ProblemInstance, lam2: float = 5.0,
                                mu: Optional[float] = None, sigma: float = 0.2,
                                iters: int = 10_000, gamma: float = 0.9,
                                tau: Optional[float] = None,
                                consts: Optional[InstanceConstants] = None) -> ExperimentCurves:
    """Heuristic plug-in vs the same Condat-Vu reference run.

    The heuristic applies Condat-Vu form II directly to the weakly
    convex objective f + (1/mu) * capped-quadratic(Lx), replacing the
    dual prox by the firm-shrinkage surrogate with lam1 = 1/(mu*sigma).
    ``tau=None`` recomputes tau = gamma/(sigma ||L||^2 + kappa/2) from
    the given sigma; pass an explicit tau to keep one from elsewhere.
    """
    consts = consts or instance_constants(instance)
    fid = instance.fidelity()
    if mu is None:
        mu = consts.norm_L**2 / (consts.rho * lam2)  # the delta=1 weight
    if tau is None:
        tau = gamma / (sigma * consts.norm_L**2 + 0.5 * consts.kappa)
    tau_baseline = gamma / (sigma * consts.norm_L**2 + 0.5 * consts.lam_max)
    grad_rewrite = _rewrite_gradient(fid, consts.L, lam2, mu)

    n, p = instance.n, consts.L.output_dim
    x0, u0 = np.zeros(n), np.zeros(p)
    stepper_h = solvers.iterate_pd_heuristic(fid.gradient, consts.L, lam2,
                                             mu, sigma, tau, x0, u0)
    stepper_b = solvers.iterate_condat_vu(
        grad_rewrite, solvers.l1_dual_prox(sigma, 1.0 / mu),
        consts.L, sigma, tau_baseline, x0, u0)

    joint, x_only, u_only, x_h, u_h, x_b, u_b, _ = _lockstep_curves(
        stepper_h, stepper_b, x0, u0, x0, u0, iters)
    params = dict(lam2=lam2, mu=mu, sigma=sigma, tau=tau, gamma=gamma,
                  tau_baseline=tau_baseline, lam1_heuristic=1.0 / (mu * sigma),
                  rho=consts.rho, kappa=consts.kappa, norm_L=consts.norm_L,
                  iters=iters)
    return ExperimentCurves(joint, x_only, u_only, x_h, u_h, x_b, u_b, params)


@dataclass
class SweepResult:
    """Terminal system mismatch per (trial, grid point), plus the mean."""

    grid: np.ndarray
    per_trial: np.ndarray  # shape (n_trials, len(grid))
    label: str

    def __post_init__(self):
        self.grid = np.asarray(self.grid, float)
        self.per_trial = np.atleast_2d(np.asarray(self.per_trial, float))
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("parameter grid must be strictly increasing")
        if np.any(self.per_trial < 0):
            raise ValueError("mismatches must be nonnegative")

    @property
    def mean(self) -> np.ndarray:
        # fixed ascending-trial order, for float determinism
        total = np.zeros(self.grid.size)
        for row in self.per_trial:
            total += row
        return total / self.per_trial.shape[0]

    @property
    def best(self) -> float:
        return float(np.min(self.mean))


class SweepAborted(RuntimeError):
    """A trial failed; carries the partial per-trial results."""

    def __init__(self, message, partial_firm, partial_l1, trial):
        super().__init__(message)
        self.partial_firm = partial_firm
        self.partial_l1 = partial_l1
        self.trial = trial


def _sweep_trial(trial_seed, lam2_grid, mu_grid, n, m, iters, gamma,
                 sigma_l1, noise_std, noise_rel, lam1_ratio, n_pieces):
    instance = generate_problem(n, m, noise_std=noise_std, n_pieces=n_pieces,
                                seed=trial_seed, noise_rel=noise_rel)
    consts = instance_constants(instance)
    fid = instance.fidelity()
    x0, u0 = np.zeros(n), np.zeros(consts.L.output_dim)

    firm_row = np.empty(len(lam2_grid))
    for j, lam2 in enumerate(lam2_grid):
        lam1 = lam1_ratio * lam2
        den = make_denoiser("firm", lambda1=lam1, lambda2=lam2)
        sigma, tau = solvers.derive_pd_params(consts.rho, consts.kappa,
                                              consts.norm_L, den.beta, 1.0, gamma)
        cfg = solvers.PdConfig(sigma=sigma, tau=tau, L=consts.L, denoiser=den,
                               fidelity=fid, rho=consts.rho, kappa=consts.kappa,
                               L_norm=consts.norm_L, max_iter=iters, stop_tol=None)
        x_hat, _, _ = solvers.run_pd_molgrad(cfg, x0, u0)
        firm_row[j] = system_mismatch(instance.x_true, x_hat)

    l1_row = np.empty(len(mu_grid))
    for j, mu in enumerate(mu_grid):
        tau = gamma / (sigma_l1 * consts.norm_L**2 + 0.5 * mu * consts.lam_max)
        grad = lambda x, _mu=mu: _mu * fid.gradient(x)
        x_hat, _, _ = solvers.run_condat_vu_form2(
            grad, 1.0, consts.L, sigma_l1, tau, x0, u0, max_iter=iters)
        l1_row[j] = system_mismatch(instance.x_true, x_hat)
    return firm_row, l1_row


def run_sweep(n_trials: int = 30, lam2_grid=None, mu_grid=None, n: int = 64,
              m: int = 256, iters: int = 1500, seed: int = 0, gamma: float = 0.9,
              sigma_l1: float = 0.2, noise_std: Optional[float] = None,
              noise_rel: float = 0.1, lam1_ratio: float = 0.5,
              n_pieces: Optional[int] = None, workers: int = 1):
    """Firm-shrinkage branch (sweep lam2, delta=1) vs l1 branch (sweep mu).

    At delta=1 the firm branch's solution depends on lam2 alone, so lam2
    is its single tuning parameter, mirroring mu for the l1 approach.
    Trials run under sub-seed ``seed ^ t`` (concurrently when
    ``workers > 1``) and are averaged in ascending trial order. A failed
    trial aborts the sweep, raising :class:`SweepAborted` with partial
    results attached.
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    lam2_grid = np.asarray(
        lam2_grid if lam2_grid is not None else np.geomspace(0.5, 32.0, 8), float)
    mu_grid = np.asarray(
        mu_grid if mu_grid is not None else np.geomspace(0.25, 64.0, 9), float)

    def task(t):
        return _sweep_trial(seed ^ t, lam2_grid, mu_grid, n, m, iters, gamma,
                            sigma_l1, noise_std, noise_rel, lam1_ratio, n_pieces)

    firm_rows, l1_rows = [], []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(task, t) for t in range(n_trials)]
            pending = ((t, f.result) for t, f in enumerate(futures))
            results = pending
    else:
        results = ((t, lambda _t=t: task(_t)) for t in range(n_trials))
    for t, get in results:
        try:
            fr, lr = get()
        except (solvers.DivergenceError, solvers.StepSizeError) as exc:
            raise SweepAborted(f"sweep trial {t} failed: {exc}",
                               firm_rows, l1_rows, t) from exc
        firm_rows.append(fr)
        l1_rows.append(lr)
    return (SweepResult(lam2_grid, np.stack(firm_rows), "firm"),
            SweepResult(mu_grid, np.stack(l1_rows), "l1"))
