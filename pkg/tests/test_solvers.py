import numpy as np
import pytest

from molgrad.denoise import Denoiser, make_denoiser
from molgrad.linalg import (
    QuadraticFidelity,
    difference_operator,
    scaled_identity,
)
from molgrad.shrinkage import mc_penalty, soft, make_penalty
from molgrad.solvers import (
    DivergenceError,
    FbsConfig,
    PdConfig,
    StepSizeError,
    derive_pd_params,
    implicit_objective,
    iterate_condat_vu,
    iterate_pd_molgrad,
    run_condat_vu_form2,
    run_fbs,
    run_pd_heuristic,
    run_pd_molgrad,
)


def identity_fidelity(y):
    return QuadraticFidelity(np.eye(len(y)), np.asarray(y, float))


class TestFbs:
    def test_one_step_l1_prox(self):
        fid = identity_fidelity([2.0, 0.5])
        cfg = FbsConfig(mu=1.0, denoiser=make_denoiser("soft", lam=1.0, beta=0.9),
                        fidelity=fid)
        x_hat, trace = run_fbs(cfg, np.zeros(2))
        assert np.allclose(x_hat, [1.0, 0.0], atol=1e-12)
        assert trace.stop_reason == "fixed-point"

    def test_fixed_point_start_stops_immediately(self):
        fid = identity_fidelity([2.0, 0.5])
        cfg = FbsConfig(mu=1.0, denoiser=make_denoiser("soft", lam=1.0, beta=0.9),
                        fidelity=fid)
        x_hat, trace = run_fbs(cfg, np.array([1.0, 0.0]))
        assert trace.iterations == 1 and trace.residuals[0] == 0.0
        assert np.array_equal(x_hat, [1.0, 0.0])

    def test_firm_scalar_instance_with_grid_certificate(self):
        fid = identity_fidelity([3.0])
        den = make_denoiser("firm", lambda1=1.0, lambda2=2.0)  # beta = 0.5
        cfg = FbsConfig(mu=1.0, denoiser=den, fidelity=fid)  # window [0.5, 1.5)
        x_hat, _ = run_fbs(cfg, np.zeros(1))
        assert x_hat[0] == pytest.approx(3.0, abs=1e-9)
        # fixed-point characterisation
        resid = np.linalg.norm(x_hat - den(x_hat - cfg.mu * fid.gradient(x_hat)))
        assert resid <= 2 * cfg.stop_tol * (1 + np.linalg.norm(x_hat))
        # 1-D grid certificate of minimality for mu*f + lambda1*mc(lambda2)
        objective = lambda x: 0.5 * (x - 3.0) ** 2 + mc_penalty(x, 2.0)
        grid = x_hat[0] + np.arange(-500, 501) * 1e-3
        assert objective(x_hat[0]) <= np.min(objective(grid)) + 1e-12

    def test_fixed_point_residual_contract(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((12, 4)) / np.sqrt(12)
        fid = QuadraticFidelity(A, rng.standard_normal(12))
        rho, kappa = fid.curvature_bounds()
        beta = 0.9
        mu = (1 - beta) / rho  # left edge of the window
        den = make_denoiser("soft", lam=0.3, beta=beta)
        cfg = FbsConfig(mu=mu, denoiser=den, fidelity=fid, max_iter=100_000)
        x_hat, trace = run_fbs(cfg, np.zeros(4))
        assert trace.stop_reason == "fixed-point"
        resid = np.linalg.norm(x_hat - den(x_hat - mu * fid.gradient(x_hat)))
        assert resid <= 2 * cfg.stop_tol * (1 + np.linalg.norm(x_hat))


class TestFbsWindow:
    """Acceptance/rejection across the boundary of the validated region."""

    RHO, KAPPA = 1.0, 2.0  # beta infimum (kappa-rho)/(kappa+rho) = 1/3

    def make(self, mu, beta):
        fid = QuadraticFidelity(np.diag([1.0, np.sqrt(2.0)]), np.zeros(2))
        den = make_denoiser("soft", lam=1.0, beta=beta)
        return FbsConfig(mu=mu, denoiser=den, fidelity=fid,
                         rho=self.RHO, kappa=self.KAPPA)

    @pytest.mark.parametrize("beta", [1 / 3 + 1e-6, 0.5, 0.9, 1 - 1e-9])
    def test_accepts_inside(self, beta):
        lo = (1 - beta) / self.RHO
        hi = (1 + beta) / self.KAPPA
        for mu in (lo, lo + 1e-6, 0.5 * (lo + hi), hi - 1e-6 * hi):
            self.make(mu, beta)  # must not raise

    def test_rejects_mu_below_window(self):
        beta = 0.5
        with pytest.raises(StepSizeError, match="window"):
            self.make((1 - beta) / self.RHO - 1e-6, beta)

    def test_rejects_mu_at_open_right_edge(self):
        beta = 0.5
        hi = (1 + beta) / self.KAPPA
        with pytest.raises(StepSizeError):
            self.make(hi, beta)
        with pytest.raises(StepSizeError):
            self.make(hi + 1e-6, beta)

    def test_rejects_beta_below_infimum(self):
        with pytest.raises(StepSizeError, match="beta"):
            self.make(1.0, 1 / 3 - 1e-6)

    def test_equal_curvatures_allow_any_beta(self):
        fid = identity_fidelity([1.0, 1.0])
        for beta in (1e-6, 0.5, 1 - 1e-9):
            FbsConfig(mu=1.0, denoiser=make_denoiser("soft", lam=1.0, beta=beta),
                      fidelity=fid)


class TestDerivePdParams:
    def test_direct_substitution(self):
        sigma, tau = derive_pd_params(rho=1.0, kappa=2.0, L_norm=np.sqrt(3.0),
                                      beta=0.5, delta=1.0, gamma=0.9)
        assert sigma == pytest.approx(1.0 / 3.0, rel=1e-12)
        assert tau == pytest.approx(0.45, rel=1e-12)

    def test_firm_parametrisation(self):
        # at delta=1 and beta = 1 - l1/l2, sigma = (rho/||L||^2)(l2/l1 - 1)
        rho, normL, l1, l2 = 0.3, 2.0, 2.5, 5.0
        sigma, _ = derive_pd_params(rho, 1.0, normL, 1 - l1 / l2, 1.0, 0.9)
        assert sigma == pytest.approx((rho / normL**2) * (l2 / l1 - 1.0), rel=1e-12)

    def test_gamma_controls_step_product(self):
        for gamma in (0.5, 0.9, 1 - 1e-9):
            sigma, tau = derive_pd_params(1.0, 2.0, 1.5, 0.4, 1.0, gamma)
            assert tau * (sigma * 1.5**2 + 1.0) == pytest.approx(gamma, rel=1e-12)

    def test_beta_one_rejected(self):
        with pytest.raises(ValueError):
            derive_pd_params(1.0, 2.0, 1.0, 1.0)


def small_pd_setup(seed=0, n=8, m=24, l1=1.0, l2=2.0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n)) / np.sqrt(m)
    fid = QuadraticFidelity(A, rng.standard_normal(m))
    L = difference_operator(n)
    rho = float(np.linalg.eigvalsh(fid.AtA)[0])
    normL = L.norm_upper()
    Dm = np.stack([L.apply(e) for e in np.eye(n)], axis=1)
    kappa = float(np.abs(np.linalg.eigvalsh(fid.AtA - (rho / normL**2) * Dm.T @ Dm)).max())
    den = make_denoiser("firm", lambda1=l1, lambda2=l2)
    sigma, tau = derive_pd_params(rho, kappa, normL, den.beta)
    cfg = PdConfig(sigma=sigma, tau=tau, L=L, denoiser=den, fidelity=fid,
                   rho=rho, kappa=kappa, L_norm=normL)
    return cfg, fid, L, rho, kappa, normL


class TestPdConfigEnforcement:
    def test_accepts_saturated_condition_i(self):
        cfg, fid, L, rho, kappa, normL = small_pd_setup()
        beta = cfg.denoiser.beta
        bound = rho * beta / (normL**2 * (1 - beta))
        PdConfig(sigma=bound, tau=cfg.tau, L=L, denoiser=cfg.denoiser,
                 fidelity=fid, rho=rho, kappa=kappa, L_norm=normL)

    def test_rejects_sigma_above_bound(self):
        cfg, fid, L, rho, kappa, normL = small_pd_setup()
        beta = cfg.denoiser.beta
        bound = rho * beta / (normL**2 * (1 - beta))
        with pytest.raises(StepSizeError, match="condition \\(i\\)"):
            PdConfig(sigma=bound * (1 + 1e-9), tau=1e-6, L=L,
                     denoiser=cfg.denoiser, fidelity=fid, rho=rho,
                     kappa=kappa, L_norm=normL)

    def test_rejects_step_product_at_one(self):
        cfg, fid, L, rho, kappa, normL = small_pd_setup()
        tau_bad = 1.0000001 / (cfg.sigma * normL**2 + kappa / 2)
        with pytest.raises(StepSizeError, match="condition \\(ii\\)"):
            PdConfig(sigma=cfg.sigma, tau=tau_bad, L=L, denoiser=cfg.denoiser,
                     fidelity=fid, rho=rho, kappa=kappa, L_norm=normL)

    def test_zero_weak_convexity_skips_condition_i(self):
        cfg, fid, L, rho, kappa, normL = small_pd_setup()
        den = make_denoiser("soft", lam=1.0)  # weak convexity 0
        PdConfig(sigma=1e6, tau=1e-9, L=L, denoiser=den, fidelity=fid,
                 rho=rho, kappa=kappa, L_norm=normL)


class TestPdMolgrad:
    def test_degenerate_denoiser_smoke(self):
        cfg, fid, L, rho, kappa, normL = small_pd_setup()
        dead = make_denoiser("soft", lam=1e9)  # T == 0 near the iterates
        cfg2 = PdConfig(sigma=cfg.sigma, tau=cfg.tau, L=L, denoiser=dead,
                        fidelity=fid, rho=rho, kappa=kappa, L_norm=normL,
                        max_iter=100, stop_tol=None)
        x, u, trace = run_pd_molgrad(cfg2, np.zeros(8), np.zeros(7))
        assert np.all(np.isfinite(x)) and np.all(np.isfinite(u))
        assert trace.iterations == 100

    def test_determinism(self):
        cfg, *_ = small_pd_setup()
        out1 = run_pd_molgrad(cfg, np.zeros(8), np.zeros(7))
        out2 = run_pd_molgrad(cfg, np.zeros(8), np.zeros(7))
        assert np.array_equal(out1[0], out2[0])
        assert out1[2].residuals == out2[2].residuals

    def test_trace_striding(self):
        cfg, *_ = small_pd_setup()
        cfg.max_iter = 35
        cfg.stop_tol = None
        _, _, trace = run_pd_molgrad(cfg, np.zeros(8), np.zeros(7))
        for key in trace.iterates:
            assert key % 10 == 0 or key == 34

    def test_algebraic_rewrite_equals_condat_vu(self):
        # the u-update identity: with T = soft(., c) the dual prox of the
        # convexified composite has the independent elastic-net form
        # v - (sigma/s) soft(v, s*c); iterates must then agree to
        # machine precision with the plugged-in scheme
        cfg, fid, L, rho, kappa, normL = small_pd_setup()
        c = 0.7
        den = make_denoiser("soft", lam=c, beta=1 - 1e-12)
        sigma = 0.25
        tau = 0.9 / (sigma * normL**2 + 0.5 * kappa)
        cfg2 = PdConfig(sigma=sigma, tau=tau, L=L, denoiser=den, fidelity=fid,
                        rho=rho, kappa=kappa, L_norm=normL)
        s = cfg2.sigma + rho / normL**2

        def elastic_net_dual_prox(v):
            return v - (cfg2.sigma / s) * soft(v, s * c)

        def grad_deflated(x):
            return fid.gradient(x) - (rho / normL**2) * L.adjoint_apply(L.apply(x))

        x0, u0 = np.zeros(8), np.zeros(7)
        plugged = iterate_pd_molgrad(cfg2, x0, u0)
        classical = iterate_condat_vu(grad_deflated, elastic_net_dual_prox,
                                      L, cfg2.sigma, cfg2.tau, x0, u0)
        for _ in range(50):
            xa, ua = next(plugged)
            xb, ub = next(classical)
            scale = 1.0 + np.linalg.norm(xa) + np.linalg.norm(ua)
            assert np.linalg.norm(xa - xb) <= 1e-10 * scale
            assert np.linalg.norm(ua - ub) <= 1e-10 * scale


class TestCondatVu:
    def test_lasso_denoising_limit(self):
        y = np.array([2.0, -0.3, 1.4, 0.05])
        fid = identity_fidelity(y)
        L = scaled_identity(1.0, 4)
        lam = 0.5
        x, u, trace = run_condat_vu_form2(
            fid.gradient, lam, L, sigma=0.5, tau=0.9, x0=np.zeros(4),
            u0=np.zeros(4), max_iter=5000, stop_tol=1e-14)
        assert np.allclose(x, soft(y, lam), atol=1e-6)

    def test_zero_problem_keeps_x_stationary(self):
        L = scaled_identity(1.0, 3)
        x0 = np.array([1.0, -2.0, 0.5])
        x, u, _ = run_condat_vu_form2(lambda x_: np.zeros_like(x_), 0.0, L,
                                      sigma=0.5, tau=0.5, x0=x0,
                                      u0=np.zeros(3), max_iter=50)
        assert np.allclose(x, x0, atol=1e-14)

    def test_divergence_carries_trace(self):
        y = np.array([2.0, -0.3])
        fid = identity_fidelity(y)
        L = scaled_identity(1.0, 2)
        with pytest.raises(DivergenceError) as err:
            run_condat_vu_form2(fid.gradient, 0.5, L, sigma=0.5, tau=50.0,
                                x0=np.ones(2), u0=np.zeros(2), max_iter=10_000)
        assert isinstance(err.value.trace.residuals, list)
        assert len(err.value.trace.residuals) > 0


class TestPdHeuristic:
    def test_threshold_order_enforced(self):
        L = difference_operator(4)
        with pytest.raises(StepSizeError) as err:
            run_pd_heuristic(lambda x: np.zeros_like(x), L, lambda2=2.0,
                             mu=0.1, sigma=1.0, tau=0.1,
                             x0=np.zeros(4), u0=np.zeros(3))
        assert err.value.condition == "heuristic-threshold-order"

    def test_near_degenerate_threshold_smoke(self):
        # 1/(mu*sigma) close to lambda2: nearly hard-threshold behaviour
        rng = np.random.default_rng(1)
        A = rng.standard_normal((16, 6)) / 4.0
        fid = QuadraticFidelity(A, rng.standard_normal(16))
        L = difference_operator(6)
        lam2 = 2.0
        sigma = 0.5
        mu = 1.0 / (sigma * (lam2 - 1e-3))
        x, u, trace = run_pd_heuristic(fid.gradient, L, lam2, mu, sigma,
                                       tau=0.2, x0=np.zeros(6), u0=np.zeros(5),
                                       max_iter=500)
        assert np.all(np.isfinite(x)) and np.all(np.isfinite(u))

    def test_bit_identical_reruns(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((16, 6)) / 4.0
        fid = QuadraticFidelity(A, rng.standard_normal(16))
        L = difference_operator(6)
        args = dict(lambda2=3.0, mu=2.0, sigma=0.3, tau=0.2,
                    x0=np.zeros(6), u0=np.zeros(5), max_iter=200)
        r1 = run_pd_heuristic(fid.gradient, L, **args)
        r2 = run_pd_heuristic(fid.gradient, L, **args)
        assert np.array_equal(r1[0], r2[0]) and np.array_equal(r1[1], r2[1])
        assert r1[2].residuals == r2[2].residuals


class TestImplicitObjective:
    def test_zero_weight_zero_noise(self):
        x_true = np.array([1.0, 1.0, 2.0])
        A = np.eye(3)
        fid = QuadraticFidelity(A, A @ x_true)
        L = difference_operator(3)
        pen = make_penalty("firm", lambda1=1.0, lambda2=2.0)
        assert implicit_objective(x_true, fid, L, pen, 0.0) == 0.0

    def test_separable_sum(self):
        fid = identity_fidelity([0.0, 0.0, 0.0])
        L = difference_operator(3)
        pen = make_penalty("soft", lam=1.0)  # evaluates lam * |.|
        x = np.array([3.0, 1.0, 0.0])  # Lx = (2, 1)
        val = implicit_objective(x, fid, L, pen, 2.0)
        assert val == pytest.approx(fid.value(x) + 2.0 * 3.0, rel=1e-12)
