import numpy as np
import pytest

from molgrad.oracles import (
    conjugate_penalty,
    convex_conjugate_1d,
    convex_conjugate_batch,
    sprox_oracle_1d,
    sprox_oracle_nd,
)
from molgrad.shrinkage import (
    Penalty,
    firm,
    garrote,
    make_penalty,
    mc_penalty,
    soft,
    vector_firm,
)


class TestSproxOracle1d:
    def test_soft_threshold_case(self):
        pen = make_penalty("soft", lam=1.0)
        assert sprox_oracle_1d(pen, 2.0, 1.0) == pytest.approx(1.0, abs=1e-6)

    def test_firm_is_sprox_of_scaled_mc(self):
        pen = make_penalty("firm", lambda1=1.0, lambda2=2.0)
        assert sprox_oracle_1d(pen, 1.5, 1.0) == pytest.approx(1.0, abs=1e-5)

    def test_zero_penalty_is_identity(self):
        pen = Penalty(lambda y: np.zeros_like(y), 0.0, "zero")
        for x in (-3.7, 0.0, 12.2):
            assert sprox_oracle_1d(pen, x, 1.0) == pytest.approx(x, abs=1e-7)

    def test_garrote_matches_oracle(self):
        pen = make_penalty("garrote", lam=1.0)
        assert sprox_oracle_1d(pen, 2.0, 1.0) == pytest.approx(garrote(2.0, 1.0), abs=1e-5)

    def test_precondition_on_weak_convexity(self):
        pen = make_penalty("firm", lambda1=1.0, lambda2=2.0)  # modulus 0.5
        with pytest.raises(ValueError):
            sprox_oracle_1d(pen, 1.0, gamma=2.0)

    def test_indicator_penalty(self):
        # nonnegativity indicator: prox is the positive-part projection
        pen = Penalty(lambda y: np.where(y >= 0, 0.0, np.inf), 0.0, "nonneg")
        assert sprox_oracle_1d(pen, -2.0, 1.0) == pytest.approx(0.0, abs=1e-6)
        assert sprox_oracle_1d(pen, 3.0, 1.0) == pytest.approx(3.0, abs=1e-6)

    @pytest.mark.parametrize("name,params,op", [
        ("soft", dict(lam=1.0), lambda x: soft(x, 1.0)),
        ("firm", dict(lambda1=1.0, lambda2=2.0), lambda x: firm(x, 1.0, 2.0)),
        ("garrote", dict(lam=1.0), lambda x: garrote(x, 1.0)),
    ])
    def test_closed_forms_match_oracle_on_samples(self, name, params, op):
        pen = make_penalty(name, **params)
        xs = np.linspace(-10, 10, 41)
        worst = max(abs(op(float(x)) - sprox_oracle_1d(pen, float(x), 1.0)) for x in xs)
        assert worst <= 1e-5


class TestSproxOracleNd:
    def test_zero_penalty(self):
        out = sprox_oracle_nd(lambda p: np.zeros(p.shape[0]), 0.0,
                              np.array([0.4, -1.2]), 1.0)
        assert np.allclose(out, [0.4, -1.2], atol=2e-3)

    def test_radial_firm_penalty_matches_vector_firm(self):
        lam1, lam2 = 1.0, 2.0

        def radial(points):
            return lam1 * mc_penalty(np.linalg.norm(points, axis=-1), lam2)

        x = np.array([0.9, 1.2])
        out = sprox_oracle_nd(radial, lam1 / lam2, x, 1.0)
        assert np.linalg.norm(out - vector_firm(x, lam1, lam2)) <= 2e-3

    def test_separable_mc_matches_componentwise_1d(self):
        pen1d = make_penalty("firm", lambda1=0.8, lambda2=3.0)

        def separable(points):
            return np.sum(pen1d(points), axis=-1)

        x = np.array([1.4, -2.2])
        out = sprox_oracle_nd(separable, pen1d.weak_convexity, x, 1.0)
        expected = [sprox_oracle_1d(pen1d, float(c), 1.0) for c in x]
        assert np.allclose(out, expected, atol=2e-3)

    def test_dimension_cap(self):
        with pytest.raises(ValueError):
            sprox_oracle_nd(lambda p: np.zeros(p.shape[0]), 0.0, np.zeros(3), 1.0)


class TestConvexConjugate:
    def test_absolute_value_conjugate(self):
        pen = make_penalty("soft", lam=1.0)  # convexified form is |.|
        inside = convex_conjugate_1d(pen, 0.5)
        assert not inside.at_boundary
        assert inside.value == pytest.approx(0.0, abs=1e-6)
        outside = convex_conjugate_1d(pen, 1.5)
        assert outside.at_boundary

    def test_quadratic_self_conjugate(self):
        pen = Penalty(lambda y: 0.5 * y * y, 0.0, "quad")
        for u in (-2.0, 0.3, 4.0):
            res = convex_conjugate_1d(pen, u)
            assert not res.at_boundary
            assert res.value == pytest.approx(0.5 * u * u, abs=1e-6)

    def test_fenchel_young_inequality(self):
        pen = make_penalty("firm", lambda1=1.0, lambda2=2.0)
        rng = np.random.default_rng(0)
        ys = rng.uniform(-6, 6, 40)
        us = rng.uniform(-4, 4, 40)
        values, flags = convex_conjugate_batch(pen, us)
        assert not flags.any()  # this conjugate is finite everywhere
        for y in ys:
            phi_check = float(pen.convexified(y))
            assert np.all(us * y <= phi_check + values + 1e-6)

    def test_firm_conjugate_closed_form(self):
        # for the firm penalty's convexification, the conjugate is
        # 0 on [-l1, l1] and (l2/(2 l1)) (u^2 - l1^2) outside
        l1, l2 = 1.0, 2.0
        pen = make_penalty("firm", lambda1=l1, lambda2=l2)
        us = np.array([-3.0, -1.5, -0.5, 0.0, 0.7, 1.0, 2.5])
        expected = np.where(np.abs(us) <= l1, 0.0, l2 / (2 * l1) * (us**2 - l1**2))
        values, flags = convex_conjugate_batch(pen, us)
        assert not flags.any()
        assert np.allclose(values, expected, atol=1e-6)


class TestDecompositionIdentities:
    """Oracle-vs-oracle forms of the prox decomposition identities."""

    @pytest.mark.parametrize("l1,l2", [(1.0, 2.0), (2.5, 5.0)])
    def test_scaling_identity_eq_convexified(self, l1, l2):
        # s-prox of phi at x equals s-prox of (phi_check / beta) at x/beta
        pen = make_penalty("firm", lambda1=l1, lambda2=l2)
        beta = 1.0 - l1 / l2
        scaled = Penalty(lambda y: pen.convexified(y) / beta, 0.0, "phi_check/beta")
        rng = np.random.default_rng(1)
        for x in rng.uniform(-10, 10, 15):
            lhs = firm(float(x), l1, l2)
            rhs = sprox_oracle_1d(scaled, float(x) / beta, 1.0)
            assert abs(lhs - rhs) <= 1e-4

    @pytest.mark.parametrize("l1,l2", [(1.0, 2.0), (2.5, 5.0)])
    def test_split_identity_through_conjugate(self, l1, l2):
        # x = beta * s-prox_phi(x) + prox of (beta * conjugate(phi_check)) at x
        pen = make_penalty("firm", lambda1=l1, lambda2=l2)
        beta = 1.0 - l1 / l2
        conj = conjugate_penalty(pen, scale=beta)
        rng = np.random.default_rng(2)
        for x in rng.uniform(-8, 8, 10):
            residual = float(x) - beta * firm(float(x), l1, l2)
            prox_conj = sprox_oracle_1d(conj, float(x), 1.0)
            assert abs(residual - prox_conj) <= 1e-4

    @pytest.mark.parametrize("sigma,rho", [(1.0, 1.0), (0.5, 2.0)])
    @pytest.mark.parametrize("l1,l2", [(1.0, 2.0), (2.5, 5.0)])
    def test_index_shift_identity(self, sigma, rho, l1, l2):
        # s-prox of (phi + rho/2 |.|^2)/sigma at x equals
        # s-prox of phi/(sigma+rho) at sigma x/(sigma+rho)
        pen = make_penalty("firm", lambda1=l1, lambda2=l2)
        lifted = Penalty(
            lambda y: (pen(y) + 0.5 * rho * y * y) / sigma, 0.0, "lifted")
        shifted = Penalty(
            lambda y: pen(y) / (sigma + rho), pen.weak_convexity / (sigma + rho),
            "shifted")
        rng = np.random.default_rng(3)
        for x in rng.uniform(-8, 8, 10):
            lhs = sprox_oracle_1d(lifted, float(x), 1.0)
            rhs = sprox_oracle_1d(shifted, sigma * float(x) / (sigma + rho), 1.0)
            assert abs(lhs - rhs) <= 1e-4
