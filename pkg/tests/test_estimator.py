import numpy as np
import pytest
from scipy.optimize import nnls

from mfachest.estimator import (
    Estimate,
    build_filter_bank,
    component_lmmse,
    estimate,
    estimate_with_bank,
    gmm_cme_oracle,
    noisy_responsibilities,
)
from mfachest.gaussians import LowRankCovariance, sample_component
from mfachest.mfa import MfaComponent, MfaModel, sample


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def make_model(rng, k_total, dim, latent, sep=4.0, psi=0.3, zero_mean=False):
    weights = rng.uniform(0.5, 1.5, k_total)
    weights /= weights.sum()
    comps = []
    for k in range(k_total):
        mean = np.zeros(dim, complex) if zero_mean else sep * crandn(rng, dim)
        loading = crandn(rng, dim, latent)
        comps.append(
            MfaComponent(weights[k], mean, LowRankCovariance(loading, np.full(dim, psi)))
        )
    return MfaModel(tuple(comps))


def scalar_model(weights, means, loadings, psis):
    comps = []
    for w, mu, ld, psi in zip(weights, means, loadings, psis):
        comps.append(
            MfaComponent(
                w,
                np.array([mu], complex),
                LowRankCovariance(np.array([[ld]], complex), np.array([psi])),
            )
        )
    return MfaModel(tuple(comps))


def quadrature_cme(weights, means, variances, sigma2, y, order=80):
    """Conditional mean by Gauss-Hermite quadrature for a scalar complex mixture prior."""
    nodes, wts = np.polynomial.hermite.hermgauss(order)
    grid_w = np.outer(wts, wts) / np.pi
    numerator = 0.0
    denominator = 0.0
    for w, mu, var in zip(weights, means, variances):
        h = mu + np.sqrt(var) * (nodes[:, None] + 1j * nodes[None, :])
        lik = np.exp(-np.abs(y - h) ** 2 / sigma2) / (np.pi * sigma2)
        denominator += w * np.sum(grid_w * lik)
        numerator += w * np.sum(grid_w * lik * h)
    return numerator / denominator


class TestComponentLmmse:
    def test_zero_noise_is_identity(self):
        rng = np.random.default_rng(70)
        model = make_model(rng, 1, 6, 2)
        y = crandn(rng, 6)
        out = component_lmmse(model.components[0], 0.0, y)
        assert np.array_equal(out, y)

    def test_huge_noise_returns_mean(self):
        rng = np.random.default_rng(71)
        model = make_model(rng, 1, 6, 2)
        comp = model.components[0]
        y = crandn(rng, 6)
        out = component_lmmse(comp, 1e12, y)
        assert np.abs(out - comp.mean).max() < 1e-6 * np.abs(comp.mean).max()

    def test_scalar_half_gain(self):
        comp = MfaComponent(
            1.0,
            np.zeros(1, complex),
            LowRankCovariance(np.zeros((1, 1), complex), np.ones(1)),
        )
        out = component_lmmse(comp, 1.0, np.array([2.0 + 0j]))
        assert out[0] == pytest.approx(1.0 + 0j, abs=1e-14)

    def test_rejects_nonfinite(self):
        rng = np.random.default_rng(72)
        model = make_model(rng, 1, 4, 1)
        y = np.zeros(4, complex)
        y[2] = np.inf
        with pytest.raises(ValueError):
            component_lmmse(model.components[0], 1.0, y)


class TestNoisyResponsibilities:
    def test_single_component(self):
        rng = np.random.default_rng(73)
        model = make_model(rng, 1, 5, 2)
        resp = noisy_responsibilities(model, 0.5, crandn(rng, 5))
        assert np.array_equal(resp, np.array([1.0]))

    def test_mirror_symmetry(self):
        rng = np.random.default_rng(74)
        dim = 4
        mean = crandn(rng, dim)
        loading = crandn(rng, dim, 2)
        cov = LowRankCovariance(loading, np.full(dim, 0.4))
        cov_neg = LowRankCovariance(loading, np.full(dim, 0.4))
        model = MfaModel(
            (MfaComponent(0.5, mean, cov), MfaComponent(0.5, -mean, cov_neg))
        )
        resp = noisy_responsibilities(model, 1.0, np.zeros(dim, complex))
        assert resp == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_huge_noise_returns_priors(self):
        rng = np.random.default_rng(75)
        model = make_model(rng, 3, 6, 2)
        resp = noisy_responsibilities(model, 1e12, crandn(rng, 6))
        assert np.abs(resp - model.weights).max() < 1e-6

    def test_simplex(self):
        rng = np.random.default_rng(76)
        model = make_model(rng, 4, 6, 2, sep=1.0)
        resp = noisy_responsibilities(model, 0.3, crandn(rng, 100, 6))
        assert np.all(resp >= 0)
        assert np.abs(resp.sum(axis=1) - 1.0).max() < 1e-12


class TestEstimate:
    def test_single_component_equals_lmmse(self):
        rng = np.random.default_rng(77)
        model = make_model(rng, 1, 6, 2)
        y = crandn(rng, 6)
        got = estimate(model, 0.7, y)
        ref = component_lmmse(model.components[0], 0.7, y)
        assert np.abs(got.value - ref).max() < 1e-12
        assert got.responsibilities == pytest.approx([1.0])

    def test_zero_noise_identity(self):
        rng = np.random.default_rng(78)
        model = make_model(rng, 3, 6, 2)
        y = crandn(rng, 50, 6)
        got = estimate(model, 0.0, y)
        assert np.abs(got.value - y).max() < 1e-10

    def test_matches_quadrature_cme(self):
        model = scalar_model(
            weights=[0.4, 0.6],
            means=[1.0 + 0.5j, -0.8 - 0.2j],
            loadings=[0.9, 0.3],
            psis=[0.2, 0.5],
        )
        sigma2 = 0.7
        variances = [abs(0.9) ** 2 + 0.2, abs(0.3) ** 2 + 0.5]
        for y in [0.3 + 0.1j, -1.2 + 0.9j, 2.0 - 2.0j, 0.0 + 0.0j]:
            got = estimate(model, sigma2, np.array([y])).value[0]
            want = quadrature_cme([0.4, 0.6], [1.0 + 0.5j, -0.8 - 0.2j], variances, sigma2, y)
            assert abs(got - want) < 1e-6

    def test_prior_mean_limit(self):
        rng = np.random.default_rng(79)
        model = make_model(rng, 3, 8, 2)
        prior_mean = model.weights @ model.means
        got = estimate(model, 1e12, crandn(rng, 20, 8)).value
        rel = np.abs(got - prior_mean).max() / np.linalg.norm(prior_mean)
        assert rel < 1e-5

    def test_convex_hull_membership(self):
        rng = np.random.default_rng(80)
        model = make_model(rng, 4, 5, 2, sep=1.5)
        sigma2 = 0.6
        for _ in range(20):
            y = crandn(rng, 5)
            got = estimate(model, sigma2, y)
            points = np.stack(
                [component_lmmse(c, sigma2, y) for c in model.components]
            )  # (K, N)
            # membership: nonnegative weights summing to 1 reproducing the estimate
            stacked = np.concatenate(
                [points.real, points.imag, np.ones((4, 1))], axis=1
            ).T  # (2N+1, K)
            target = np.concatenate([got.value.real, got.value.imag, [1.0]])
            _, resid = nnls(stacked, target)
            assert resid < 1e-8


class TestFilterBank:
    def test_bank_matches_direct(self):
        rng = np.random.default_rng(81)
        model = make_model(rng, 3, 6, 2)
        sigma2 = 0.4
        bank = build_filter_bank(model, sigma2)
        y = crandn(rng, 1000, 6)
        direct = estimate(model, sigma2, y)
        banked = estimate_with_bank(bank, y)
        assert np.abs(direct.value - banked.value).max() < 1e-12
        assert np.abs(direct.responsibilities - banked.responsibilities).max() < 1e-12

    def test_single_component_identity_cov(self):
        comp = MfaComponent(
            1.0, np.zeros(4, complex), LowRankCovariance(np.zeros((4, 1), complex), np.ones(4))
        )
        bank = build_filter_bank(MfaModel((comp,)), 1.0)
        assert np.allclose(bank.gains[0], 0.5 * np.eye(4), atol=1e-14)

    def test_rebuild_bit_identical(self):
        rng = np.random.default_rng(82)
        model = make_model(rng, 2, 5, 2)
        a = build_filter_bank(model, 0.3)
        b = build_filter_bank(model, 0.3)
        assert np.array_equal(a.gains, b.gains)
        assert np.array_equal(a.biases, b.biases)
        assert np.array_equal(a.precisions, b.precisions)
        assert np.array_equal(a.logdets, b.logdets)

    def test_bank_rejects_zero_noise(self):
        rng = np.random.default_rng(83)
        model = make_model(rng, 2, 4, 1)
        with pytest.raises(ValueError):
            build_filter_bank(model, 0.0)

    def test_single_component_affine_form(self):
        rng = np.random.default_rng(84)
        model = make_model(rng, 1, 5, 2)
        bank = build_filter_bank(model, 0.8)
        y = crandn(rng, 5)
        got = estimate_with_bank(bank, y)
        assert np.abs(got.value - (bank.gains[0] @ y + bank.biases[0])).max() < 1e-14

    def test_zero_input_zero_mean(self):
        rng = np.random.default_rng(85)
        model = make_model(rng, 1, 5, 2, zero_mean=True)
        bank = build_filter_bank(model, 0.5)
        got = estimate_with_bank(bank, np.zeros(5, complex))
        assert np.abs(got.value).max() == 0.0

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(86)
        model = make_model(rng, 1, 5, 2)
        bank = build_filter_bank(model, 0.5)
        with pytest.raises(ValueError):
            estimate_with_bank(bank, np.zeros(4, complex))


class TestCmeOracle:
    def test_gaussian_prior_trace_formula(self):
        # Monte-Carlo MSE of the K=1 oracle matches (1/N) tr(C - C (C + s I)^-1 C).
        rng = np.random.default_rng(87)
        model = make_model(rng, 1, 6, 2, sep=0.0)
        comp = model.components[0]
        w = comp.cov.loading
        cov = w @ w.conj().T + np.diag(comp.cov.diag_term)
        sigma2 = 0.5
        shifted = cov + sigma2 * np.eye(6)
        want = np.trace(cov - cov @ np.linalg.solve(shifted, cov)).real / 6

        draws = sample(model, 40_000, np.random.default_rng(88)).samples
        noise = crandn(np.random.default_rng(89), 40_000, 6) * np.sqrt(sigma2)
        got_est = gmm_cme_oracle(model, sigma2, draws + noise)
        mse = float(np.mean(np.abs(got_est - draws) ** 2) * 6 / 6)
        assert mse == pytest.approx(want, rel=0.02)

    def test_scalar_two_component_quadrature(self):
        model = scalar_model(
            weights=[0.5, 0.5],
            means=[1.5 + 0j, -1.5 + 0j],
            loadings=[0.5, 0.7],
            psis=[0.3, 0.2],
        )
        sigma2 = 0.4
        variances = [0.25 + 0.3, 0.49 + 0.2]
        for y in [0.2 + 0.3j, -0.9 - 0.4j, 1.4 + 0j]:
            got = gmm_cme_oracle(model, sigma2, np.array([y]))[0]
            want = quadrature_cme([0.5, 0.5], [1.5, -1.5], variances, sigma2, y)
            assert abs(got - want) < 1e-6

    def test_zero_noise_identity(self):
        rng = np.random.default_rng(90)
        model = make_model(rng, 2, 4, 1)
        y = crandn(rng, 4)
        assert np.abs(gmm_cme_oracle(model, 0.0, y) - y).max() < 1e-12

    def test_rejects_unknown_model(self):
        with pytest.raises(TypeError):
            gmm_cme_oracle(object(), 0.1, np.zeros(2, complex))
