import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tedecomp import autodiff as ad
from tedecomp.errors import ContractError
from tedecomp.ib_core import (
    LN2,
    BetaSchedule,
    GaussianEncoder,
    beta_at,
    info_nce,
    kl_to_standard_normal,
    lagrangian,
)


class TestKl:
    def test_standard_normal_is_zero(self):
        kl = kl_to_standard_normal(ad.Tensor(np.zeros((3, 4))), ad.Tensor(np.zeros((3, 4))))
        np.testing.assert_allclose(kl.value, 0.0, atol=1e-12)

    def test_mean_shift_only(self):
        # KL(N(mu, 1) || N(0, 1)) = mu^2 / 2 per dimension
        mu = np.array([[1.0, 2.0]])
        kl = kl_to_standard_normal(ad.Tensor(mu), ad.Tensor(np.zeros((1, 2))))
        assert kl.value[0] == pytest.approx(0.5 * (1.0 + 4.0))

    def test_variance_shift_only(self):
        # KL(N(0, s^2) || N(0, 1)) = (s^2 - 1 - log s^2) / 2
        log_var = np.array([[np.log(4.0)]])
        kl = kl_to_standard_normal(ad.Tensor(np.zeros((1, 1))), ad.Tensor(log_var))
        assert kl.value[0] == pytest.approx(0.5 * (4.0 - 1.0 - np.log(4.0)))

    def test_monte_carlo_oracle(self):
        # E_q[log q(u) - log p(u)] over 10^6 samples should match within 1%
        rng = np.random.default_rng(0)
        mu, log_var = np.array([[0.7, -1.2]]), np.array([[0.4, -0.9]])
        sigma = np.exp(0.5 * log_var)
        u = mu + sigma * rng.standard_normal((10**6, 2))
        log_q = -0.5 * (((u - mu) / sigma) ** 2 + log_var + np.log(2 * np.pi)).sum(axis=1)
        log_p = -0.5 * (u**2 + np.log(2 * np.pi)).sum(axis=1)
        mc = (log_q - log_p).mean()
        closed = kl_to_standard_normal(ad.Tensor(mu), ad.Tensor(log_var)).value[0]
        assert closed == pytest.approx(mc, rel=0.01)

    @given(
        st.lists(st.floats(-3, 3), min_size=2, max_size=4),
        st.lists(st.floats(-2, 2), min_size=2, max_size=4),
    )
    @settings(max_examples=50, deadline=None)
    def test_nonnegative(self, mus, lvs):
        n = min(len(mus), len(lvs))
        kl = kl_to_standard_normal(
            ad.Tensor(np.array([mus[:n]])), ad.Tensor(np.array([lvs[:n]]))
        )
        assert kl.value[0] >= -1e-9

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        mu = ad.parameter(rng.standard_normal((4, 3)))
        lv = ad.parameter(rng.standard_normal((4, 3)) * 0.5)

        def value():
            return ad.mean(kl_to_standard_normal(mu, lv)).value.item()

        ad.mean(kl_to_standard_normal(mu, lv)).backward()
        h = 1e-5
        for p in (mu, lv):
            flat, gflat = p.value.ravel(), np.zeros(p.value.size)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = value()
                flat[i] = orig - h
                down = value()
                flat[i] = orig
                gflat[i] = (up - down) / (2 * h)
            np.testing.assert_allclose(p.grad.ravel(), gflat, rtol=1e-4, atol=1e-7)


class TestInfoNce:
    def test_identical_embeddings_give_zero_bits(self):
        g = np.random.default_rng(0).standard_normal((16, 5))
        f = np.broadcast_to(g[0], (16, 5)).copy()
        bound = info_nce(ad.Tensor(f), ad.Tensor(np.broadcast_to(g[0], (16, 5)).copy()))
        assert bound.value == pytest.approx(0.0, abs=1e-9)

    def test_well_separated_pairs_reach_log2_k(self):
        K = 128
        f = np.arange(K, dtype=float).reshape(K, 1) * 100.0
        bound = info_nce(ad.Tensor(f), ad.Tensor(f.copy()))
        assert bound.value >= 6.99
        assert bound.value <= np.log2(K) + 1e-9

    def test_too_few_pairs_rejected(self):
        with pytest.raises(ContractError):
            info_nce(ad.Tensor(np.zeros((1, 2))), ad.Tensor(np.zeros((1, 2))))

    def test_mismatched_rows_rejected(self):
        with pytest.raises(ContractError):
            info_nce(ad.Tensor(np.zeros((4, 2))), ad.Tensor(np.zeros((5, 2))))

    @given(st.integers(0, 2**31 - 1), st.integers(2, 32))
    @settings(max_examples=50, deadline=None)
    def test_bound_never_exceeds_log2_k(self, seed, K):
        rng = np.random.default_rng(seed)
        f = rng.standard_normal((K, 3)) * rng.uniform(0.1, 10)
        g = rng.standard_normal((K, 3)) * rng.uniform(0.1, 10)
        assert info_nce(ad.Tensor(f), ad.Tensor(g)).value <= np.log2(K) + 1e-9

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        f = ad.parameter(rng.standard_normal((6, 3)))
        g = rng.standard_normal((6, 3))

        def value():
            return info_nce(f, ad.Tensor(g)).value.item()

        info_nce(f, ad.Tensor(g)).backward()
        h = 1e-5
        flat, fd = f.value.ravel(), np.zeros(f.value.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = value()
            flat[i] = orig - h
            down = value()
            flat[i] = orig
            fd[i] = (up - down) / (2 * h)
        np.testing.assert_allclose(f.grad.ravel(), fd, rtol=1e-4, atol=1e-8)


class TestLagrangian:
    def test_substitution(self):
        kl = ad.Tensor(np.array([0.5, 1.5]))  # batch of per-sample KLs, mean 1.0
        nce = ad.Tensor(2.0)
        loss = lagrangian([kl], nce, beta=0.25)
        assert loss.value == pytest.approx(0.25 * 1.0 - 2.0 * LN2)

    def test_beta_must_be_positive(self):
        with pytest.raises(ContractError):
            lagrangian([ad.Tensor(np.zeros(2))], ad.Tensor(0.0), beta=0.0)

    def test_no_kl_terms(self):
        loss = lagrangian([], ad.Tensor(3.0), beta=1.0)
        assert loss.value == pytest.approx(-3.0 * LN2)


class TestBetaSchedule:
    def test_endpoints(self):
        sched = BetaSchedule(5e-5, 3.0, 20000)
        assert beta_at(sched, 0) == pytest.approx(5e-5)
        assert beta_at(sched, 20000) == pytest.approx(3.0)

    def test_geometric_midpoint(self):
        sched = BetaSchedule(5e-5, 3.0, 20000)
        assert beta_at(sched, 10000) == pytest.approx(np.sqrt(5e-5 * 3.0))

    def test_monotone(self):
        sched = BetaSchedule(1e-4, 1.0, 100)
        values = [beta_at(sched, k) for k in range(101)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_out_of_range_step(self):
        with pytest.raises(ContractError):
            beta_at(BetaSchedule(1e-4, 1.0, 10), 11)

    def test_bad_endpoints(self):
        with pytest.raises(ContractError):
            BetaSchedule(0.0, 1.0, 10)


class TestGaussianEncoder:
    def test_posterior_shapes_and_clamp(self):
        rng = np.random.default_rng(0)
        enc = GaussianEncoder.create(5, [8], 3, rng)
        mu, log_var = enc.posterior(ad.Tensor(rng.standard_normal((7, 5))))
        assert mu.shape == (7, 3) and log_var.shape == (7, 3)
        assert np.all(np.abs(log_var.value) <= 10.0)

    def test_low_noise_init(self):
        enc = GaussianEncoder.create(5, [8], 3, np.random.default_rng(0))
        _, log_var = enc.posterior(ad.Tensor(np.zeros((1, 5))))
        assert np.all(log_var.value < 0.0)

    def test_sample_reparameterization(self):
        enc = GaussianEncoder.create(2, [4], 2, np.random.default_rng(1))
        mu = ad.Tensor(np.array([[1.0, -1.0]]))
        log_var = ad.Tensor(np.log(np.array([[4.0, 0.25]])))
        eps = np.array([[1.0, -2.0]])
        u = enc.sample(mu, log_var, eps)
        np.testing.assert_allclose(u.value, [[1.0 + 2.0, -1.0 - 2.0 * 0.5]])
