import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from causalattn.errors import ConfigError, DomainError, TruncationError
from causalattn.model import (
    ModelParams,
    TrigPoly,
    a_coeff,
    alibi_column_sums,
    alibi_weights,
    fourier_w,
    graphon_k,
    graphon_KN,
    graphon_L1_error,
    graphon_prefactor,
    interaction_w,
    interaction_w_prime,
    sup_a,
    token_index,
)

pytestmark = pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")


def params(lam=1.0, n=4, beta=1.0):
    return ModelParams(beta=beta, lam=lam, n_tokens=n, vocab_size=8, t_final=1.0)


def quad_fourier(n, beta):
    val, _ = integrate.quad(lambda th: math.exp(beta * math.cos(th)) * math.cos(n * th), 0, math.pi, epsabs=1e-14)
    return val / math.pi


class TestParams:
    def test_from_dict_roundtrip(self):
        p = params()
        assert ModelParams.from_dict(p.to_dict()) == p

    @pytest.mark.parametrize("key", ["beta", "lambda", "n_tokens", "vocab_size", "t_final"])
    def test_missing_key(self, key):
        d = params().to_dict()
        del d[key]
        with pytest.raises(ConfigError):
            ModelParams.from_dict(d)

    @pytest.mark.parametrize(
        "kw",
        [dict(beta=0.0), dict(n_tokens=0), dict(vocab_size=1), dict(t_final=-1.0), dict(lam=float("nan"))],
    )
    def test_invalid(self, kw):
        base = dict(beta=1.0, lam=1.0, n_tokens=4, vocab_size=8, t_final=1.0)
        base.update(kw)
        with pytest.raises(ConfigError):
            ModelParams(**base)


class TestKernel:
    def test_w_examples(self):
        assert interaction_w(0.0, 1.0) == pytest.approx(2.718281828, abs=1e-9)
        assert interaction_w(math.pi, 2.0) == pytest.approx(0.135335, abs=1e-6)
        assert interaction_w(math.pi / 3, 1.0) == pytest.approx(1.648721, abs=1e-6)

    def test_w_prime_examples(self):
        assert interaction_w_prime(0.0, 1.0) == 0.0
        assert abs(interaction_w_prime(math.pi, 1.0)) < 1e-15
        assert interaction_w_prime(math.pi / 2, 1.0) == pytest.approx(-1.0, abs=1e-15)

    def test_w_prime_is_derivative(self):
        x = np.linspace(-3, 3, 13)
        h = 1e-5
        fd = (interaction_w(x + h, 1.7) - interaction_w(x - h, 1.7)) / (2 * h)
        np.testing.assert_allclose(interaction_w_prime(x, 1.7), fd, atol=1e-8)

    @pytest.mark.parametrize("n,beta,expected", [(0, 1.0, 1.2660658), (1, 1.0, 0.5651591)])
    def test_fourier_examples(self, n, beta, expected):
        # printed reference values are truncated to 7 decimals
        assert fourier_w(n, beta) == pytest.approx(expected, abs=1e-7)
        assert fourier_w(n, beta) == pytest.approx(quad_fourier(n, beta), rel=1e-12)

    def test_fourier_small_beta(self):
        assert fourier_w(5, 1e-3) == pytest.approx((5e-4) ** 5 / 120, rel=1e-6)

    def test_fourier_matches_fft_of_kernel(self):
        # characters convention: w_hat(n) = (1/2 pi) int w(theta) exp(-i n theta)
        m = 256
        th = 2 * np.pi * np.arange(m) / m
        coeffs = np.fft.fft(interaction_w(th, 2.5)) / m
        for n in range(6):
            assert coeffs[n].real == pytest.approx(fourier_w(n, 2.5), rel=1e-12)

    @given(st.floats(0.05, 8.0), st.integers(0, 12))
    def test_fourier_symmetric_positive_decreasing(self, beta, n):
        assert fourier_w(n, beta) == fourier_w(-n, beta)
        assert fourier_w(n, beta) > 0
        assert fourier_w(n + 1, beta) < fourier_w(n, beta)

    def test_a_coeff(self):
        assert a_coeff(0, 1.0) == 0.0
        assert a_coeff(1, 1.0) == pytest.approx(0.5651591, abs=5e-8)
        assert a_coeff(2, 1.0) == pytest.approx(0.5429907, abs=5e-8)
        assert a_coeff(2, 1.0) == pytest.approx(4 * quad_fourier(2, 1.0), rel=1e-12)

    def test_sup_a(self):
        val, arg = sup_a(1.0, 16)
        brute = max(n * n * quad_fourier(n, 1.0) for n in range(1, 30))
        assert arg == 1
        assert val == pytest.approx(brute, rel=1e-12)
        with pytest.raises(TruncationError):
            sup_a(1.0, 0)

    def test_sup_a_small_beta(self):
        val, arg = sup_a(1e-3, 8)
        assert arg == 1
        assert val == pytest.approx(5e-4, rel=1e-6)

    def test_sup_a_uncertified_tail(self):
        # at large beta the maximizing mode lies far out, so a short range cannot be certified
        with pytest.raises(TruncationError):
            sup_a(30.0, 2)


class TestWeights:
    def test_equal_weights_lambda0(self):
        w = alibi_weights(params(lam=0.0))
        assert w[2, 0] == pytest.approx(0.5)
        assert w[2, 1] == pytest.approx(0.5)

    def test_omega_31(self):
        w = alibi_weights(params(lam=1.0))
        mp = mpmath.mpf
        ref = mpmath.exp(mp(-1) / 2) / (mpmath.exp(mp(-1) / 2) + mpmath.exp(mp(-1) / 4))
        assert w[2, 0] == pytest.approx(float(ref), rel=1e-14)
        # the printed reference 0.43781 is accurate to about 1e-5
        assert w[2, 0] == pytest.approx(0.43781, abs=2e-5)

    @pytest.mark.parametrize("lam", [-2.0, 0.0, 1.0, 7.0])
    @pytest.mark.parametrize("n", [1, 2, 17, 200])
    def test_row_stochastic(self, lam, n):
        w = alibi_weights(params(lam=lam, n=n))
        rows = w.sum(axis=1)
        assert rows[0] == 0.0
        np.testing.assert_allclose(rows[1:], 1.0, atol=1e-12)
        assert np.all(np.triu(w) == 0)

    @pytest.mark.parametrize("lam", [0.0, 1.0, -1.5])
    def test_column_sums_match_dense(self, lam):
        p = params(lam=lam, n=97)
        np.testing.assert_allclose(alibi_column_sums(p), alibi_weights(p).sum(axis=0), rtol=1e-12, atol=1e-14)

    def test_column_sum_grows_like_log(self):
        ns = 2 ** np.arange(5, 13)
        top = [alibi_column_sums(params(lam=1.0, n=int(n))).max() for n in ns]
        slope = np.polyfit(np.log(ns), top, 1)[0]
        assert 0.8 <= slope <= 1.2


class TestGraphon:
    def test_examples(self):
        assert graphon_k(1.0, 0.5, 0.0) == pytest.approx(1.0)
        ref = mpmath.exp(-0.5) / (1 - mpmath.exp(-1))
        assert graphon_k(1.0, 0.5, 1.0) == pytest.approx(float(ref), rel=1e-14)
        # the printed reference 0.959503 is accurate to about 2e-5
        assert graphon_k(1.0, 0.5, 1.0) == pytest.approx(0.959503, abs=2e-5)
        assert graphon_k(0.5, 0.7, 3.0) == 0.0

    def test_domain(self):
        with pytest.raises(DomainError):
            graphon_k(0.0, 0.0, 1.0)

    @pytest.mark.parametrize("lam", [-2.0, 0.0, 1.0, 5.0])
    @pytest.mark.parametrize("sigma", [0.1 * k for k in range(1, 11)])
    def test_normalized(self, lam, sigma):
        val, _ = integrate.quad(lambda s: graphon_k(sigma, s, lam), 0, sigma, epsabs=1e-13, epsrel=1e-13)
        assert abs(val - 1.0) <= 1e-10

    def test_lambda_continuity(self):
        for s in np.linspace(0.05, 1, 8):
            for sp in np.linspace(0, 0.99, 7):
                assert abs(graphon_k(s, sp, 1e-9) - graphon_k(s, sp, 0.0)) <= 1e-7

    def test_prefactor_factorization(self):
        s, sp, lam = 0.8, 0.3, 2.0
        assert graphon_prefactor(s, lam) * math.exp(lam * sp) == pytest.approx(graphon_k(s, sp, lam), rel=1e-14)

    def test_token_index(self):
        assert token_index(0.25, 64) == 16
        assert token_index(1.0, 64) == 64
        assert token_index(0.3, 10) == 3
        assert token_index(1e-6, 10) == 1

    def test_KN_examples(self):
        assert graphon_KN(1.0, 0.5, params(lam=0.0, n=4)) == pytest.approx(4 / 3)
        assert graphon_KN(1.0, 1.0, params()) == 0.0
        assert abs(graphon_KN(1.0, 0.5, params(lam=1.0, n=1024)) - graphon_k(1.0, 0.5, 1.0)) <= 2e-3

    @pytest.mark.parametrize("lam", [0.0, 1.0])
    @pytest.mark.parametrize("sigma", [0.3, 1.0])
    def test_L1_error_against_quadrature(self, lam, sigma):
        p = params(lam=lam, n=16)
        j = token_index(sigma, 16)
        breaks = [k / 16 for k in range(j)] + [sigma]

        def integrand(s):
            kn = graphon_KN(sigma, s, p) if s > 0 else 0.0
            return abs(kn - graphon_k(sigma, s, lam))

        total = sum(integrate.quad(integrand, a, b, epsabs=1e-13, limit=200)[0] for a, b in zip(breaks, breaks[1:]))
        assert graphon_L1_error(sigma, p) == pytest.approx(total, rel=1e-8)

    def test_L1_error_halves(self):
        e = [graphon_L1_error(1.0, params(lam=0.0, n=n)) for n in (128, 256)]
        assert 1.6 <= e[0] / e[1] <= 2.4

    def test_L1_error_at_first_cell(self):
        n = 64
        e = graphon_L1_error(1 / n, params(lam=1.0, n=n))
        assert math.isfinite(e) and e <= 2.0

    def test_KN_row_integrates_to_one(self):
        p = params(lam=1.0, n=32)
        sigma = 0.7
        j = token_index(sigma, 32)
        total = sum(graphon_KN(sigma, (k - 0.5) / 32, p) / 32 for k in range(1, j))
        assert total == pytest.approx(1.0, rel=1e-12)


class TestTrigPoly:
    def test_eval_and_hat(self):
        phi = TrigPoly({1: 1.0, -1: 1.0})
        assert phi(0.0) == pytest.approx(2.0)
        assert phi.hat(1) == 1.0 and phi.hat(3) == 0
        assert phi.is_real and phi.degree == 1

    def test_roundtrip(self):
        phi = TrigPoly({2: 0.5 - 0.25j, -1: 1.0})
        assert TrigPoly.from_dict(phi.to_dict()).coeffs == phi.coeffs

    def test_complex_character_not_real(self):
        assert not TrigPoly({1: 1.0}).is_real
