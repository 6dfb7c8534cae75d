import csv
import json
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causalattn.errors import DomainError, InsufficientReplicates, OrderError, SamplerError
from causalattn.model import ModelParams, TrigPoly
from causalattn.particles import InitialSampler, TrajectoryEnsemble, simulate_ensemble
from causalattn.stats import (
    CorrelationEstimate,
    centered_soft_profile,
    estimate_autocov,
    estimate_crosscov,
    estimate_cumulant3,
    estimate_empirical_rms,
    estimate_mode,
    estimate_pair_cov,
    estimates_summary,
    hard_accuracy,
    soft_accuracy,
    soft_baseline,
    soft_kernel_direct,
    soft_kernel_fourier,
    wilson_se,
    write_estimates_csv,
    write_estimates_json,
)


def synthetic(initial, final, n_tokens=None, m=8, sampler=None):
    """Ensemble with one checkpoint at t=1 from explicit ``(R, T)`` arrays."""
    initial = np.asarray(initial, dtype=float)
    final = np.asarray(final, dtype=float)
    n = initial.shape[1] if n_tokens is None else n_tokens
    p = ModelParams(beta=1.0, lam=1.0, n_tokens=n, vocab_size=m, t_final=1.0)
    return TrajectoryEnsemble(
        params=p,
        checkpoints=(0.0, 1.0),
        states=np.stack([initial, final], axis=1),
        initial_states=initial,
        tokens=np.arange(1, initial.shape[1] + 1),
        seed=0,
        dt=0.05,
        sampler=sampler,
    )


@pytest.fixture(scope="module")
def uniform_ens():
    p = ModelParams(beta=1.0, lam=1.0, n_tokens=16, vocab_size=8, t_final=1.0)
    return simulate_ensemble(p, InitialSampler(seed=21), 4000, dt=0.1)


class TestMode:
    def test_zero_mode_exact(self, uniform_ens):
        e = estimate_mode(uniform_ens, 1.0, 0.5, 0)
        assert e.value == 1 and e.std_error == 0

    def test_conjugate_symmetry_exact(self, uniform_ens):
        a = estimate_mode(uniform_ens, 1.0, 0.75, 2)
        b = estimate_mode(uniform_ens, 1.0, 0.75, -2)
        assert a.value == b.value.conjugate()
        assert a.std_error == b.std_error

    def test_uniform_mode_small(self, uniform_ens):
        for s in (0.25, 1.0):
            assert estimate_mode(uniform_ens, 1.0, s, 1).within(0.0)

    def test_sigma_domain(self, uniform_ens):
        with pytest.raises(DomainError):
            estimate_mode(uniform_ens, 1.0, 0.0, 1)
        with pytest.raises(DomainError):
            estimate_mode(uniform_ens, 1.0, 1.5, 1)

    def test_single_replicate_zero_se(self):
        e = estimate_mode(synthetic([[0.3]], [[0.4]]), 1.0, 1.0, 1)
        assert e.value == pytest.approx(np.exp(-0.4j)) and e.std_error == 0


class TestCovariance:
    def test_constant_phi_exact_zero(self, uniform_ens):
        e = estimate_autocov(uniform_ens, 1.0, 0.5, 1, TrigPoly({0: 1.0}))
        assert e.value == 0 and e.std_error == 0

    def test_autocov_at_zero_is_variance(self, uniform_ens):
        # Cov(e^{-i theta}, e^{i theta}) = 1 - |E e^{i theta}|^2
        e = estimate_autocov(uniform_ens, 0.0, 0.5, 1, {1: 1.0})
        theta = uniform_ens.initial(8)
        r = len(theta)
        direct = (1 - abs(np.mean(np.exp(1j * theta))) ** 2) * r / (r - 1)
        assert e.value == pytest.approx(direct, abs=1e-12)
        assert abs(e.value - 1) < 0.05

    def test_crosscov_scaled_by_n(self, uniform_ens):
        e = estimate_crosscov(uniform_ens, 1.0, 1.0, 0.25, 1, {1: 1.0})
        x = np.exp(-1j * uniform_ens.angles(1.0, 16))
        y = np.exp(1j * uniform_ens.initial(4))
        r = len(x)
        ref = 16 * np.mean((x - x.mean()) * (y - y.mean())) * r / (r - 1)
        assert e.value == pytest.approx(ref, abs=1e-12)

    def test_order_error(self, uniform_ens):
        with pytest.raises(OrderError):
            estimate_crosscov(uniform_ens, 1.0, 0.5, 0.5, 1, {1: 1.0})
        with pytest.raises(OrderError):
            estimate_crosscov(uniform_ens, 1.0, 0.25, 0.5, 1, {1: 1.0})

    def test_insufficient_replicates(self):
        ens = synthetic([[0.1, 0.2]], [[0.3, 0.4]])
        with pytest.raises(InsufficientReplicates):
            estimate_autocov(ens, 1.0, 1.0, 1, {1: 1.0})
        with pytest.raises(InsufficientReplicates):
            estimate_pair_cov(ens, 1.0, 2, 1)
        with pytest.raises(InsufficientReplicates):
            estimate_cumulant3(ens, [(1.0, 1.0, {1: 1})] * 3)

    def test_pair_cov_same_token_is_variance(self, uniform_ens):
        e = estimate_pair_cov(uniform_ens, 0.0, 5, 5)
        assert abs(e.value - 1) < 0.05

    def test_bilinear_pair_cov_vanishes(self, uniform_ens):
        assert estimate_pair_cov(uniform_ens, 1.0, 16, 8, n=1, m=1).within(0.0)

    def test_known_covariance_coverage(self):
        # theta(0) = theta(1) = Z ~ N(0, 1) and phi(x) = x:
        # Cov(exp(-i Z), Z) = -i E[Z sin Z] = -i exp(-1/2)
        rng = np.random.default_rng(5)
        target = -1j * math.exp(-0.5)
        hits = 0
        for _ in range(1000):
            z = rng.standard_normal((400, 1))
            e = estimate_autocov(synthetic(z, z), 1.0, 1.0, 1, lambda x: x)
            hits += e.within(target)
        assert hits >= 990

    def test_se_scales_as_inverse_sqrt(self):
        rng = np.random.default_rng(6)
        ses = []
        for r in (1000, 16000):
            z = rng.uniform(0, 2 * np.pi, (r, 2))
            ses.append(estimate_crosscov(synthetic(z, z), 1.0, 1.0, 0.5, 1, {1: 1.0}).std_error)
        assert ses[0] / ses[1] == pytest.approx(4.0, rel=0.1)


class TestCumulant:
    def test_constants_exact_zero(self, uniform_ens):
        one = lambda x: np.ones_like(x)
        e = estimate_cumulant3(uniform_ens, [(1.0, 1.0, one), (1.0, 0.5, {1: 1}), (0.0, 0.25, {1: 1})])
        assert e.value == 0

    def test_known_skew(self):
        # third central moment of an exponential(1) variable is 2
        x = np.random.default_rng(7).exponential(size=(200_000, 1))
        ident = lambda v: v
        e = estimate_cumulant3(synthetic(x, x), [(1.0, 1.0, ident)] * 3)
        assert e.within(2.0)

    def test_needs_three(self, uniform_ens):
        with pytest.raises(ValueError):
            estimate_cumulant3(uniform_ens, [(1.0, 1.0, {1: 1})] * 2)

    def test_independent_uniform_near_zero(self, uniform_ens):
        e = estimate_cumulant3(uniform_ens, [(0.0, 1.0, {1: 1}), (0.0, 0.5, {1: 1}), (0.0, 0.25, {-2: 1})])
        assert e.within(0.0, n_se=4)


class TestSoftKernel:
    @pytest.mark.parametrize("m", [2, 8, 32])
    def test_poisson_identity(self, m):
        delta = np.random.default_rng(m).uniform(-20, 20, 10_000)
        np.testing.assert_allclose(soft_kernel_direct(delta, m), soft_kernel_fourier(delta, m), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("m", [2, 8])
    def test_direct_against_many_images(self, m):
        alpha = mp.mpf(m) ** 2 / (2 * mp.pi**2)
        for d in (0.0, 0.7, -2.9, 3.1):
            ref = mp.nsum(lambda k: mp.exp(-alpha * (d - 2 * mp.pi * k) ** 2), [-mp.inf, mp.inf])
            assert soft_kernel_direct(d, m) == pytest.approx(float(ref), abs=1e-14)

    def test_mean_over_circle_is_baseline(self):
        m = 8
        val = mp.quad(lambda d: soft_kernel_direct(float(d), m), [-mp.pi, 0, mp.pi]) / (2 * mp.pi)
        assert float(val) == pytest.approx(soft_baseline(m), abs=1e-12)

    def test_small_vocab_rejected(self):
        with pytest.raises(DomainError):
            soft_kernel_direct(0.0, 1)

    def test_forced_equality(self):
        theta = np.random.default_rng(1).uniform(0, 2 * np.pi, (50, 4))
        ens = synthetic(theta, np.concatenate([theta[:, :3], theta[:, :1]], axis=1), m=32)
        e = soft_accuracy(ens, 1.0, 0.25)
        assert e.value == pytest.approx(1.0, abs=1e-12)
        assert e.value.real == pytest.approx(soft_kernel_direct(0.0, 32), abs=1e-15)

    def test_uniform_baseline(self, uniform_ens):
        e = soft_accuracy(uniform_ens, 0.0, 0.5)
        assert e.within(soft_baseline(8))

    def test_centered_profile(self):
        m, n = 8, 64
        assert centered_soft_profile([soft_baseline(m)], m, n)[0] == 0
        x = soft_baseline(m) + math.sqrt(2 * math.pi) / (m * n)
        assert centered_soft_profile([x], m, n)[0] == pytest.approx(1.0)


class TestHardAccuracy:
    def codeword(self, n, m, profile, r=2000, seed=3):
        p = ModelParams(beta=1.0, lam=1.0, n_tokens=n, vocab_size=m, t_final=1.0)
        s = InitialSampler("vocabulary-profile", np.asarray(profile, dtype=float), seed=seed)
        return simulate_ensemble(p, s, r, dt=0.1)

    def test_last_token_source(self):
        ens = self.codeword(4, 8, [[1 / 8] * 8], r=300)
        e = hard_accuracy(ens, 0.0, 0.9)
        assert e.value == 1

    def test_coin(self):
        ens = self.codeword(6, 2, [[0.5, 0.5]])
        e = hard_accuracy(ens, 0.0, 0.5)
        assert e.within(0.5)

    def test_requires_codewords(self, uniform_ens):
        with pytest.raises(SamplerError):
            hard_accuracy(uniform_ens, 1.0, 0.5)

    def test_source_domain(self):
        ens = self.codeword(4, 2, [[0.5, 0.5]], r=10)
        with pytest.raises(DomainError):
            hard_accuracy(ens, 0.0, 1.0)

    def test_wilson(self):
        # Wilson half-width with z=1 at p=1/2 reduces to 1 / (2 sqrt(n + 1)) * sqrt(n) / sqrt(n) scaling
        n = 100
        assert wilson_se(50, n) == pytest.approx(1 / (1 + 1 / n) * math.sqrt(0.25 / n + 1 / (4 * n * n)))
        assert wilson_se(0, n) > 0
        with pytest.raises(InsufficientReplicates):
            wilson_se(0, 0)


class TestEmpiricalRms:
    def test_uniform_t0(self):
        # E|(1/N) sum e^{-i theta_j}|^2 = 1/N for independent uniform angles
        p = ModelParams(beta=1.0, lam=1.0, n_tokens=32, vocab_size=8, t_final=1.0)
        ens = simulate_ensemble(p, InitialSampler(seed=4), 4000, dt=0.1)
        e = estimate_empirical_rms(ens, 0.0)
        assert e.within(math.sqrt(1 / 32))

    def test_needs_all_tokens(self):
        p = ModelParams(beta=1.0, lam=1.0, n_tokens=8, vocab_size=8, t_final=1.0)
        ens = simulate_ensemble(p, InitialSampler(seed=4), 4, dt=0.1, tokens=[8])
        with pytest.raises(DomainError):
            estimate_empirical_rms(ens, 1.0)


class TestOutput:
    def test_kind_validated(self):
        with pytest.raises(ValueError):
            CorrelationEstimate(0j, 0.0, 1, "bogus")

    def test_csv_json(self, tmp_path, uniform_ens):
        est = [estimate_mode(uniform_ens, 1.0, 1.0, 1), estimate_crosscov(uniform_ens, 1.0, 1.0, 0.5, 1, {1: 1})]
        write_estimates_csv(est, tmp_path / "e.csv")
        rows = list(csv.DictReader(open(tmp_path / "e.csv")))
        assert [r["kind"] for r in rows] == ["mode", "crosscov"]
        assert float(rows[1]["value_re"]) == est[1].value.real
        assert rows[0]["sigma0"] == ""
        write_estimates_json(est, tmp_path / "e.json", extra={"note": 1})
        d = json.load(open(tmp_path / "e.json"))
        assert d["note"] == 1 and len(d["estimates"]) == 2
        assert estimates_summary(est)["estimates"][0]["value"] == [est[0].value.real, est[0].value.imag]

    @given(st.floats(-5, 5), st.floats(0, 2))
    @settings(max_examples=30)
    def test_within(self, v, se):
        e = CorrelationEstimate(complex(v), se, 10, "mode")
        assert e.within(v + 3 * se * 0.99)
        assert not e.within(v + 3 * se + 1e-3)
