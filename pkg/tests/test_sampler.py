"""Gibbs chains against exact enumerated distributions; CD-1 baseline."""

import numpy as np
import pytest
from scipy import stats

import minflow as mf
from util import random_rbm


def _state_counts(data, d):
    counts = np.zeros(2**d)
    idx = (data.states.astype(np.uint64) << np.arange(d, dtype=np.uint64)).sum(axis=1)
    np.add.at(counts, idx.astype(np.intp), 1.0)
    return counts


class TestIsingGibbs:
    def test_zero_couplings_give_fair_coins(self):
        model = mf.IsingModel(np.zeros((5, 5)))
        n = 10_000
        data = mf.gibbs_sample_ising(model, mf.SamplerConfig(n_samples=n, seed=1))
        band = 4.0 * np.sqrt(0.25 / n)
        assert np.abs(data.states.mean(axis=0) - 0.5).max() <= band

    def test_single_unit_logistic_marginal(self):
        # bias ln 2 makes the on-probability exactly 1/3
        model = mf.IsingModel([[np.log(2.0)]])
        n = 20_000
        data = mf.gibbs_sample_ising(model, mf.SamplerConfig(n_samples=n, seed=3))
        p = 1.0 / 3.0
        band = 4.0 * np.sqrt(p * (1 - p) / n)
        assert abs(data.states.mean() - p) <= band

    def test_pairwise_moments_match_enumeration(self):
        rng = np.random.default_rng(123)
        model = mf.IsingModel(rng.normal(0.0, 0.4, (4, 4)))
        n = 40_000
        data = mf.gibbs_sample_ising(model, mf.SamplerConfig(n_samples=n, seed=7))
        exact = mf.exact_state_moments(model)
        emp = mf.empirical_state_moments(data)
        band = 4.0 * np.sqrt(np.maximum(exact * (1 - exact), 1e-12) / n)
        assert np.all(np.abs(emp - exact) <= band)

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(0)
        model = mf.IsingModel(rng.normal(0, 0.3, (4, 4)))
        cfg = mf.SamplerConfig(n_samples=200, seed=9)
        a = mf.gibbs_sample_ising(model, cfg)
        b = mf.gibbs_sample_ising(model, cfg)
        assert np.array_equal(a.states, b.states)
        c = mf.gibbs_sample_ising(model, mf.SamplerConfig(n_samples=200, seed=10))
        assert not np.array_equal(a.states, c.states)

    def test_chi_squared_goodness_of_fit(self):
        """10k thinned samples per fixture must fit the enumerated law."""
        rng = np.random.default_rng(99)
        for i in range(5):
            d = int(rng.integers(3, 7))
            model = mf.IsingModel(rng.normal(0.0, 0.2, (d, d)))
            data = mf.gibbs_sample_ising(
                model, mf.SamplerConfig(n_samples=10_000, seed=1000 + i)
            )
            expected = mf.exact_model_distribution(model).probs * 10_000
            _, p = stats.chisquare(_state_counts(data, d), expected)
            assert p > 0.001

    def test_config_validation(self):
        with pytest.raises(ValueError):
            mf.SamplerConfig(n_samples=0)
        with pytest.raises(ValueError):
            mf.SamplerConfig(n_samples=1, thin=0)
        with pytest.raises(ValueError):
            mf.SamplerConfig(n_samples=1, burn_in=-1)

    def test_default_burn_in_and_thin_scale_with_dimension(self):
        cfg = mf.SamplerConfig(n_samples=1)
        assert cfg.resolve(7) == (700, 7)
        assert mf.SamplerConfig(n_samples=1, burn_in=5, thin=2).resolve(7) == (5, 2)


class TestRandomCoupling:
    def test_entry_variance(self):
        model = mf.random_coupling(100, 0.04, seed=5)
        sample_var = model.J.var()
        assert abs(sample_var - 0.04) <= 0.1 * 0.04

    def test_zero_variance_gives_zero_matrix(self):
        assert np.array_equal(mf.random_coupling(6, 0.0, seed=1).J, np.zeros((6, 6)))

    def test_seed_reproducibility(self):
        a = mf.random_coupling(10, 0.04, seed=3)
        b = mf.random_coupling(10, 0.04, seed=3)
        assert np.array_equal(a.J, b.J)


class TestRbmGibbs:
    def test_zero_weights_step_gives_fair_coins(self):
        model = mf.RbmMarginalModel(np.zeros((6, 2)))
        rng = np.random.default_rng(4)
        x = np.zeros((5_000, 6), dtype=np.uint8)
        stepped = mf.rbm_gibbs_step(model, x, rng)
        band = 4.0 * np.sqrt(0.25 / 5_000)
        assert np.abs(stepped.mean(axis=0) - 0.5).max() <= band

    def test_step_deterministic_per_seed(self):
        rng = np.random.default_rng(5)
        model = random_rbm(rng, d=4, d_hid=2)
        x = rng.integers(0, 2, (10, 4)).astype(np.uint8)
        a = mf.rbm_gibbs_step(model, x, np.random.default_rng(42))
        b = mf.rbm_gibbs_step(model, x, np.random.default_rng(42))
        assert np.array_equal(a, b)

    def test_chain_matches_exact_visible_marginal(self):
        rng = np.random.default_rng(6)
        model = mf.RbmMarginalModel(rng.normal(0, 0.8, (5, 2)))
        n = 30_000
        data = mf.gibbs_sample_rbm(model, mf.SamplerConfig(n_samples=n, seed=8, thin=3))
        exact = mf.exact_model_distribution(model).probs
        emp = _state_counts(data, 5) / n
        band = 4.0 * np.sqrt(np.maximum(exact * (1 - exact), 1e-12) / n)
        # thinned single-chain samples carry some autocorrelation; allow a
        # small multiple of the iid band
        assert np.all(np.abs(emp - exact) <= 2.0 * band)

    def test_single_state_shape(self):
        rng = np.random.default_rng(7)
        model = random_rbm(rng, d=4, d_hid=3)
        out = mf.rbm_gibbs_step(model, np.zeros(4, dtype=np.uint8), rng)
        assert out.shape == (4,)


class TestCd1Gradient:
    def test_zero_in_expectation_at_equilibrium(self):
        """Fresh exact-equilibrium batches give a mean update within 4 sigma of 0."""
        rng = np.random.default_rng(4)
        truth = mf.RbmMarginalModel(rng.normal(0, 1.0, (5, 3)))
        states = mf.all_states(5)
        probs = mf.exact_model_distribution(truth).probs
        g_rng = np.random.default_rng(77)
        reps = []
        for _ in range(60):
            batch = states[g_rng.choice(probs.size, size=400, p=probs)]
            reps.append(mf.cd1_gradient(truth, batch, g_rng))
        reps = np.array(reps)
        z = reps.mean(axis=0) / (reps.std(axis=0, ddof=1) / np.sqrt(len(reps)))
        assert np.abs(z).max() <= 4.0

    def test_zero_weights_complement_symmetric_batch(self):
        rng = np.random.default_rng(8)
        model = mf.RbmMarginalModel(np.zeros((5, 3)))
        batch = np.vstack([np.eye(5, dtype=np.uint8), 1 - np.eye(5, dtype=np.uint8)])
        reps = np.array([mf.cd1_gradient(model, batch, rng) for _ in range(60)])
        z = reps.mean(axis=0) / (reps.std(axis=0, ddof=1) / np.sqrt(len(reps)))
        assert np.abs(z).max() <= 4.0

    def test_shape_and_determinism(self):
        rng = np.random.default_rng(9)
        model = random_rbm(rng, d=4, d_hid=2)
        batch = rng.integers(0, 2, (20, 4)).astype(np.uint8)
        a = mf.cd1_gradient(model, batch, np.random.default_rng(5))
        b = mf.cd1_gradient(model, batch, np.random.default_rng(5))
        assert a.shape == (model.layout.size,)
        assert np.array_equal(a, b)

    def test_dimension_mismatch(self):
        model = mf.RbmMarginalModel(np.zeros((4, 2)))
        with pytest.raises(mf.DimensionMismatchError):
            mf.cd1_gradient(model, np.zeros((3, 5), dtype=np.uint8), np.random.default_rng(0))
