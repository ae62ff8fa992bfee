"""Sampled-neighbor objective, score matching, and their derivatives."""

import numpy as np
import pytest

import minflow as mf
from minflow.continuous import NeighborConfig, _neighbor_tensor
from util import fd_gradient, random_pot, rel_err


class TestSampleNeighbors:
    def test_norm_preserved_under_rescaling(self):
        rng = np.random.default_rng(0)
        cfg = NeighborConfig(n_neighbors=6, noise_scale=0.5, seed=4)
        for _ in range(20):
            x = rng.normal(size=int(rng.integers(2, 9)))
            nbrs = mf.sample_neighbors(x, cfg, data_index=int(rng.integers(100)))
            ratios = np.linalg.norm(nbrs, axis=1) / np.linalg.norm(x)
            assert np.abs(ratios - 1.0).max() <= 1e-12

    def test_small_noise_limit_returns_input(self):
        x = np.array([1.0, -2.0, 0.5])
        cfg = NeighborConfig(n_neighbors=3, noise_scale=1e-12, seed=1)
        nbrs = mf.sample_neighbors(x, cfg)
        assert np.abs(nbrs - x[None, :]).max() <= 1e-10

    def test_deterministic_per_seed_and_index(self):
        x = np.random.default_rng(2).normal(size=5)
        cfg = NeighborConfig(n_neighbors=4, seed=11)
        a = mf.sample_neighbors(x, cfg, data_index=7)
        b = mf.sample_neighbors(x, cfg, data_index=7)
        assert np.array_equal(a, b)
        c = mf.sample_neighbors(x, cfg, data_index=8)
        assert not np.array_equal(a, c)

    def test_zero_norm_with_rescaling_raises(self):
        with pytest.raises(ValueError):
            mf.sample_neighbors(np.zeros(3), NeighborConfig())

    def test_no_rescaling_is_plain_gaussian_shift(self):
        x = np.array([0.0, 0.0])
        cfg = NeighborConfig(n_neighbors=2, noise_scale=0.3, rescale_to_input_norm=False, seed=5)
        nbrs = mf.sample_neighbors(x, cfg)
        assert nbrs.shape == (2, 2)
        assert np.all(np.isfinite(nbrs))

    def test_symmetric_draws_come_in_antithetic_pairs(self):
        x = np.array([1.0, 2.0, 3.0])
        cfg = NeighborConfig(
            n_neighbors=6, noise_scale=0.2, rescale_to_input_norm=False, symmetric=True, seed=3
        )
        nbrs = mf.sample_neighbors(x, cfg)
        lead, mirror = nbrs[:3] - x, nbrs[3:] - x
        assert np.abs(lead + mirror).max() <= 1e-15

    def test_symmetric_requires_even_count(self):
        with pytest.raises(ValueError):
            NeighborConfig(n_neighbors=3, symmetric=True)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            NeighborConfig(n_neighbors=0)
        with pytest.raises(ValueError):
            NeighborConfig(noise_scale=0.0)


class TestContinuousObjective:
    def test_identical_energies_give_neighbor_count(self):
        # constant-energy model: every term is exp(0)
        model = mf.IsotropicGaussianModel(3, 0.0)
        data = np.random.default_rng(6).normal(size=(1, 3))
        cfg = NeighborConfig(n_neighbors=5, seed=0)
        report = mf.mpf_objective_continuous(model, data, cfg=cfg)
        assert report.value == pytest.approx(5.0, rel=1e-15)
        assert report.seed == 0

    @pytest.mark.parametrize("family", ["gaussian", "pot"])
    def test_gradient_matches_finite_differences_frozen_seed(self, family):
        rng = np.random.default_rng(7)
        for _ in range(5):
            if family == "gaussian":
                model = mf.IsotropicGaussianModel(2, float(rng.normal()))
            else:
                model = random_pot(rng)
            data = rng.normal(size=(15, model.d))
            cfg = NeighborConfig(n_neighbors=3, seed=int(rng.integers(1000)))
            theta = model.default_params()
            report = mf.mpf_objective_continuous(model, data, theta, cfg)
            fd = fd_gradient(
                lambda t: mf.mpf_objective_continuous(model, data, t, cfg).value, theta
            )
            assert rel_err(report.gradient, fd) <= 1e-5

    def test_small_noise_estimate_matches_closed_form(self):
        # 10k draws at unit precision; the closed-form score-matching
        # estimate n / sum(x^2) is the reference
        rng = np.random.default_rng(8)
        data = rng.normal(0.0, 1.0, size=(10_000, 1))
        closed = data.shape[0] / float((data**2).sum())
        cfg = NeighborConfig(
            n_neighbors=8, noise_scale=0.05, rescale_to_input_norm=False, symmetric=True, seed=1
        )
        model = mf.IsotropicGaussianModel(1, 1.0)
        fitted, _ = mf.fit_continuous_mpf(model, data, cfg, theta0=np.array([0.5]))
        assert abs(fitted.precision - 1.0) <= 0.05
        assert abs(fitted.precision - closed) <= 0.02

    def test_deterministic_with_fixed_seed(self):
        rng = np.random.default_rng(9)
        model = mf.IsotropicGaussianModel(2, 0.7)
        data = rng.normal(size=(11, 2))
        cfg = NeighborConfig(n_neighbors=2, seed=42)
        a = mf.mpf_objective_continuous(model, data, cfg=cfg)
        b = mf.mpf_objective_continuous(model, data, cfg=cfg)
        assert a.value == b.value
        assert np.array_equal(a.gradient, b.gradient)

    def test_value_non_negative(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            model = random_pot(rng)
            data = rng.normal(size=(6, model.d))
            cfg = NeighborConfig(seed=int(rng.integers(100)))
            assert mf.mpf_objective_continuous(model, data, cfg=cfg).value >= 0.0

    def test_precomputed_neighbors_match_internal_draw(self):
        rng = np.random.default_rng(11)
        model = mf.IsotropicGaussianModel(3, 1.1)
        data = rng.normal(size=(9, 3))
        cfg = NeighborConfig(n_neighbors=4, seed=5)
        frozen = _neighbor_tensor(data, cfg)
        a = mf.mpf_objective_continuous(model, data, cfg=cfg)
        b = mf.mpf_objective_continuous(model, data, cfg=cfg, neighbors=frozen)
        assert a.value == b.value
        assert np.array_equal(a.gradient, b.gradient)

    def test_hastings_flag_is_identity_for_shipped_proposal(self):
        rng = np.random.default_rng(12)
        model = mf.IsotropicGaussianModel(3, 0.9)
        data = rng.normal(size=(7, 3))
        base = mf.mpf_objective_continuous(
            model, data, cfg=NeighborConfig(seed=3, hastings_correction=False)
        )
        corrected = mf.mpf_objective_continuous(
            model, data, cfg=NeighborConfig(seed=3, hastings_correction=True)
        )
        assert corrected.value == base.value

    def test_hastings_with_custom_asymmetric_density(self):
        # a deliberately asymmetric proposal density must move the value
        rng = np.random.default_rng(13)
        model = mf.IsotropicGaussianModel(2, 0.9)
        data = rng.normal(size=(5, 2))
        cfg = NeighborConfig(seed=3, hastings_correction=True)

        def log_density(src, dst):
            return np.asarray(dst - src).sum(axis=-1)

        base = mf.mpf_objective_continuous(model, data, cfg=cfg)
        skewed = mf.mpf_objective_continuous(
            model, data, cfg=cfg, proposal_log_density=log_density
        )
        assert skewed.value != base.value

    def test_binary_dataset_rejected(self):
        model = mf.IsotropicGaussianModel(2, 1.0)
        with pytest.raises(mf.DimensionMismatchError):
            mf.mpf_objective_continuous(model, mf.Dataset(np.zeros((3, 2), dtype=np.uint8)))


class TestScoreMatching:
    def test_gaussian_toy_value_zero_at_unit_precision(self):
        model = mf.IsotropicGaussianModel(1, 1.0)
        data = np.array([[1.0], [-1.0], [2.0]])
        report = mf.score_matching_objective(model, data)
        assert report.value == 0.0

    def test_gaussian_toy_minimizer_closed_form(self):
        # grid-search oracle over theta against the closed form n / sum(x^2)
        model = mf.IsotropicGaussianModel(1, 1.0)
        data = np.array([[1.0], [-1.0], [2.0]])

        def value(th):
            return mf.score_matching_objective(model, data, np.array([th])).value

        grid = np.linspace(0.0, 2.0, 100_001)
        best = grid[np.argmin([value(t) for t in grid[:: 1000]]) * 1000]
        fine = np.linspace(best - 0.05, best + 0.05, 20_001)
        best = fine[np.argmin([value(t) for t in fine])]
        assert best == pytest.approx(0.5, abs=1e-5)

        fitted, _ = mf.fit_score_matching(model, data, theta0=np.array([2.0]))
        assert fitted.precision == pytest.approx(0.5, abs=1e-8)

    def test_pot_zero_alpha_gives_zero(self):
        model = mf.PotModel([[1.0, 2.0]], [-700.0])  # alpha = exp(-700) ~ 0
        data = np.random.default_rng(14).normal(size=(5, 2))
        assert mf.score_matching_objective(model, data).value == pytest.approx(0.0, abs=1e-300)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(15)
        for _ in range(10):
            model = random_pot(rng)
            data = rng.normal(size=(8, model.d))
            theta = model.default_params()
            report = mf.score_matching_objective(model, data, theta)
            fd = fd_gradient(
                lambda t: mf.score_matching_objective(model, data, t).value, theta
            )
            assert rel_err(report.gradient, fd) <= 1e-5

    def test_discrete_model_unsupported(self):
        with pytest.raises(mf.UnsupportedModelError):
            mf.score_matching_objective(
                mf.IsingModel(np.zeros((2, 2))), np.zeros((1, 2)) + 0.5
            )


class TestStochasticMode:
    def test_stochastic_fit_tracks_frozen_fit(self):
        rng = np.random.default_rng(16)
        data = rng.normal(0.0, 1.0, size=(2000, 1))
        model = mf.IsotropicGaussianModel(1, 1.0)
        cfg = NeighborConfig(
            n_neighbors=4, noise_scale=0.1, rescale_to_input_norm=False, symmetric=True, seed=2
        )
        frozen, _ = mf.fit_continuous_mpf(model, data, cfg, theta0=np.array([0.3]))
        stochastic, trace = mf.fit_continuous_mpf(
            model, data, cfg, theta0=np.array([0.3]), sample_mode="stochastic", n_outer=8
        )
        assert abs(stochastic.precision - frozen.precision) <= 0.05
        assert trace.records

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            mf.fit_continuous_mpf(
                mf.IsotropicGaussianModel(1), np.zeros((2, 1)) + 1.0, sample_mode="sometimes"
            )
