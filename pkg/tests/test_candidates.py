"""Candidate generation: least-squares fits, dropout, perturbation, serialization."""

import numpy as np
import pytest

from dynens import (
    ConfigError,
    Dataset,
    GenerationConfig,
    LinearObservationModel,
    SingularFitError,
    fit_observation,
    fit_state_transition,
    generate_candidates,
    load_candidates,
    neuron_dropout,
    perturb_weights,
    save_candidates,
)


class OnesRng:
    """Randomness stub forcing every Gaussian draw to 1."""

    def standard_normal(self, shape):
        return np.ones(shape)


def dataset_from_states(states, H, b, noise_std=0.0, rng=None):
    states = np.asarray(states, dtype=np.float64)
    meas = states @ np.asarray(H).T + np.asarray(b)
    if noise_std:
        meas = meas + noise_std * rng.standard_normal(meas.shape)
    return Dataset(states, meas)


class TestFitStateTransition:
    def test_exact_scalar_recovery(self):
        states = (0.9 ** np.arange(50) * 5.0)[:, None]
        data = Dataset(states, np.zeros((50, 1)))
        trans = fit_state_transition(data, ridge=0.0)
        assert trans.A[0, 0] == pytest.approx(0.9, abs=1e-10)
        assert trans.Q[0, 0] <= 1e-8

    def test_constant_sequence_is_singular(self):
        data = Dataset(np.full((30, 1), 2.0), np.zeros((30, 1)))
        with pytest.raises(SingularFitError):
            fit_state_transition(data, ridge=0.0)

    def test_too_few_rows(self):
        data = Dataset(np.random.default_rng(0).normal(size=(3, 2)), np.zeros((3, 1)))
        with pytest.raises(SingularFitError):
            fit_state_transition(data)

    def test_noisy_recovery_3x3(self):
        """Generate-then-recover with noise: every entry within 0.02."""
        rng = np.random.default_rng(10)
        A = np.array([[0.9, 0.05, 0.0], [0.0, 0.8, 0.1], [0.05, 0.0, 0.7]])
        x = np.zeros(3)
        states = np.empty((5000, 3))
        for t in range(5000):
            x = A @ x + 0.3 * rng.standard_normal(3)
            states[t] = x
        trans = fit_state_transition(Dataset(states, np.zeros((5000, 1))))
        np.testing.assert_allclose(trans.A, A, atol=0.02)
        assert np.all(np.linalg.eigvalsh(trans.Q) >= 1e-9 - 1e-15)


class TestFitObservation:
    def test_noiseless_recovery(self):
        rng = np.random.default_rng(1)
        states = rng.normal(size=(60, 3))
        H = np.array([[2.0, 0.0, 0.0]])
        data = dataset_from_states(states, H, [-3.0])
        model = fit_observation(data, [0], ridge=0.0)
        np.testing.assert_allclose(model.H, H, atol=1e-8)
        assert model.b[0] == pytest.approx(-3.0, abs=1e-8)
        assert model.r[0] == pytest.approx(1e-6)  # floored residual variance

    def test_full_channel_mask(self):
        rng = np.random.default_rng(2)
        states = rng.normal(size=(40, 2))
        data = dataset_from_states(states, rng.normal(size=(5, 2)), rng.normal(size=5))
        model = fit_observation(data, range(5))
        assert model.mask == (0, 1, 2, 3, 4)

    def test_too_few_rows_is_singular(self):
        rng = np.random.default_rng(3)
        states = rng.normal(size=(3, 3))  # exactly d_x rows
        data = Dataset(states, rng.normal(size=(3, 2)))
        with pytest.raises(SingularFitError):
            fit_observation(data, [0])

    def test_residuals_orthogonal_to_regressors(self):
        """Normal-equations property at ridge = 0."""
        rng = np.random.default_rng(4)
        states = rng.normal(size=(200, 3))
        data = dataset_from_states(states, rng.normal(size=(4, 3)), rng.normal(size=4),
                                   noise_std=0.5, rng=rng)
        model = fit_observation(data, range(4), ridge=0.0)
        resid = data.measurements - (states @ model.H.T + model.b)
        design = np.column_stack([states, np.ones(200)])
        np.testing.assert_allclose(design.T @ resid, 0.0, atol=1e-8)


class TestNeuronDropout:
    def test_keep_all(self):
        rng = np.random.default_rng(0)
        assert neuron_dropout(20, 20, rng) == tuple(range(20))

    def test_sorted_subset_reproducible(self):
        a = neuron_dropout(20, 15, np.random.default_rng(123))
        b = neuron_dropout(20, 15, np.random.default_rng(123))
        assert a == b
        assert len(a) == 15 and list(a) == sorted(set(a))

    def test_invalid_size(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ConfigError):
            neuron_dropout(20, 0, rng)
        with pytest.raises(ConfigError):
            neuron_dropout(20, 21, rng)

    def test_uniform_inclusion_frequency(self):
        """Each of 5 channels appears in a 2-subset with frequency 2/5."""
        rng = np.random.default_rng(99)
        draws = 100_000
        counts = np.zeros(5)
        for _ in range(draws):
            for c in neuron_dropout(5, 2, rng):
                counts[c] += 1
        freq = counts / draws
        sigma = np.sqrt(0.4 * 0.6 / draws)
        np.testing.assert_allclose(freq, 0.4, atol=3 * sigma)


class TestPerturbWeights:
    def base_model(self):
        return LinearObservationModel((0,), [[2.0]], [1.0], [0.5])

    def test_zero_factor_is_identity(self):
        model = self.base_model()
        assert perturb_weights(model, 0.0, np.random.default_rng(0)) is model

    def test_forced_unit_noise(self):
        """w + p * eps with eps pinned to 1: 2.0 -> 2.1 at p = 0.1."""
        out = perturb_weights(self.base_model(), 0.1, OnesRng())
        assert out.H[0, 0] == pytest.approx(2.1, abs=1e-15)
        assert out.b[0] == pytest.approx(1.1, abs=1e-15)
        assert out.mask == (0,)
        np.testing.assert_array_equal(out.r, self.base_model().r)

    def test_negative_factor_rejected(self):
        from dynens import ContractViolationError

        with pytest.raises(ContractViolationError):
            perturb_weights(self.base_model(), -0.1, np.random.default_rng(0))

    def test_gaussian_moment_oracle(self):
        """10^4 scalar perturbations: mean shift within 3 SE of 0, std within 5%."""
        rng = np.random.default_rng(7)
        model = self.base_model()
        shifts = np.array([
            perturb_weights(model, 0.1, rng).H[0, 0] - 2.0 for _ in range(10_000)
        ])
        assert abs(shifts.mean()) < 3 * 0.1 / np.sqrt(10_000)
        assert shifts.std() == pytest.approx(0.1, rel=0.05)


class TestGenerateCandidates:
    def make_data(self, n_channels=8, rows=300, seed=5):
        rng = np.random.default_rng(seed)
        states = rng.normal(size=(rows, 3))
        H = rng.normal(size=(n_channels, 3))
        b = rng.normal(size=n_channels)
        return dataset_from_states(states, H, b, noise_std=0.3, rng=rng)

    def test_single_full_unperturbed_candidate_is_plain_fit(self):
        data = self.make_data()
        cfg = GenerationConfig(1, data.n_channels, 0.0, seed=0)
        (candidate,) = generate_candidates(data, cfg)
        direct = fit_observation(data, range(data.n_channels))
        np.testing.assert_array_equal(candidate.H, direct.H)
        np.testing.assert_array_equal(candidate.b, direct.b)

    def test_dropout_and_perturbation_regime(self):
        data = self.make_data(n_channels=20, rows=400)
        cfg = GenerationConfig(20, 15, 0.1, seed=3)
        models = generate_candidates(data, cfg)
        assert len(models) == 20
        assert all(m.size == 15 for m in models)
        assert len({m.mask for m in models}) >= 2

    def test_identical_seeds_bit_exact(self):
        data = self.make_data()
        cfg = GenerationConfig(5, 6, 0.2, seed=11)
        a = generate_candidates(data, cfg)
        b = generate_candidates(data, cfg)
        for ma, mb in zip(a, b):
            assert ma.mask == mb.mask
            np.testing.assert_array_equal(ma.H, mb.H)
            np.testing.assert_array_equal(ma.b, mb.b)
            np.testing.assert_array_equal(ma.r, mb.r)

    def test_degenerate_settings_collapse_to_identical_models(self):
        data = self.make_data()
        cfg = GenerationConfig(4, data.n_channels, 0.0, seed=2)
        models = generate_candidates(data, cfg)
        for m in models[1:]:
            assert m.mask == models[0].mask
            np.testing.assert_array_equal(m.H, models[0].H)

    def test_mask_union_covers_expected_channels(self):
        """Coverage matches the 1 - (1 - s/d)^M inclusion probability within 3 sigma."""
        data = self.make_data(n_channels=20, rows=400)
        p_inc = 1.0 - (1.0 - 5.0 / 20.0) ** 12
        expected = 20 * p_inc
        sigma = np.sqrt(20 * p_inc * (1 - p_inc))
        for seed in range(5):
            models = generate_candidates(data, GenerationConfig(12, 5, 0.0, seed=seed))
            covered = len(set().union(*(m.mask for m in models)))
            assert covered >= expected - 3 * sigma

    def test_perturbation_averages_back_to_fit(self):
        """Law of large numbers: mean perturbed weights recover the fitted ones."""
        data = self.make_data()
        direct = fit_observation(data, range(data.n_channels))
        draws = 2000
        acc = np.zeros_like(direct.H)
        for i in range(draws):
            cfg = GenerationConfig(1, data.n_channels, 0.1, seed=i)
            acc += generate_candidates(data, cfg)[0].H
        np.testing.assert_allclose(acc / draws, direct.H, atol=4 * 0.1 / np.sqrt(draws))

    def test_model_size_exceeding_channels_rejected(self):
        data = self.make_data(n_channels=4)
        with pytest.raises(ConfigError):
            generate_candidates(data, GenerationConfig(2, 5, 0.0, seed=0))

    def test_fit_error_carries_candidate_index(self):
        data = Dataset(np.full((30, 1), 1.0), np.random.default_rng(0).normal(size=(30, 2)))
        with pytest.raises(SingularFitError, match="candidate 0"):
            generate_candidates(data, GenerationConfig(3, 2, 0.0, seed=0), ridge=0.0)


class TestSerialization:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(31)
        states = rng.normal(size=(100, 3))
        data = dataset_from_states(states, rng.normal(size=(6, 3)), rng.normal(size=6),
                                   noise_std=0.2, rng=rng)
        cfg = GenerationConfig(4, 5, 0.1, seed=9)
        models = generate_candidates(data, cfg)
        path = tmp_path / "candidates.json"
        save_candidates(models, path, cfg)
        loaded, loaded_cfg = load_candidates(path)
        assert loaded_cfg == cfg
        assert len(loaded) == len(models)
        for ma, mb in zip(models, loaded):
            assert ma.mask == mb.mask
            np.testing.assert_array_equal(ma.H, mb.H)
            np.testing.assert_array_equal(ma.b, mb.b)
            np.testing.assert_array_equal(ma.r, mb.r)
