"""Core types, masked Gaussian likelihood, and dataset serialization."""

import math

import numpy as np
import pytest

from dynens import (
    ContractViolationError,
    Dataset,
    LinearObservationModel,
    LinearStateTransition,
    MeasurementVector,
    StateVector,
    load_dataset,
    log_likelihood,
    predict_mean,
    save_dataset,
)

LOG_STD_NORMAL_PEAK = -0.5 * math.log(2.0 * math.pi)  # log(1/sqrt(2 pi))


def scalar_model(weight=1.0, bias=0.0, var=1.0):
    return LinearObservationModel((0,), [[weight]], [bias], [var])


class TestLogLikelihood:
    def test_standard_normal_at_mean(self):
        value = log_likelihood(scalar_model(), [0.0], [0.0])
        assert value == pytest.approx(LOG_STD_NORMAL_PEAK, abs=1e-12)

    def test_standard_normal_two_sigma(self):
        value = log_likelihood(scalar_model(), [0.0], [2.0])
        assert value == pytest.approx(LOG_STD_NORMAL_PEAK - 2.0, abs=1e-12)

    def test_masked_channels_match_per_channel_product(self):
        """Joint log density equals the sum of univariate Gaussian log pdfs,
        computed term by term as an independent oracle."""
        model = LinearObservationModel(
            (1, 3),
            [[0.5, -1.0, 2.0], [1.5, 0.25, 0.0]],
            [0.3, -0.7],
            [0.8, 2.5],
        )
        x = np.array([1.2, -0.4, 0.9])
        y = np.array([99.0, 0.5, 99.0, -1.1])  # channels 0 and 2 must be ignored

        expected = 0.0
        for row, (h_row, bias, var) in enumerate(zip(model.H, model.b, model.r)):
            mean = float(np.dot(h_row, x)) + bias
            z = (y[model.mask[row]] - mean) ** 2 / (2.0 * var)
            expected += -0.5 * math.log(2.0 * math.pi * var) - z
        assert log_likelihood(model, x, y) == pytest.approx(expected, abs=1e-12)

    def test_maximized_at_predicted_mean(self):
        """Grid perturbations of y around H x + b never beat the mean itself."""
        model = LinearObservationModel((0, 1), [[1.0, 0.5], [-0.2, 2.0]], [0.1, -0.3], [0.5, 1.5])
        x = np.array([0.7, -1.1])
        mean = predict_mean(model, x)
        at_mean = log_likelihood(model, x, mean)
        for d0 in np.linspace(-2, 2, 9):
            for d1 in np.linspace(-2, 2, 9):
                if d0 == 0 and d1 == 0:
                    continue
                assert log_likelihood(model, x, mean + np.array([d0, d1])) < at_mean

    def test_noise_scaling_tradeoff(self):
        """Inflating R raises the density far from the mean and lowers it at the mean."""
        x = [0.0]
        near, far = [0.0], [6.0]
        tight = scalar_model(var=1.0)
        wide = scalar_model(var=4.0)
        assert log_likelihood(wide, x, near) < log_likelihood(tight, x, near)
        assert log_likelihood(wide, x, far) > log_likelihood(tight, x, far)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ContractViolationError):
            log_likelihood(scalar_model(), [0.0, 1.0], [0.0])
        model = LinearObservationModel((3,), [[1.0]], [0.0], [1.0])
        with pytest.raises(ContractViolationError):
            log_likelihood(model, [0.0], [1.0, 2.0])  # mask index 3 out of range

    def test_accepts_wrapper_types(self):
        value = log_likelihood(scalar_model(), StateVector([0.0]), MeasurementVector([0.0]))
        assert value == pytest.approx(LOG_STD_NORMAL_PEAK, abs=1e-12)


class TestPredictMean:
    def test_scalar_affine(self):
        assert predict_mean(scalar_model(2.0, -3.0), [2.0]) == pytest.approx([1.0])

    def test_zero_matrix_returns_bias(self):
        model = LinearObservationModel((0, 1), np.zeros((2, 3)), [5.0, 5.0], [1.0, 1.0])
        for x in ([0.0, 0.0, 0.0], [1.0, -2.0, 3.0]):
            np.testing.assert_allclose(predict_mean(model, x), [5.0, 5.0])

    def test_matches_dot_product_oracle(self):
        rng = np.random.default_rng(11)
        H = rng.normal(size=(3, 3))
        b = rng.normal(size=3)
        model = LinearObservationModel((0, 1, 2), H, b, np.ones(3))
        x = rng.normal(size=3)
        expected = [sum(H[c, k] * x[k] for k in range(3)) + b[c] for c in range(3)]
        np.testing.assert_allclose(predict_mean(model, x), expected, atol=1e-12)

    def test_linear_in_state_when_bias_free(self):
        rng = np.random.default_rng(12)
        H = rng.normal(size=(2, 3))
        model = LinearObservationModel((0, 1), H, np.zeros(2), np.ones(2))
        x1, x2 = rng.normal(size=3), rng.normal(size=3)
        a, c = 0.7, -1.3
        np.testing.assert_allclose(
            predict_mean(model, a * x1 + c * x2),
            a * predict_mean(model, x1) + c * predict_mean(model, x2),
            atol=1e-12,
        )


class TestDomainTypes:
    def test_state_vector_rejects_non_finite(self):
        with pytest.raises(ContractViolationError):
            StateVector([1.0, np.nan])
        with pytest.raises(ContractViolationError):
            StateVector([np.inf])

    def test_measurement_counts_reject_negative(self):
        with pytest.raises(ContractViolationError):
            MeasurementVector.from_counts([1.0, -2.0])
        assert MeasurementVector.from_counts([0.0, 3.0]).dim == 2

    def test_observation_model_validation(self):
        with pytest.raises(ContractViolationError):
            LinearObservationModel((1, 0), np.eye(2), np.zeros(2), np.ones(2))  # unsorted
        with pytest.raises(ContractViolationError):
            LinearObservationModel((0, 0), np.eye(2), np.zeros(2), np.ones(2))  # duplicate
        with pytest.raises(ContractViolationError):
            LinearObservationModel((0,), [[1.0]], [0.0, 1.0], [1.0])  # shape clash

    def test_noise_floor_applied(self):
        model = scalar_model(var=0.0)
        assert model.r[0] == pytest.approx(1e-6)

    def test_transition_requires_symmetric_psd_noise(self):
        with pytest.raises(ContractViolationError):
            LinearStateTransition(np.eye(2), [[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ContractViolationError):
            LinearStateTransition(np.eye(2), [[-1.0, 0.0], [0.0, 1.0]])

    def test_types_are_immutable(self):
        model = scalar_model()
        with pytest.raises(ValueError):
            model.H[0, 0] = 5.0
        sv = StateVector([1.0])
        with pytest.raises(ValueError):
            sv.values[0] = 2.0


class TestDataset:
    def test_row_count_mismatch_rejected(self):
        with pytest.raises(ContractViolationError):
            Dataset(np.zeros((3, 1)), np.zeros((4, 2)))

    def test_csv_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        data = Dataset(
            rng.normal(size=(7, 3)),
            rng.poisson(2.0, size=(7, 4)).astype(float),
            bin_width_ms=100.0,
            channel_labels=("a", "b", "c", "d"),
            meta={"note": "roundtrip"},
        )
        path = tmp_path / "data.csv"
        save_dataset(data, path)
        loaded = load_dataset(path)
        np.testing.assert_array_equal(loaded.states, data.states)
        np.testing.assert_array_equal(loaded.measurements, data.measurements)
        assert loaded.channel_labels == data.channel_labels
        assert loaded.bin_width_ms == data.bin_width_ms
        assert loaded.meta["note"] == "roundtrip"

    def test_csv_header_convention(self, tmp_path):
        data = Dataset(np.zeros((2, 2)), np.ones((2, 3)))
        path = tmp_path / "data.csv"
        save_dataset(data, path)
        header = path.read_text().splitlines()[0]
        assert header == "t,x0,x1,c0,c1,c2"

    def test_slice_and_select_channels(self):
        data = Dataset(np.arange(10.0)[:, None], np.arange(30.0).reshape(10, 3))
        part = data.slice(2, 5)
        assert part.n_bins == 3 and part.states[0, 0] == 2.0
        picked = data.select_channels([2, 0])
        assert picked.channel_labels == ("c0", "c2")
        np.testing.assert_array_equal(picked.measurements[:, 1], data.measurements[:, 2])
