"""Tests for the information matrix, loss distribution, adequacy and adjusted fidelity."""

import numpy as np
import pytest
from scipy.stats import kstest, ks_2samp

from tomography_toolkit.core import (
    ChannelProcessor,
    DensityMatrix,
    FidelityCalculator,
    KrausSet,
    PurifiedState,
    StateOperations,
    block_from_real_coordinates,
    real_coordinates,
)
from tomography_toolkit.protocols import ProtocolBuilder
from tomography_toolkit.reconstruction import LikelihoodReconstructor
from tomography_toolkit.simulator import MeasurementSimulator, NetworkFixtures
from tomography_toolkit.statistics import (
    AdequacyReport,
    AdequacyTester,
    InformationAnalyzer,
    LossAnalyzer,
    LossDistribution,
    adjusted_fidelity,
    align_gauge,
    j_max,
)
from tomography_toolkit.validators import DegreesOfFreedomError

PSI = np.array([np.cos(0.4), np.exp(0.7j) * np.sin(0.4)])


def pure_qubit():
    return PurifiedState(PSI.reshape(2, 1))


def network_choi_block(modes, seed):
    unitary = NetworkFixtures.random_unitary_network(modes, seed)
    choi = ChannelProcessor.choi_of_process(KrausSet.from_unitary(unitary))
    return StateOperations.purify(choi.state, 1)


def replica_losses(trials, replicas, seed_offset):
    """n (1 - F) over independent rank-1 reconstructions of the pure qubit."""
    protocol = ProtocolBuilder.build_pauli6_state_protocol(trials=trials)
    truth = DensityMatrix.from_vector(PSI)
    reconstructor = LikelihoodReconstructor()
    losses = []
    for seed in range(seed_offset, seed_offset + replicas):
        data = MeasurementSimulator.simulate(truth, protocol, seed=seed)
        estimate = reconstructor.reconstruct(data, protocol, rank=1).estimate
        losses.append(1.0 - FidelityCalculator.fidelity_purified(pure_qubit(), estimate))
    return protocol, np.array(losses)


class TestDegreesOfFreedom:
    """Test cases for j_max and real coordinates."""

    def test_j_max(self):
        """Test j_max = (2d - r) r - 1."""
        assert j_max(2, 1) == 2
        assert j_max(2, 2) == 3
        assert j_max(4, 2) == 11
        assert j_max(16, 1) == 30
        assert LossAnalyzer.j_max(8, 8) == 63

    def test_j_max_rank_validation(self):
        """Test ranks outside [1, d] are rejected."""
        with pytest.raises(ValueError, match="exceeds the dimension"):
            j_max(2, 3)

    def test_real_coordinates_inverse(self):
        """Test z = (Re c, Im c) maps back to the block."""
        block = np.array([[1 + 2j, 3 - 1j], [0.5j, -2.0]])

        np.testing.assert_array_equal(block_from_real_coordinates(real_coordinates(block), 2, 2), block)
        np.testing.assert_allclose(
            PurifiedState.normalized(block).real_coordinates() * np.linalg.norm(block), real_coordinates(block)
        )


class TestInformationAnalyzer:
    """Test cases for InformationAnalyzer class."""

    def setup_method(self):
        """Set up test fixtures."""
        self.protocol = ProtocolBuilder.build_pauli6_state_protocol(trials=1000)

    def test_pure_qubit_has_two_informative_directions(self):
        """Test a pure qubit under the Pauli protocol has exactly j_max = 2 informative eigenvalues."""
        information = InformationAnalyzer.information_matrix(pure_qubit(), self.protocol)

        assert information.real_dimension == 4
        assert information.gauge_basis.shape == (4, 2)
        assert len(information.eigenvalues) == 2
        assert information.informative_count == j_max(2, 1)
        assert information.is_complete
        assert information.sample_size == 3000

    def test_gauge_directions_are_flat(self):
        """Test the information matrix vanishes along the global-phase direction."""
        block = pure_qubit().block
        information = InformationAnalyzer.information_matrix(pure_qubit(), self.protocol)
        phase = real_coordinates(1j * block)

        assert abs(phase @ information.matrix @ phase) < 1e-9

    def test_information_scales_with_exposure(self):
        """Test doubling every exposure doubles H."""
        doubled = self.protocol.with_exposures(2 * self.protocol.exposures)

        first = InformationAnalyzer.information_matrix(pure_qubit(), self.protocol)
        second = InformationAnalyzer.information_matrix(pure_qubit(), doubled)

        np.testing.assert_allclose(second.matrix, 2 * first.matrix, atol=1e-9)
        np.testing.assert_allclose(second.eigenvalues, 2 * first.eigenvalues, rtol=1e-9)

    def test_information_is_half_the_fisher_information(self):
        """Test H equals half of sum_j (t_j / lambda_j) g_j g_j^T with g_j the numerical intensity gradient."""
        block = pure_qubit().block
        z = real_coordinates(block)
        step = 1e-6
        gradients = np.empty((len(self.protocol), len(z)))
        for k in range(len(z)):
            shift = np.zeros(len(z))
            shift[k] = step
            upper = self.protocol.intensities(block_from_real_coordinates(z + shift, 2, 1))
            lower = self.protocol.intensities(block_from_real_coordinates(z - shift, 2, 1))
            gradients[:, k] = (upper - lower) / (2 * step)
        intensities = self.protocol.intensities(block)
        fisher = (gradients.T * (self.protocol.exposures / intensities)) @ gradients

        information = InformationAnalyzer.information_matrix(pure_qubit(), self.protocol)

        np.testing.assert_allclose(information.matrix, fisher / 2, atol=1e-4)


    def test_mixed_state_gauge_dimension(self):
        """Test a rank-2 qubit has r^2 + 1 gauge directions and j_max non-gauge ones."""
        purified = StateOperations.purify(DensityMatrix(np.diag([0.7, 0.3])), 2)

        information = InformationAnalyzer.information_matrix(purified, self.protocol)

        assert information.gauge_basis.shape[1] == 5
        assert len(information.eigenvalues) == j_max(2, 2)
        assert information.is_complete

    def test_set1_is_incomplete_for_a_network(self):
        """Test Set 1 leaves unmeasurable directions for a four-mode unitary network."""
        protocol = ProtocolBuilder.build_set1_protocol(4, trials=1000)

        information = InformationAnalyzer.information_matrix(network_choi_block(4, seed=12), protocol)

        assert information.informative_count < j_max(16, 1)
        assert not information.is_complete
        assert information.unmeasurable_basis().shape[1] == j_max(16, 1) - information.informative_count

    def test_degenerate_intensity(self):
        """Test a zero predicted intensity on a row with trials is rejected."""
        zero = PurifiedState(np.array([[1.0], [0.0]], dtype=complex))

        with pytest.raises(ValueError, match="Degenerate intensity"):
            InformationAnalyzer.information_matrix(zero, self.protocol)

    def test_dimension_mismatch(self):
        """Test the block must match the protocol dimension."""
        with pytest.raises(ValueError, match="Dimension mismatch"):
            InformationAnalyzer.information_matrix(PurifiedState.normalized(np.ones((3, 1))), self.protocol)


class TestLossAnalyzer:
    """Test cases for LossAnalyzer and LossDistribution."""

    def test_single_coefficient_moments(self):
        """Test d = {1} has mean 1 and variance 2."""
        distribution = LossDistribution([1.0])

        assert distribution.mean == 1.0
        assert distribution.variance == 2.0
        assert distribution.j_max == 1

    def test_variance_identity(self):
        """Test variance = 2 sum d_j^2 and mean = sum d_j."""
        coefficients = np.array([0.3, 0.2, 0.05])
        distribution = LossDistribution(coefficients, sample_size=100)

        assert distribution.variance == pytest.approx(2 * np.sum(coefficients**2))
        assert distribution.mean == pytest.approx(0.55)
        assert distribution.normalized_loss == pytest.approx(55.0)

    def test_negative_coefficients(self):
        """Test negative loss coefficients are rejected."""
        with pytest.raises(ValueError, match="nonnegative"):
            LossDistribution([0.1, -0.1])

    def test_coefficients_scale_inversely_with_sample_size(self):
        """Test d_j scales as 1/n while L stays fixed."""
        small = ProtocolBuilder.build_pauli6_state_protocol(trials=1000)
        large = ProtocolBuilder.build_pauli6_state_protocol(trials=10_000)

        d_small = LossAnalyzer.loss_coefficients(InformationAnalyzer.information_matrix(pure_qubit(), small))
        d_large = LossAnalyzer.loss_coefficients(InformationAnalyzer.information_matrix(pure_qubit(), large))

        np.testing.assert_allclose(d_small.coefficients, 10 * d_large.coefficients, rtol=1e-9)
        assert d_small.normalized_loss == pytest.approx(d_large.normalized_loss, rel=1e-9)
        assert d_small.j_max == 2
        assert np.all(np.diff(d_small.coefficients) <= 0)

    def test_incomplete_protocol(self):
        """Test unmeasurable directions raise unless explicitly allowed."""
        protocol = ProtocolBuilder.build_set1_protocol(4, trials=1000)
        information = InformationAnalyzer.information_matrix(network_choi_block(4, seed=12), protocol)

        with pytest.raises(ValueError, match="unmeasurable directions"):
            LossAnalyzer.loss_coefficients(information)
        distribution = LossAnalyzer.loss_coefficients(information, allow_incomplete=True)
        assert distribution.incomplete
        assert distribution.j_max == information.informative_count

    def test_chi_squared_quantile(self):
        """Test d = {1} at 95% confidence gives the one-dof chi-squared quantile 3.84."""
        bound = LossAnalyzer.loss_quantile(LossDistribution([1.0]), confidence=0.95, seed=0)

        assert abs((1.0 - bound) - 3.841) < 0.1

    def test_zero_coefficients_give_unit_bound(self):
        """Test a distribution with all d_j = 0 has fidelity bound 1."""
        assert LossAnalyzer.loss_quantile(LossDistribution([0.0, 0.0]), seed=1) == 1.0

    def test_quantile_validation(self):
        """Test confidence and draw-count checks."""
        with pytest.raises(ValueError, match=r"Confidence must lie in \(0, 1\)"):
            LossAnalyzer.loss_quantile(LossDistribution([1.0]), confidence=1.5)
        with pytest.raises(ValueError, match="at least 100000 draws"):
            LossAnalyzer.loss_quantile(LossDistribution([1.0]), size=1000)

    def test_loss_samples_are_seeded(self):
        """Test loss draws repeat for a seed and average to sum d_j."""
        distribution = LossDistribution([0.5, 0.25])

        first = LossAnalyzer.loss_samples(distribution, size=50_000, seed=3)
        second = LossAnalyzer.loss_samples(distribution, size=50_000, seed=3)

        np.testing.assert_array_equal(first, second)
        assert abs(first.mean() - 0.75) < 0.03

    @pytest.mark.slow
    def test_monte_carlo_mean_loss(self):
        """Test mean and variance of 1 - F over 2000 reconstructions at n = 10^4 match the loss law."""
        protocol, losses = replica_losses(trials=3334, replicas=2000, seed_offset=0)
        distribution = LossAnalyzer.loss_coefficients(InformationAnalyzer.information_matrix(pure_qubit(), protocol))

        assert protocol.total_trials == 10_002
        assert abs(losses.mean() - distribution.mean) < 0.1 * distribution.mean
        assert abs(losses.var() - distribution.variance) < 0.25 * distribution.variance

    @pytest.mark.slow
    def test_normalized_loss_is_size_independent(self):
        """Test n (1 - F) has the same law and the same mean L at n = 10^4 and n = 10^5."""
        small_protocol, small = replica_losses(trials=3334, replicas=3000, seed_offset=10_000)
        large_protocol, large = replica_losses(trials=33_334, replicas=3000, seed_offset=20_000)
        small_scaled = small_protocol.total_trials * small
        large_scaled = large_protocol.total_trials * large
        small_law = LossAnalyzer.loss_coefficients(InformationAnalyzer.information_matrix(pure_qubit(), small_protocol))
        large_law = LossAnalyzer.loss_coefficients(InformationAnalyzer.information_matrix(pure_qubit(), large_protocol))

        assert ks_2samp(small_scaled, large_scaled).pvalue > 0.01
        assert abs(small_scaled.mean() / large_scaled.mean() - 1.0) < 0.1
        assert abs(small_law.normalized_loss / large_law.normalized_loss - 1.0) < 0.1
        assert abs(large_scaled.mean() / large_law.normalized_loss - 1.0) < 0.1

    @pytest.mark.slow
    def test_fiducial_bound_of_unitary_gate(self):
        """Test the 95% fidelity bound of a reconstructed random qubit gate lies in (0.99, 1)."""
        protocol = ProtocolBuilder.build_pauli6_process_protocol(trials=1000)
        gate = KrausSet.from_unitary(NetworkFixtures.random_unitary_network(2, seed=31))
        data = MeasurementSimulator.simulate(gate, protocol, seed=32)
        result = LikelihoodReconstructor().reconstruct(data, protocol, rank=1)

        distribution = LossAnalyzer.loss_coefficients(InformationAnalyzer.information_matrix(result.estimate, protocol))
        bound = LossAnalyzer.loss_quantile(distribution, confidence=0.95, seed=0)

        assert 0.99 < bound < 1.0


class TestAdequacyTester:
    """Test cases for AdequacyTester class."""

    def test_reference_p_values(self):
        """Test tail probabilities of two reference statistics."""
        assert abs(AdequacyTester.chi_square_p_value(18.002, 10) - 0.055) < 0.001
        assert abs(AdequacyTester.chi_square_p_value(7.14, 6) - 0.31) < 0.01

    def test_p_value_validation(self):
        """Test degrees of freedom and statistic checks."""
        with pytest.raises(ValueError, match="at least 1"):
            AdequacyTester.chi_square_p_value(1.0, 0)
        with pytest.raises(ValueError, match="nonnegative"):
            AdequacyTester.chi_square_p_value(-1.0, 3)

    def test_exact_data_have_zero_statistic(self):
        """Test noiseless data fitted by the true model give chi-square 0 and p-value 1."""
        protocol = ProtocolBuilder.build_pauli6_state_protocol(trials=1000)
        data = MeasurementSimulator.simulate(DensityMatrix.from_vector(PSI), protocol, mode="noiseless")
        result = LikelihoodReconstructor().reconstruct(data, protocol, rank=1)

        report = AdequacyTester.chi_square_adequacy(data, result)

        assert report.statistic < 1e-10
        assert report.dof == 1
        assert report.p_value > 0.999
        assert report.verdict == "adequate"

    def test_no_degrees_of_freedom(self):
        """Test a full-rank qubit model on three two-outcome groups has no degrees of freedom left."""
        protocol = ProtocolBuilder.build_pauli6_state_protocol(trials=1000)
        data = MeasurementSimulator.simulate(DensityMatrix(np.diag([0.7, 0.3])), protocol, seed=4)
        result = LikelihoodReconstructor().reconstruct(data, protocol, rank=2)

        with pytest.raises(DegreesOfFreedomError, match="no degrees of freedom"):
            AdequacyTester.chi_square_adequacy(data, result)

    def test_report_verdict(self):
        """Test the verdict follows the significance level."""
        assert AdequacyReport(18.002, 10, 0.055, 0.05).passed
        assert AdequacyReport(18.002, 10, 0.055, 0.1).verdict == "inadequate"

    @pytest.mark.slow
    def test_p_values_are_uniform_under_the_model(self):
        """Test p-values of data drawn from the fitted model class are uniform over 500 replicas."""
        protocol = ProtocolBuilder.build_pauli6_state_protocol(trials=1000)
        truth = DensityMatrix.from_vector(PSI)
        reconstructor = LikelihoodReconstructor()
        p_values = []
        for seed in range(500):
            data = MeasurementSimulator.simulate(truth, protocol, seed=50_000 + seed)
            result = reconstructor.reconstruct(data, protocol, rank=1)
            p_values.append(AdequacyTester.chi_square_adequacy(data, result).p_value)

        assert kstest(p_values, "uniform").pvalue > 0.01


class TestAdjustedFidelity:
    """Test cases for gauge alignment and adjusted fidelity."""

    def setup_method(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(17)
        self.protocol = ProtocolBuilder.build_pauli6_process_protocol(trials=1000)
        self.truth = network_choi_block(2, seed=40)
        self.information = InformationAnalyzer.information_matrix(self.truth, self.protocol)

    def test_align_gauge(self):
        """Test alignment undoes a right-unitary rotation."""
        block = self.rng.standard_normal((4, 2)) + 1j * self.rng.standard_normal((4, 2))
        unitary, _ = np.linalg.qr(self.rng.standard_normal((2, 2)) + 1j * self.rng.standard_normal((2, 2)))

        np.testing.assert_allclose(align_gauge(block, block @ unitary), block, atol=1e-12)

    def test_identical_estimate(self):
        """Test a zero deviation up to global phase gives adjusted fidelity 1."""
        estimate = PurifiedState(np.exp(0.9j) * self.truth.block)

        assert adjusted_fidelity(self.truth, estimate, self.information) == pytest.approx(1.0, abs=1e-12)

    def test_small_perturbation_matches_plain_fidelity(self):
        """Test on a complete protocol adjusted and plain fidelity agree to third order."""
        direction = self.rng.standard_normal((4, 1)) + 1j * self.rng.standard_normal((4, 1))
        estimate = PurifiedState.normalized(self.truth.block + 1e-3 * direction / np.linalg.norm(direction))

        plain = FidelityCalculator.fidelity_purified(self.truth, estimate)
        adjusted = adjusted_fidelity(self.truth, estimate, self.information)

        assert 1 - plain > 1e-8
        assert abs(adjusted - plain) < 1e-7

    def test_unmeasurable_deviation_is_ignored(self):
        """Test a deviation along unmeasurable directions of Set 1 keeps adjusted fidelity at 1."""
        protocol = ProtocolBuilder.build_set1_protocol(4, trials=1000)
        truth = network_choi_block(4, seed=12)
        information = InformationAnalyzer.information_matrix(truth, protocol)
        deviation = block_from_real_coordinates(information.unmeasurable_basis()[:, 0], 16, 1)
        estimate = PurifiedState.normalized((truth.block + 2 * deviation) / np.sqrt(5))

        plain = FidelityCalculator.fidelity_purified(truth, estimate)
        adjusted = adjusted_fidelity(truth, estimate, information)

        assert plain == pytest.approx(0.2, abs=1e-9)
        assert adjusted > 0.999

    def test_rank_mismatch(self):
        """Test estimates of higher rank than the information matrix are rejected."""
        estimate = PurifiedState.normalized(self.rng.standard_normal((4, 2)) + 0j)

        with pytest.raises(ValueError, match="exceed the information matrix rank"):
            adjusted_fidelity(self.truth, estimate, self.information)
