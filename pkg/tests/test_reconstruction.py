"""Tests for maximum-likelihood reconstruction and rank selection."""

from unittest.mock import patch

import numpy as np
import pytest
from scipy.stats import unitary_group

from tomography_toolkit.core import (
    PAULI_BASIS,
    DensityMatrix,
    FidelityCalculator,
    KrausSet,
    PurifiedState,
    pauli_labels,
)
from tomography_toolkit.protocols import ProtocolBuilder
from tomography_toolkit.reconstruction import LikelihoodReconstructor
from tomography_toolkit.simulator import MeasurementData, MeasurementSimulator, NetworkFixtures
from tomography_toolkit.validators import ConvergenceError, ModelViolationError


def mixed_state(weight=0.7):
    psi = np.array([np.cos(0.4), np.exp(0.7j) * np.sin(0.4)])
    orthogonal = np.array([-np.conj(psi[1]), np.conj(psi[0])])
    return DensityMatrix(weight * np.outer(psi, psi.conj()) + (1 - weight) * np.outer(orthogonal, orthogonal.conj()))


class TestStateReconstruction:
    """Test cases for state reconstruction."""

    def setup_method(self):
        """Set up test fixtures."""
        self.protocol = ProtocolBuilder.build_pauli6_state_protocol(trials=1000)
        self.reconstructor = LikelihoodReconstructor()

    def test_exact_pure_state_recovery(self):
        """Test noiseless counts of a pure state are fitted exactly at rank 1."""
        truth = DensityMatrix.from_vector([np.cos(0.4), np.exp(0.7j) * np.sin(0.4)])
        data = MeasurementSimulator.simulate(truth, self.protocol, mode="noiseless")

        result = self.reconstructor.reconstruct_state(data, self.protocol, rank=1)

        assert result.rank == 1
        assert result.kind == "state"
        assert FidelityCalculator.fidelity(truth, result.density_matrix) > 1 - 1e-8
        assert result.residual < 1e-9

    def test_exact_mixed_state_recovery(self):
        """Test noiseless counts of a rank-2 state are fitted exactly at rank 2."""
        truth = mixed_state()
        data = MeasurementSimulator.simulate(truth, self.protocol, mode="noiseless")

        result = self.reconstructor.reconstruct(data, self.protocol, rank=2)

        assert np.max(np.abs(result.density_matrix.matrix - truth.matrix)) < 1e-6
        np.testing.assert_allclose(
            result.fitted_probabilities, MeasurementSimulator.predict_probabilities(truth, self.protocol), atol=1e-6
        )

    def test_linear_inversion_of_noiseless_data(self):
        """Test least-squares inversion recovers the state from exact frequencies."""
        truth = mixed_state()
        data = MeasurementSimulator.simulate(truth, self.protocol, mode="noiseless")

        estimate = LikelihoodReconstructor.linear_inversion(data, self.protocol)

        np.testing.assert_allclose(estimate, truth.matrix, atol=1e-12)

    def test_gauge_invariance_of_initial_block(self):
        """Test initial blocks c and c V lead to the same density matrix."""
        rng = np.random.default_rng(21)
        data = MeasurementSimulator.simulate(mixed_state(), self.protocol, seed=5)
        block = PurifiedState.normalized(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
        rotated = PurifiedState(block.block @ unitary_group.rvs(2, random_state=rng))

        first = self.reconstructor.reconstruct(data, self.protocol, rank=2, initial=block)
        second = self.reconstructor.reconstruct(data, self.protocol, rank=2, initial=rotated)

        assert np.max(np.abs(first.density_matrix.matrix - second.density_matrix.matrix)) < 1e-8

    def test_log_likelihood_increases_with_rank(self):
        """Test a larger rank never fits worse."""
        data = MeasurementSimulator.simulate(mixed_state(), self.protocol, seed=8)

        rank1 = self.reconstructor.reconstruct(data, self.protocol, rank=1)
        rank2 = self.reconstructor.reconstruct(data, self.protocol, rank=2)

        assert rank2.log_likelihood >= rank1.log_likelihood - 1e-9

    def test_model_violation(self):
        """Test a positive count on a row the model cannot produce raises."""
        data = MeasurementData([50, 50, 50, 50, 50, 50], [100] * 6, protocol=self.protocol)
        initial = PurifiedState(np.array([[1.0], [0.0]], dtype=complex))

        with pytest.raises(ModelViolationError, match="predicted intensity"):
            self.reconstructor.reconstruct(data, self.protocol, rank=1, initial=initial)

    def test_convergence_error(self):
        """Test the iteration limit raises with diagnostics."""
        data = MeasurementSimulator.simulate(mixed_state(), self.protocol, seed=2)

        with pytest.raises(ConvergenceError) as exc_info:
            LikelihoodReconstructor(max_iterations=1).reconstruct(data, self.protocol, rank=2)

        assert exc_info.value.iterations == 1
        assert exc_info.value.residual > 1e-9

    def test_converges_on_every_sampled_replica(self):
        """Test rank-1 fits of 300 sampled pure-qubit replicas at n = 10^4 all converge."""
        protocol = ProtocolBuilder.build_pauli6_state_protocol(trials=3334)
        truth = DensityMatrix.from_vector([np.cos(0.4), np.exp(0.7j) * np.sin(0.4)])

        for seed in range(300):
            data = MeasurementSimulator.simulate(truth, protocol, seed=seed)
            result = self.reconstructor.reconstruct(data, protocol, rank=1)

            assert result.iterations < self.reconstructor.max_iterations
            assert FidelityCalculator.fidelity(truth, result.density_matrix) > 0.99

    def test_likelihood_never_decreases(self):
        """Test the log-likelihood of accepted iterates is nondecreasing."""
        rng = np.random.default_rng(13)
        data = MeasurementSimulator.simulate(mixed_state(), self.protocol, seed=11)
        initial = PurifiedState.normalized(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))

        result = self.reconstructor.reconstruct(data, self.protocol, rank=2, initial=initial)
        history = result.likelihood_history
        steps = np.diff(history)

        assert len(history) >= 2
        assert np.all(steps >= -1e-12 * np.maximum(1.0, np.abs(history[:-1])))
        assert history[-1] > history[0]

    def test_validation(self):
        """Test rank, kind and iteration checks."""
        data = MeasurementSimulator.simulate(mixed_state(), self.protocol, mode="noiseless")

        with pytest.raises(ValueError, match="at least 1"):
            self.reconstructor.reconstruct(data, self.protocol, rank=0)
        with pytest.raises(ValueError, match="exceeds the dimension"):
            self.reconstructor.reconstruct(data, self.protocol, rank=3)
        with pytest.raises(ValueError, match="needs a process protocol"):
            self.reconstructor.reconstruct_process(data, self.protocol, rank=1)
        with pytest.raises(ValueError, match="max_iterations must be positive"):
            LikelihoodReconstructor(max_iterations=0)

    def test_state_result_has_no_choi(self):
        """Test state results refuse process views."""
        data = MeasurementSimulator.simulate(mixed_state(), self.protocol, mode="noiseless")
        result = self.reconstructor.reconstruct(data, self.protocol, rank=2)

        with pytest.raises(ValueError, match="Only process reconstructions"):
            result.choi


class TestProcessReconstruction:
    """Test cases for process reconstruction."""

    def setup_method(self):
        """Set up test fixtures."""
        self.protocol = ProtocolBuilder.build_pauli6_process_protocol(trials=10_000)
        self.reconstructor = LikelihoodReconstructor()

    def test_ideal_z_gate(self):
        """Test noiseless data of the Z gate give process fidelity 1 at rank 1."""
        gate = NetworkFixtures.gate_fixture("z")
        data = MeasurementSimulator.simulate(gate, self.protocol, mode="noiseless")

        result = self.reconstructor.reconstruct_process(data, self.protocol, rank=1)

        assert result.dim == 2
        assert FidelityCalculator.process_fidelity(gate, result.choi) > 1 - 1e-8
        assert result.trace_preservation_residual < 1e-6

    def test_noisy_z_gate(self):
        """Test sampled data of the noisy Z gate give a rank-2 chi-matrix dominated by ZZ."""
        epsilon = 0.1
        data = MeasurementSimulator.simulate(NetworkFixtures.gate_fixture("noisy-z", epsilon), self.protocol, seed=3)

        result = self.reconstructor.reconstruct(data, self.protocol, rank=2)
        chi = result.chi(PAULI_BASIS).matrix
        diagonal = np.real(np.diag(chi))

        assert pauli_labels(2)[int(np.argmax(diagonal))] == "Z"
        assert abs(diagonal[3] - 2 * (1 - epsilon)) < 0.05
        assert abs(diagonal[0] - 2 * epsilon) < 0.05
        assert np.isclose(np.trace(chi).real, 2.0)
        assert result.trace_preservation_residual < 1e-6
        assert len(result.kraus()) == 2

    def test_trace_preservation_from_random_initial_block(self):
        """Test the estimate is trace preserving whatever the starting block."""
        rng = np.random.default_rng(4)
        data = MeasurementSimulator.simulate(NetworkFixtures.gate_fixture("depolarized-z", 0.2), self.protocol, seed=9)
        initial = PurifiedState.normalized(rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3)))

        result = self.reconstructor.reconstruct(data, self.protocol, rank=3, initial=initial)

        assert result.trace_preservation_residual < 1e-6

    def test_kraus_of_estimate_is_trace_preserving(self):
        """Test the Kraus operators of the estimate satisfy the completeness relation."""
        data = MeasurementSimulator.simulate(NetworkFixtures.gate_fixture("noisy-z", 0.1), self.protocol, seed=6)

        kraus = self.reconstructor.reconstruct(data, self.protocol, rank=2).kraus()

        total = sum(op.conj().T @ op for op in kraus.operators)
        np.testing.assert_allclose(total, np.eye(2), atol=1e-6)

    def test_needs_process_protocol(self):
        """Test process reconstruction refuses state protocols."""
        state_protocol = ProtocolBuilder.build_pauli6_state_protocol(trials=10)
        data = MeasurementSimulator.simulate(mixed_state(), state_protocol, mode="noiseless")

        with pytest.raises(ValueError, match="needs a state protocol"):
            self.reconstructor.reconstruct_state(
                MeasurementSimulator.simulate(KrausSet((np.eye(2),)), self.protocol, mode="noiseless"),
                self.protocol,
                rank=1,
            )
        with pytest.raises(ValueError, match="needs a process protocol"):
            self.reconstructor.reconstruct_process(data, state_protocol, rank=1)


class TestAdequateRank:
    """Test cases for the adequate-rank ladder."""

    def setup_method(self):
        """Set up test fixtures."""
        self.reconstructor = LikelihoodReconstructor()

    def test_unitary_network_selects_rank_one(self):
        """Test noiseless data of a unitary network pass at rank 1."""
        protocol = ProtocolBuilder.build_extended_protocol(2, trials=1000)
        network = KrausSet.from_unitary(NetworkFixtures.random_unitary_network(2, seed=1))
        data = MeasurementSimulator.simulate(network, protocol, mode="noiseless")

        selection = self.reconstructor.adequate_rank(data, protocol)

        assert selection.passed
        assert selection.rank == 1
        assert selection.p_values[0][0] == 1
        assert selection.result.adequacy.verdict == "adequate"

    def test_phase_noise_selects_rank_two(self):
        """Test noiseless data of a phase-noise network reject rank 1 and pass at rank 2."""
        protocol = ProtocolBuilder.build_extended_protocol(2, trials=100_000)
        network = NetworkFixtures.noisy_network(2, seed=3, epsilon=0.05, noise_model="phase")
        data = MeasurementSimulator.simulate(network, protocol, mode="noiseless")

        selection = self.reconstructor.adequate_rank(data, protocol)

        assert selection.passed
        assert selection.rank == 2
        assert [rank for rank, _ in selection.p_values] == [1, 2]
        assert selection.p_values[0][1] < 0.05

    def test_significance_must_be_open_interval(self):
        """Test the significance level lies in (0, 1)."""
        protocol = ProtocolBuilder.build_pauli6_state_protocol(trials=100)
        data = MeasurementSimulator.simulate(mixed_state(), protocol, mode="noiseless")

        with pytest.raises(ValueError, match=r"Significance must lie in \(0, 1\)"):
            self.reconstructor.adequate_rank(data, protocol, significance=1.0)

    @pytest.mark.slow
    def test_sampled_phase_noise_ladder(self):
        """Test the ladder selects rank 2 for sampled four-mode phase-noise networks on most seeds."""
        protocol = ProtocolBuilder.build_extended_protocol(4, trials=1000)
        selected = []
        for seed in range(10):
            network = NetworkFixtures.noisy_network(4, seed=seed, epsilon=0.05, noise_model="phase")
            data = MeasurementSimulator.simulate(network, protocol, seed=100 + seed)
            selected.append(self.reconstructor.adequate_rank(data, protocol, max_rank=4).rank)

        assert sum(rank == 2 for rank in selected) >= 8

    def test_other_adequacy_errors_propagate(self):
        """Test only the no-degrees-of-freedom error ends the ladder early."""
        protocol = ProtocolBuilder.build_pauli6_state_protocol(trials=100)
        data = MeasurementSimulator.simulate(mixed_state(), protocol, mode="noiseless")

        with patch(
            "tomography_toolkit.statistics.AdequacyTester.chi_square_adequacy",
            side_effect=ValueError("Error: Expected counts must be positive on rows with observations"),
        ):
            with pytest.raises(ValueError, match="Expected counts must be positive"):
                self.reconstructor.adequate_rank(data, protocol)

    def test_ladder_stops_when_degrees_of_freedom_run_out(self):
        """Test the ladder returns the last tested rank once a larger rank has no degrees of freedom."""
        protocol = ProtocolBuilder.build_pauli6_state_protocol(trials=1000)
        data = MeasurementSimulator.simulate(mixed_state(0.6), protocol, seed=4)

        selection = self.reconstructor.adequate_rank(data, protocol)

        assert [rank for rank, _ in selection.p_values] == [1]
        assert selection.rank == 1
        assert not selection.passed
