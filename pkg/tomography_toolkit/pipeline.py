"""Main tomography pipeline orchestrator."""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .core import (
    PAULI_BASIS,
    ChannelProcessor,
    ChoiState,
    DensityMatrix,
    FidelityCalculator,
    KrausSet,
    StateOperations,
    pauli_labels,
)
from .exporters import CountsExporter, JSONExporter
from .parsers import CountsParser, ProtocolParser, ReferenceParser
from .protocols import PROCESS_KIND, CompletenessReport, Protocol, ProtocolBuilder, ProtocolMatrixBuilder
from .reconstruction import LikelihoodReconstructor, TomographyResult
from .simulator import NOISELESS_MODE, SAMPLED_MODE, MeasurementData, MeasurementSimulator, NetworkFixtures
from .statistics import (
    AdequacyReport,
    AdequacyTester,
    InformationAnalyzer,
    LossAnalyzer,
    adjusted_fidelity,
    coefficient_report,
)
from .validators import TomographyValidator

PROTOCOL_CHOICES = ("pauli6", "pauli6-process", "set1", "restricted", "extended", "file")
STATE_FIXTURES = ("zero", "plus", "maximally-mixed", "random-pure")
NETWORK_FIXTURES = ("unitary-network", "noisy-network")
STOCHASTIC_COMMANDS = ("simulate", "loss")


@dataclass
class RunConfig:
    """Every setting of one command run, collected from the command line."""

    command: str
    protocol: str = "pauli6"
    protocol_file: Optional[str] = None
    modes: int = 4
    trials: float = 1000
    counts: Optional[str] = None
    output: Optional[str] = None
    seed: Optional[int] = None
    rank: Union[int, str] = "auto"
    significance: float = 0.05
    confidence: float = 0.95
    fixture: Optional[str] = None
    reference: Optional[str] = None
    epsilon: float = 0.05
    noise_model: str = "phase"
    mode: str = SAMPLED_MODE
    ungrouped: str = "poisson"
    max_iterations: int = 10_000

    def validate(self) -> None:
        if self.protocol not in PROTOCOL_CHOICES:
            raise ValueError(f"Error: Unknown protocol '{self.protocol}'. Choose from {PROTOCOL_CHOICES}")
        if self.protocol == "file" and not self.protocol_file:
            raise ValueError("Error: --protocol file requires --protocol-file")
        if self.command in STOCHASTIC_COMMANDS and self.seed is None:
            raise ValueError(f"Error: The {self.command} command requires --seed")
        if self.trials <= 0:
            raise ValueError(f"Error: Trials must be positive, got {self.trials}")
        if self.rank != "auto" and int(self.rank) < 1:
            raise ValueError(f"Error: Rank must be 'auto' or a positive integer, got {self.rank}")
        if self.mode not in (SAMPLED_MODE, NOISELESS_MODE):
            raise ValueError(f"Error: Mode must be 'sampled' or 'noiseless', got '{self.mode}'")
        TomographyValidator.validate_open_unit_interval(self.significance, "Significance")
        TomographyValidator.validate_open_unit_interval(self.confidence, "Confidence")


class TomographyPipeline:
    """Main pipeline class that orchestrates each command."""

    def __init__(self, config: RunConfig):
        config.validate()
        self.config = config
        self.reconstructor = LikelihoodReconstructor(max_iterations=config.max_iterations)

    def build_protocol(self) -> Protocol:
        config = self.config
        print(f"📋 Building {config.protocol} protocol...")
        if config.protocol == "file":
            protocol = ProtocolParser.parse_protocol(config.protocol_file)
        elif config.protocol == "pauli6":
            protocol = ProtocolBuilder.build_pauli6_state_protocol(trials=config.trials)
        elif config.protocol == "pauli6-process":
            protocol = ProtocolBuilder.build_pauli6_process_protocol(trials=config.trials)
        elif config.protocol == "set1":
            protocol = ProtocolBuilder.build_set1_protocol(config.modes, trials=config.trials)
        elif config.protocol == "restricted":
            protocol = ProtocolBuilder.build_restricted_protocol(config.modes, trials=config.trials)
        else:
            protocol = ProtocolBuilder.build_extended_protocol(config.modes, trials=config.trials)
        print(f"   └── {protocol.kind} protocol, dimension {protocol.dim}, {len(protocol)} rows")
        return protocol

    def check(self) -> Tuple[CompletenessReport, Dict[str, Any]]:
        """Completeness verdict of the configured protocol."""
        protocol = self.build_protocol()
        print("📐 Building measurement matrix...")
        protocol_matrix = ProtocolMatrixBuilder.build_B_matrix(protocol)
        report = ProtocolMatrixBuilder.completeness_report(protocol_matrix)
        print(f"   └── {report.row_count} rows x {report.column_dimension} columns")
        print(f"   └── Rank {report.rank} of {report.column_dimension}: {report.verdict}")
        payload = {
            "rows": report.row_count,
            "column_dimension": report.column_dimension,
            "rank": report.rank,
            "verdict": report.verdict,
            "singular_values": report.singular_values,
        }
        self._write("check", payload)
        return report, payload

    def load_truth(self, protocol: Protocol) -> Tuple[Union[DensityMatrix, KrausSet, ChoiState], str]:
        """Ground truth from --reference or a named fixture."""
        config = self.config
        if config.reference:
            return ReferenceParser.parse_reference(config.reference), Path(config.reference).name
        fixture = config.fixture or ("zero" if protocol.kind != PROCESS_KIND else "identity")
        if protocol.kind != PROCESS_KIND:
            return self._state_fixture(fixture, protocol.dim), fixture
        if fixture in NETWORK_FIXTURES:
            if fixture == "unitary-network":
                unitary = NetworkFixtures.random_unitary_network(protocol.dim, config.seed)
                return KrausSet.from_unitary(unitary), fixture
            network = NetworkFixtures.noisy_network(protocol.dim, config.seed, config.epsilon, config.noise_model)
            return network, fixture
        return NetworkFixtures.gate_fixture(fixture, config.epsilon), fixture

    def _state_fixture(self, name: str, dim: int) -> DensityMatrix:
        if name == "zero":
            return DensityMatrix.from_vector(np.eye(dim)[0])
        if name == "plus":
            return DensityMatrix.from_vector(np.ones(dim))
        if name == "maximally-mixed":
            return DensityMatrix.maximally_mixed(dim)
        if name == "random-pure":
            rng = np.random.default_rng(self.config.seed)
            return DensityMatrix.from_vector(rng.standard_normal(dim) + 1j * rng.standard_normal(dim))
        raise ValueError(f"Error: Unknown state fixture '{name}'. Choose from {STATE_FIXTURES}")

    def simulate(self) -> MeasurementData:
        """Counts file plus a ground-truth sidecar."""
        config = self.config
        TomographyValidator.validate_required_params(output=config.output)
        protocol = self.build_protocol()
        truth, label = self.load_truth(protocol)
        print(f"🎲 Simulating {config.mode} counts for {label} (seed {config.seed})...")
        data = MeasurementSimulator.simulate(truth, protocol, config.seed, config.mode, config.ungrouped)
        print(f"   └── Total sample size: {data.total_sample_size:g}")

        print("💾 Writing counts and ground truth...")
        counts_path = CountsExporter.write_counts(data, config.output)
        if isinstance(truth, DensityMatrix):
            matrix = truth.matrix
        else:
            matrix = ChannelProcessor.choi_of_process(truth).matrix
        truth_path = JSONExporter.write_truth(
            CountsExporter.truth_path(config.output), protocol.kind, protocol.dim, label, matrix
        )
        print(f"   └── {counts_path}")
        print(f"   └── {truth_path}")
        return data

    def load_data(self) -> Tuple[Protocol, MeasurementData]:
        TomographyValidator.validate_required_params(counts=self.config.counts)
        protocol = self.build_protocol()
        print(f"📥 Reading counts from {self.config.counts}...")
        data = CountsParser.parse_counts(self.config.counts, protocol)
        print(f"   └── {len(data)} rows, total sample size {data.total_sample_size:g}")
        return protocol.with_exposures(data.exposures), data

    def fit(self, protocol: Protocol, data: MeasurementData) -> TomographyResult:
        """Reconstruct at the configured rank, or run the adequate-rank ladder."""
        config = self.config
        if config.rank == "auto":
            print("🪜 Selecting adequate rank...")
            selection = self.reconstructor.adequate_rank(data, protocol, config.significance)
            for rank, p_value in selection.p_values:
                print(f"   └── rank {rank}: p-value {p_value:.4g}")
            if not selection.passed:
                print(f"⚠️  No rank passed at significance {config.significance}; using rank {selection.rank}")
            result = selection.result
        else:
            rank = int(config.rank)
            print(f"🧮 Reconstructing at rank {rank}...")
            result = self.reconstructor.reconstruct(data, protocol, rank)
            try:
                result.adequacy = AdequacyTester.chi_square_adequacy(data, result, config.significance)
            except ValueError as e:
                print(f"   └── Adequacy not available: {str(e)}")
        print(f"✅ Converged in {result.iterations} iterations (residual {result.residual:.2e})")
        return result

    def reconstruct(self) -> Dict[str, Any]:
        protocol, data = self.load_data()
        result = self.fit(protocol, data)
        payload = {**self.result_payload(result), "sample_size": data.total_sample_size}
        self._write("reconstruct", payload)
        return payload

    def adequacy(self) -> Dict[str, Any]:
        protocol, data = self.load_data()
        result = self.fit(protocol, data)
        report = result.adequacy or AdequacyTester.chi_square_adequacy(data, result, self.config.significance)
        print(f"📊 chi2 = {report.statistic:.6g}, dof = {report.dof}, p-value = {report.p_value:.4g}")
        print(f"   └── {report.verdict}")
        payload = {"rank": result.rank, **self.adequacy_payload(report)}
        self._write("adequacy", payload)
        return payload

    def fidelity(self) -> Dict[str, Any]:
        TomographyValidator.validate_required_params(reference=self.config.reference)
        protocol, data = self.load_data()
        result = self.fit(protocol, data)
        reference = ReferenceParser.parse_reference(self.config.reference)
        if protocol.kind == PROCESS_KIND:
            truth = ChannelProcessor.choi_of_process(reference).state
        else:
            if not isinstance(reference, DensityMatrix):
                raise ValueError("Error: A state protocol needs a state reference")
            truth = reference
        plain = FidelityCalculator.fidelity(truth, result.density_matrix)
        print(f"🎯 Fidelity: {plain:.10f}")

        rank = max(truth.rank, result.rank)
        adjusted = None
        try:
            c_true = StateOperations.purify(truth, rank)
            information = InformationAnalyzer.information_matrix(c_true, protocol)
            adjusted = adjusted_fidelity(c_true, result.estimate, information)
            print(f"   └── Adjusted fidelity: {adjusted:.10f}")
            measurable = f"{information.informative_count} of {len(information.eigenvalues)}"
            print(f"   └── Measurable directions: {measurable}")
        except ValueError as e:
            print(f"   └── Adjusted fidelity not available: {str(e)}")
        payload = {"rank": result.rank, "fidelity": plain, "adjusted_fidelity": adjusted}
        self._write("fidelity", payload)
        return payload

    def loss(self) -> Dict[str, Any]:
        config = self.config
        protocol, data = self.load_data()
        result = self.fit(protocol, data)
        print("📈 Computing loss-of-fidelity distribution at the estimate...")
        information = InformationAnalyzer.information_matrix(result.estimate, protocol)
        distribution = LossAnalyzer.loss_coefficients(information, allow_incomplete=True)
        if distribution.incomplete:
            print("⚠️  Protocol is incomplete for this estimate; unmeasurable directions are ignored")
        payload = {"rank": result.rank, **coefficient_report(distribution, config.confidence, config.seed)}
        print(f"   └── Mean loss {distribution.mean:.4g}, L = {distribution.normalized_loss:.4g}")
        bound = payload["fidelity_bound"]
        print(f"   └── Fidelity is at least {bound:.6f} with confidence {config.confidence:g}")
        self._write("loss", payload)
        return payload

    @staticmethod
    def adequacy_payload(report: AdequacyReport) -> Dict[str, Any]:
        return {
            "statistic": report.statistic,
            "dof": report.dof,
            "p_value": report.p_value,
            "significance": report.significance,
            "verdict": report.verdict,
        }

    def result_payload(self, result: TomographyResult) -> Dict[str, Any]:
        payload: Dict[str, Any] = {
            "kind": result.kind,
            "dimension": result.dim,
            "rank": result.rank,
            "log_likelihood": result.log_likelihood,
            "iterations": result.iterations,
            "residual": result.residual,
            "purified_block": result.estimate.block,
        }
        if result.kind == PROCESS_KIND:
            payload["choi"] = result.choi.matrix
            payload["chi"] = result.chi().matrix
            if result.dim & (result.dim - 1) == 0:
                payload["chi_pauli"] = result.chi(PAULI_BASIS).matrix
                payload["chi_pauli_labels"] = pauli_labels(result.dim)
            payload["kraus"] = list(result.kraus().operators)
            payload["trace_preservation_residual"] = result.trace_preservation_residual
        else:
            payload["density_matrix"] = result.density_matrix.matrix
        if result.adequacy is not None:
            payload["adequacy"] = self.adequacy_payload(result.adequacy)
        return payload

    def _write(self, command: str, payload: Dict[str, Any]) -> None:
        if self.config.output:
            print(f"💾 Writing {command} result...")
            path = JSONExporter.write_result(command, payload, self.config.output)
            print(f"   └── {path}")
