"""Forward model, seeded count generation, and network fixtures."""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.stats import unitary_group

from .core import (
    ChannelProcessor,
    ChiMatrix,
    ChoiState,
    DensityMatrix,
    KrausSet,
    PAULI_MATRICES,
    PurifiedState,
    StateOperations,
)
from .protocols import PROCESS_KIND, STATE_KIND, Protocol, total_trials
from .validators import TomographyValidator

SAMPLED_MODE = "sampled"
NOISELESS_MODE = "noiseless"
UNGROUPED_MODES = ("poisson", "binomial")
NOISE_MODELS = ("depolarizing", "phase")
GATE_FIXTURES = ("identity", "z", "noisy-z", "depolarized-z")


@dataclass(eq=False)
class MeasurementData:
    """Counts and trials per protocol row."""

    counts: np.ndarray
    exposures: np.ndarray
    groups: Optional[List[Optional[str]]] = None
    protocol: Optional[Protocol] = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        self.exposures = np.asarray(self.exposures, dtype=float)
        TomographyValidator.validate_same_dimension(len(self.counts), len(self.exposures), "counts and exposures")
        if np.any(self.counts < 0) or not np.all(np.isfinite(self.counts)):
            raise ValueError("Error: Counts must be finite and nonnegative")
        if np.any(self.exposures < 0):
            raise ValueError("Error: Trials must be nonnegative")
        if self.protocol is not None:
            TomographyValidator.validate_same_dimension(
                len(self.counts), len(self.protocol), "data rows and protocol rows"
            )
            if self.groups is None:
                self.groups = self.protocol.multinomial_groups
        if self.groups is None:
            self.groups = [None] * len(self.counts)
        for group, indices in self.group_indices().items():
            trials = self.exposures[indices]
            if np.ptp(trials) > 0:
                raise ValueError(f"Error: Rows of group '{group}' must share the same number of trials")
            total = self.counts[indices].sum()
            if abs(total - trials[0]) > 1e-8 * max(1.0, trials[0]):
                raise ValueError(f"Error: Counts of group '{group}' sum to {total:g}, expected {trials[0]:g}")

    def __len__(self) -> int:
        return len(self.counts)

    def group_indices(self) -> Dict[str, np.ndarray]:
        indices: Dict[str, List[int]] = {}
        for index, group in enumerate(self.groups):
            if group is not None:
                indices.setdefault(group, []).append(index)
        return {group: np.array(members) for group, members in indices.items()}

    @property
    def total_sample_size(self) -> float:
        return total_trials(self.exposures, self.groups)

    @property
    def frequencies(self) -> np.ndarray:
        """k_j / t_j, zero for rows without trials."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.exposures > 0, self.counts / np.where(self.exposures > 0, self.exposures, 1), 0.0)


class MeasurementSimulator:
    """Predicts outcome probabilities and draws seeded counts."""

    @staticmethod
    def predict_probabilities(
        obj: Union[DensityMatrix, PurifiedState, KrausSet, ChiMatrix, ChoiState], protocol: Protocol
    ) -> np.ndarray:
        """Born-rule probabilities of every protocol row."""
        if isinstance(obj, PurifiedState):
            obj = StateOperations.densify(obj)
        if isinstance(obj, DensityMatrix):
            if protocol.kind != STATE_KIND:
                raise ValueError("Error: A density matrix needs a state protocol")
            TomographyValidator.validate_same_dimension(obj.dim, protocol.dim, "state and protocol")
            sigma = obj.matrix
        else:
            if protocol.kind != PROCESS_KIND:
                raise ValueError("Error: A process needs a process protocol")
            choi = ChannelProcessor.choi_of_process(obj)
            TomographyValidator.validate_same_dimension(choi.dim, protocol.dim, "process and protocol")
            sigma = choi.matrix
        return TomographyValidator.validate_probabilities(protocol.expectations(sigma))

    @staticmethod
    def expected_counts(
        probabilities: Sequence[float], exposures: Sequence[float], groups: Optional[List[Optional[str]]] = None
    ) -> MeasurementData:
        """Noiseless data: counts equal t_j * p_j exactly."""
        probabilities = TomographyValidator.validate_probabilities(probabilities)
        exposures = np.asarray(exposures, dtype=float)
        return MeasurementData(probabilities * exposures, exposures, groups=groups)

    @staticmethod
    def sample_counts(
        probabilities: Sequence[float],
        exposures: Sequence[float],
        seed: int,
        groups: Optional[List[Optional[str]]] = None,
        ungrouped_mode: str = "poisson",
    ) -> MeasurementData:
        """Multinomial draws per group, independent Poisson or binomial draws per ungrouped row.

        Every row owns the generator spawned at its index; a group draws from its first row's generator,
        so results depend only on (seed, row index).
        """
        TomographyValidator.validate_required_params(seed=seed)
        if ungrouped_mode not in UNGROUPED_MODES:
            raise ValueError(f"Error: Ungrouped sampling mode must be one of {UNGROUPED_MODES}, got '{ungrouped_mode}'")
        probabilities = TomographyValidator.validate_probabilities(probabilities)
        exposures = np.asarray(exposures, dtype=float)
        TomographyValidator.validate_same_dimension(len(probabilities), len(exposures), "probabilities and exposures")
        groups = list(groups) if groups is not None else [None] * len(probabilities)
        streams = np.random.SeedSequence(seed).spawn(len(probabilities))
        counts = np.zeros(len(probabilities))

        members: Dict[str, List[int]] = {}
        for index, group in enumerate(groups):
            if group is not None:
                members.setdefault(group, []).append(index)
                continue
            rng = np.random.default_rng(streams[index])
            if ungrouped_mode == "poisson":
                counts[index] = rng.poisson(exposures[index] * probabilities[index])
            else:
                counts[index] = rng.binomial(_integer_trials(exposures[index]), probabilities[index])

        for group, indices in members.items():
            group_probabilities = probabilities[indices]
            total = group_probabilities.sum()
            if abs(total - 1.0) > 1e-8:
                raise ValueError(f"Error: Probabilities of group '{group}' sum to {total:.12g}, expected 1")
            rng = np.random.default_rng(streams[indices[0]])
            trials = _integer_trials(exposures[indices[0]])
            counts[indices] = rng.multinomial(trials, group_probabilities / total)

        return MeasurementData(counts, exposures, groups=groups)

    @staticmethod
    def simulate(
        obj: Union[DensityMatrix, PurifiedState, KrausSet, ChiMatrix, ChoiState],
        protocol: Protocol,
        seed: Optional[int] = None,
        mode: str = SAMPLED_MODE,
        ungrouped_mode: str = "poisson",
    ) -> MeasurementData:
        """Predict and then draw (or take the expectation of) counts for a protocol."""
        probabilities = MeasurementSimulator.predict_probabilities(obj, protocol)
        if mode == NOISELESS_MODE:
            data = MeasurementSimulator.expected_counts(probabilities, protocol.exposures, protocol.multinomial_groups)
        elif mode == SAMPLED_MODE:
            data = MeasurementSimulator.sample_counts(
                probabilities, protocol.exposures, seed, protocol.multinomial_groups, ungrouped_mode
            )
        else:
            raise ValueError(f"Error: Simulation mode must be 'sampled' or 'noiseless', got '{mode}'")
        data.protocol = protocol
        return data


def _integer_trials(value: float) -> int:
    if value != int(value):
        raise ValueError(f"Error: Multinomial and binomial sampling need integer trials, got {value}")
    return int(value)


class NetworkFixtures:
    """Haar-random networks, noisy networks and qubit gate fixtures."""

    @staticmethod
    def random_unitary_network(modes: int, seed: int) -> np.ndarray:
        """Haar-distributed N x N unitary."""
        TomographyValidator.validate_mode_count(modes)
        TomographyValidator.validate_required_params(seed=seed)
        return unitary_group.rvs(modes, random_state=np.random.default_rng(seed))

    @staticmethod
    def clock_matrix(modes: int) -> np.ndarray:
        """diag(1, w, w^2, ...) with w = exp(2 pi i / N)."""
        return np.diag(np.exp(2j * np.pi * np.arange(modes) / modes))

    @staticmethod
    def noisy_network(modes: int, seed: int, epsilon: float = 0.05, noise_model: str = "phase") -> KrausSet:
        """Haar network mixed with noise of weight epsilon.

        depolarizing: (1 - eps) U.U^dagger + eps Tr(.) I/N.
        phase: Kraus pair sqrt(1 - eps) U and sqrt(eps) U Z_N; the Choi state has rank 2 for 0 < eps < 1.
        """
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"Error: Noise weight must lie in [0, 1], got {epsilon}")
        if noise_model not in NOISE_MODELS:
            raise ValueError(f"Error: Noise model must be one of {NOISE_MODELS}, got '{noise_model}'")
        unitary = NetworkFixtures.random_unitary_network(modes, seed)
        operators = [np.sqrt(1.0 - epsilon) * unitary] if epsilon < 1.0 else []
        if epsilon > 0.0:
            if noise_model == "phase":
                operators.append(np.sqrt(epsilon) * unitary @ NetworkFixtures.clock_matrix(modes))
            else:
                identity = np.eye(modes, dtype=complex)
                operators.extend(
                    np.sqrt(epsilon / modes) * np.outer(identity[a], identity[b])
                    for a in range(modes)
                    for b in range(modes)
                )
        return KrausSet(tuple(operators))

    @staticmethod
    def gate_fixture(name: str, epsilon: float = 0.05) -> KrausSet:
        """Qubit gates: identity, z, noisy-z {sqrt(1-eps) Z, sqrt(eps) I}, depolarized-z."""
        identity, pauli_z = PAULI_MATRICES["I"], PAULI_MATRICES["Z"]
        if name == "identity":
            return KrausSet((identity,))
        if name == "z":
            return KrausSet((pauli_z,))
        if name == "noisy-z":
            return KrausSet((np.sqrt(1.0 - epsilon) * pauli_z, np.sqrt(epsilon) * identity))
        if name == "depolarized-z":
            operators = [np.sqrt(1.0 - 3 * epsilon / 4) * pauli_z]
            operators.extend(np.sqrt(epsilon / 4) * pauli_z @ PAULI_MATRICES[label] for label in ("X", "Y"))
            operators.append(np.sqrt(epsilon / 4) * identity)
            return KrausSet(tuple(operators))
        raise ValueError(f"Error: Unknown gate fixture '{name}'. Choose from {GATE_FIXTURES}")
