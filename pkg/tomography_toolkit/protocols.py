"""Measurement protocols, the measurement matrix B, and the completeness verdict."""

import itertools
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .validators import TOLERANCES, TomographyValidator

STATE_KIND = "state"
PROCESS_KIND = "process"

RESTRICTED_PHASES = (0.0, np.pi / 2)
EXTENDED_PHASES = (0.0, np.pi / 2, np.pi, 3 * np.pi / 2)


def hermitian_coordinates(matrix: np.ndarray) -> np.ndarray:
    """Isometric real coordinates of Hermitian matrices: diagonal, sqrt(2) Re and sqrt(2) Im of the upper triangle.

    Accepts a single d x d matrix or a stack (..., d, d).
    """
    matrix = np.asarray(matrix)
    dim = matrix.shape[-1]
    upper = np.triu_indices(dim, 1)
    diagonal = np.real(np.diagonal(matrix, axis1=-2, axis2=-1))
    off_diagonal = matrix[..., upper[0], upper[1]]
    return np.concatenate(
        [diagonal, np.sqrt(2) * off_diagonal.real, np.sqrt(2) * off_diagonal.imag], axis=-1
    )


def hermitian_from_coordinates(coordinates: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of hermitian_coordinates for a single matrix."""
    upper = np.triu_indices(dim, 1)
    count = len(upper[0])
    matrix = np.zeros((dim, dim), dtype=complex)
    matrix[np.diag_indices(dim)] = coordinates[:dim]
    values = (coordinates[dim:dim + count] + 1j * coordinates[dim + count:]) / np.sqrt(2)
    matrix[upper] = values
    matrix[upper[1], upper[0]] = values.conj()
    return matrix


def total_trials(exposures: Sequence[float], groups: Sequence[Optional[str]]) -> float:
    """Sum of trials with each multinomial group contributing its trials once."""
    seen = set()
    total = 0.0
    for exposure, group in zip(exposures, groups):
        if group is None:
            total += exposure
        elif group not in seen:
            seen.add(group)
            total += exposure
    return float(total)


def _as_density(state: np.ndarray) -> np.ndarray:
    array = np.asarray(state, dtype=complex)
    if array.ndim == 1:
        psi = array / np.linalg.norm(array)
        return np.outer(psi, psi.conj())
    return array


@dataclass(eq=False)
class MeasurementOperator:
    """One protocol row: an effect with its exposure and normalization group.

    State rows carry ``effect``; process rows carry ``input_state`` and ``output_effect`` and the
    row operator is the tensor combination input^T x output.
    """

    exposure: float = 1.0
    group: Optional[str] = None
    effect: Optional[np.ndarray] = None
    input_state: Optional[np.ndarray] = None
    output_effect: Optional[np.ndarray] = None
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.exposure < 0:
            raise ValueError(f"Error: Exposure must be nonnegative, got {self.exposure}")
        if self.effect is None and (self.input_state is None or self.output_effect is None):
            raise ValueError("Error: A row needs either an effect or an input state and output effect")
        for name in ("effect", "input_state", "output_effect"):
            value = getattr(self, name)
            if value is None:
                continue
            value = TomographyValidator.validate_square(value, name)
            TomographyValidator.validate_hermitian(value, name=name)
            TomographyValidator.validate_psd(value, name=name)
            setattr(self, name, value)

    @property
    def is_process_row(self) -> bool:
        return self.effect is None

    @property
    def dim(self) -> int:
        return (self.effect if self.effect is not None else self.output_effect).shape[0]

    @property
    def operator(self) -> np.ndarray:
        """Row operator: the effect, or input^T x output for process rows."""
        if self.effect is not None:
            return self.effect
        return np.kron(self.input_state.T, self.output_effect)


@dataclass(eq=False)
class Protocol:
    """Ordered list of measurement rows on a state or a process."""

    dim: int
    kind: str
    rows: List[MeasurementOperator]
    complete_groups: FrozenSet[str] = frozenset()

    def __post_init__(self):
        if self.kind not in (STATE_KIND, PROCESS_KIND):
            raise ValueError(f"Error: Protocol kind must be 'state' or 'process', got '{self.kind}'")
        for row in self.rows:
            TomographyValidator.validate_same_dimension(row.dim, self.dim, "protocol rows")
            if row.is_process_row != (self.kind == PROCESS_KIND):
                raise ValueError(f"Error: Row type does not match protocol kind '{self.kind}'")
            if row.is_process_row:
                TomographyValidator.validate_same_dimension(row.input_state.shape[0], self.dim, "input states")
        self.complete_groups = frozenset(self.complete_groups)
        for group in self.complete_groups:
            members = [row for row in self.rows if row.group == group]
            if not members:
                raise ValueError(f"Error: Complete group '{group}' has no rows")
            effects = [row.output_effect if row.is_process_row else row.effect for row in members]
            TomographyValidator.validate_group_sums(effects, group)
        self._stack = None

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def operator_dim(self) -> int:
        """Dimension d of the estimated object: s for states, s^2 for Choi states."""
        return self.dim if self.kind == STATE_KIND else self.dim**2

    @property
    def scale(self) -> float:
        """Factor turning Tr[Lambda sigma] of a unit-trace sigma into a probability."""
        return 1.0 if self.kind == STATE_KIND else float(self.dim)

    @property
    def exposures(self) -> np.ndarray:
        return np.array([row.exposure for row in self.rows], dtype=float)

    @property
    def groups(self) -> List[Optional[str]]:
        return [row.group for row in self.rows]

    @property
    def multinomial_groups(self) -> List[Optional[str]]:
        """Per-row group id when the row belongs to a complete group, else None."""
        return [row.group if row.group in self.complete_groups else None for row in self.rows]

    @property
    def total_trials(self) -> float:
        """Sample size n: trials of each complete group counted once plus every ungrouped row."""
        return total_trials(self.exposures, self.multinomial_groups)

    def group_indices(self) -> Dict[str, np.ndarray]:
        """Row indices of each declared-complete group, in first-appearance order."""
        indices: Dict[str, List[int]] = {}
        for index, row in enumerate(self.rows):
            if row.group in self.complete_groups:
                indices.setdefault(row.group, []).append(index)
        return {group: np.array(members) for group, members in indices.items()}

    def operator_stack(self) -> np.ndarray:
        """Row operators stacked as an (m, d, d) complex array (cached)."""
        if self._stack is None:
            self._stack = np.array([row.operator for row in self.rows])
        return self._stack

    def expectations(self, sigma: np.ndarray) -> np.ndarray:
        """scale * Tr[Lambda_j sigma] for every row."""
        return self.scale * np.real(np.einsum("jab,ba->j", self.operator_stack(), sigma))

    def intensities(self, block: np.ndarray) -> np.ndarray:
        """scale * <c|(Lambda_j x I_r)|c> for a purified block c (d x r)."""
        return self.scale * np.real(np.einsum("jab,bk,ak->j", self.operator_stack(), block, block.conj()))

    def weighted_operator(self, weights: np.ndarray) -> np.ndarray:
        """scale * sum_j w_j Lambda_j."""
        return self.scale * np.einsum("j,jab->ab", np.asarray(weights, dtype=float), self.operator_stack())

    def row_gradients(self, block: np.ndarray) -> np.ndarray:
        """scale * Lambda_j c for every row, shape (m, d, r)."""
        return self.scale * np.einsum("jab,bk->jak", self.operator_stack(), block)

    def with_exposures(self, exposures: Sequence[float]) -> "Protocol":
        """Copy of the protocol with new per-row exposures."""
        exposures = np.asarray(exposures, dtype=float)
        TomographyValidator.validate_same_dimension(len(exposures), len(self.rows), "exposures and rows")
        rows = [
            MeasurementOperator(
                exposure=float(t),
                group=row.group,
                effect=row.effect,
                input_state=row.input_state,
                output_effect=row.output_effect,
                provenance=dict(row.provenance),
            )
            for row, t in zip(self.rows, exposures)
        ]
        return Protocol(self.dim, self.kind, rows, self.complete_groups)


@dataclass(eq=False)
class ProtocolMatrix:
    """Measurement matrix B (one row per protocol row, Hermitian real coordinates) and its spectrum."""

    matrix: np.ndarray
    singular_values: np.ndarray
    rank: int
    column_dimension: int


@dataclass(eq=False)
class CompletenessReport:
    """Completeness verdict: complete iff rank(B) equals the column dimension."""

    singular_values: np.ndarray
    rank: int
    column_dimension: int
    row_count: int

    @property
    def is_complete(self) -> bool:
        return self.rank == self.column_dimension

    @property
    def verdict(self) -> str:
        return "complete" if self.is_complete else "incomplete"


class ProtocolBuilder:
    """Builds the Pauli and optical-chip protocol families."""

    @staticmethod
    def pauli6_states() -> Tuple[List[np.ndarray], List[str]]:
        """The six Pauli eigenvectors ordered +Z, -Z, +X, -X, +Y, -Y with their labels."""
        s = 1 / np.sqrt(2)
        vectors = [
            np.array([1, 0], dtype=complex),
            np.array([0, 1], dtype=complex),
            np.array([s, s], dtype=complex),
            np.array([s, -s], dtype=complex),
            np.array([s, 1j * s], dtype=complex),
            np.array([s, -1j * s], dtype=complex),
        ]
        return vectors, ["+Z", "-Z", "+X", "-X", "+Y", "-Y"]

    @staticmethod
    def build_pauli6_state_protocol(dim: int = 2, trials: float = 1.0) -> Protocol:
        """Six rank-1 Pauli projectors in three complementary two-outcome groups."""
        if dim != 2:
            raise ValueError(f"Error: The Pauli six-state protocol is defined for qubits, got dimension {dim}")
        vectors, labels = ProtocolBuilder.pauli6_states()
        rows = [
            MeasurementOperator(
                exposure=trials,
                group=label[1],
                effect=_as_density(vector),
                provenance={"index": index, "label": label},
            )
            for index, (vector, label) in enumerate(zip(vectors, labels))
        ]
        return Protocol(2, STATE_KIND, rows, frozenset({"Z", "X", "Y"}))

    @staticmethod
    def build_process_protocol(
        inputs: Sequence[np.ndarray],
        outputs: Sequence[np.ndarray],
        output_groups: Optional[Sequence[Optional[str]]] = None,
        complete_output_groups: FrozenSet[str] = frozenset(),
        trials: float = 1.0,
        input_meta: Optional[Sequence[Dict[str, Any]]] = None,
        output_meta: Optional[Sequence[Dict[str, Any]]] = None,
    ) -> Protocol:
        """One row per (input, output) pair, input-major.

        Rows of input i whose outputs share output group g form the row group "in<i>:<g>"; it is
        declared complete when g is listed in complete_output_groups.
        """
        if not inputs or not outputs:
            raise ValueError("Error: A process protocol needs at least one input and one output")
        input_states = [_as_density(state) for state in inputs]
        output_effects = [_as_density(effect) for effect in outputs]
        dim = input_states[0].shape[0]
        for matrix in input_states + output_effects:
            TomographyValidator.validate_same_dimension(matrix.shape[0], dim, "protocol states")
        output_groups = list(output_groups) if output_groups is not None else [None] * len(outputs)
        TomographyValidator.validate_same_dimension(len(output_groups), len(outputs), "outputs and output groups")
        input_meta = input_meta or [{"label": f"in{i}"} for i in range(len(inputs))]
        output_meta = output_meta or [{"label": f"out{o}"} for o in range(len(outputs))]

        rows = []
        complete_groups = set()
        for i, input_state in enumerate(input_states):
            for o, output_effect in enumerate(output_effects):
                group = None
                if output_groups[o] is not None:
                    group = f"in{i}:{output_groups[o]}"
                    if output_groups[o] in complete_output_groups:
                        complete_groups.add(group)
                rows.append(
                    MeasurementOperator(
                        exposure=trials,
                        group=group,
                        input_state=input_state,
                        output_effect=output_effect,
                        provenance={
                            "input_index": i,
                            "output_index": o,
                            "input": dict(input_meta[i]),
                            "output": dict(output_meta[o]),
                        },
                    )
                )
        return Protocol(dim, PROCESS_KIND, rows, frozenset(complete_groups))

    @staticmethod
    def build_pauli6_process_protocol(trials: float = 1.0) -> Protocol:
        """36 rows: six Pauli input states times six Pauli output projectors."""
        vectors, labels = ProtocolBuilder.pauli6_states()
        meta = [{"label": label} for label in labels]
        return ProtocolBuilder.build_process_protocol(
            vectors,
            vectors,
            output_groups=[label[1] for label in labels],
            complete_output_groups=frozenset({"Z", "X", "Y"}),
            trials=trials,
            input_meta=meta,
            output_meta=meta,
        )

    @staticmethod
    def _set1(modes: int) -> Tuple[List[np.ndarray], List[Dict[str, Any]]]:
        TomographyValidator.validate_mode_count(modes)
        vectors = list(np.eye(modes, dtype=complex))
        meta = [{"label": f"|{j + 1}>", "modes": [j + 1]} for j in range(modes)]
        return vectors, meta

    @staticmethod
    def _set2(
        modes: int, phases: Sequence[float], restrict_j_to_1: bool
    ) -> Tuple[List[np.ndarray], List[Dict[str, Any]]]:
        TomographyValidator.validate_mode_count(modes)
        if len(phases) == 0:
            raise ValueError("Error: Set 2 needs at least one phase")
        for phi in phases:
            if not 0.0 <= phi < 2 * np.pi:
                raise ValueError(f"Error: Phase must lie in [0, 2*pi), got {phi}")
        first_modes = [0] if restrict_j_to_1 else range(modes - 1)
        vectors, meta = [], []
        for j in first_modes:
            for k in range(j + 1, modes):
                for phi in phases:
                    vector = np.zeros(modes, dtype=complex)
                    vector[j] = np.exp(-1j * phi / 2) / np.sqrt(2)
                    vector[k] = np.exp(1j * phi / 2) / np.sqrt(2)
                    vectors.append(vector)
                    meta.append({"label": f"|{j + 1},{k + 1};{phi:.6f}>", "modes": [j + 1, k + 1], "phase": phi})
        return vectors, meta

    @staticmethod
    def build_optical_set1(modes: int) -> List[np.ndarray]:
        """Set 1: the photon in mode j, j = 1..N."""
        return ProtocolBuilder._set1(modes)[0]

    @staticmethod
    def build_optical_set2(modes: int, phases: Sequence[float], restrict_j_to_1: bool = False) -> List[np.ndarray]:
        """Set 2: (exp(-i phi/2)|j> + exp(i phi/2)|k>)/sqrt(2) for pairs j < k and each phase."""
        return ProtocolBuilder._set2(modes, phases, restrict_j_to_1)[0]

    @staticmethod
    def build_set1_protocol(modes: int, trials: float = 1.0) -> Protocol:
        """Set 1 at input and output: transition probabilities only."""
        vectors, meta = ProtocolBuilder._set1(modes)
        return ProtocolBuilder.build_process_protocol(
            vectors,
            vectors,
            output_groups=["modes"] * modes,
            complete_output_groups=frozenset({"modes"}),
            trials=trials,
            input_meta=meta,
            output_meta=meta,
        )

    @staticmethod
    def build_restricted_protocol(modes: int, trials: float = 1.0) -> Protocol:
        """Inputs Set 1 + Set 2 (j = 1, phases 0 and pi/2); outputs Set 1."""
        set1, set1_meta = ProtocolBuilder._set1(modes)
        set2, set2_meta = ProtocolBuilder._set2(modes, RESTRICTED_PHASES, restrict_j_to_1=True)
        return ProtocolBuilder.build_process_protocol(
            set1 + set2,
            set1,
            output_groups=["modes"] * modes,
            complete_output_groups=frozenset({"modes"}),
            trials=trials,
            input_meta=set1_meta + set2_meta,
            output_meta=set1_meta,
        )

    @staticmethod
    def build_extended_protocol(modes: int, trials: float = 1.0) -> Protocol:
        """Set 1 + Set 2 (all pairs, four phases) at both input and output."""
        set1, set1_meta = ProtocolBuilder._set1(modes)
        set2, set2_meta = ProtocolBuilder._set2(modes, EXTENDED_PHASES, restrict_j_to_1=False)
        states = set1 + set2
        meta = set1_meta + set2_meta
        return ProtocolBuilder.build_process_protocol(
            states,
            states,
            output_groups=["modes"] * modes + [None] * len(set2),
            complete_output_groups=frozenset({"modes"}),
            trials=trials,
            input_meta=meta,
            output_meta=meta,
        )


class ProtocolMatrixBuilder:
    """Assembles the measurement matrix B and decides completeness."""

    @staticmethod
    def build_B_matrix(protocol: Protocol) -> ProtocolMatrix:
        """B rows are the Hermitian real coordinates of the row operators."""
        if len(protocol) == 0:
            raise ValueError("Error: Cannot build a measurement matrix for an empty protocol")
        columns = protocol.operator_dim**2
        matrix = np.empty((len(protocol), columns))
        for index, row in enumerate(protocol.rows):
            matrix[index] = hermitian_coordinates(row.operator)
        singular_values = scipy.linalg.svdvals(matrix)
        largest = singular_values[0] if singular_values.size else 0.0
        rank = int(np.sum(singular_values > TOLERANCES.b_rank * largest)) if largest > 0 else 0
        return ProtocolMatrix(matrix, singular_values, rank, columns)

    @staticmethod
    def completeness_report(protocol_matrix: ProtocolMatrix) -> CompletenessReport:
        return CompletenessReport(
            singular_values=protocol_matrix.singular_values,
            rank=protocol_matrix.rank,
            column_dimension=protocol_matrix.column_dimension,
            row_count=protocol_matrix.matrix.shape[0],
        )


def pairwise_products(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """All products a*b sorted in descending order (Kronecker spectrum of two protocols)."""
    return np.sort([a * b for a, b in itertools.product(first, second)])[::-1]
