"""State and process representations, conversions among them, and fidelities."""

import itertools
from dataclasses import dataclass, field
from functools import reduce
from typing import List, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .validators import TOLERANCES, TomographyValidator

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

COMPUTATIONAL_BASIS = "computational"
PAULI_BASIS = "pauli"


def rank_of(matrix: np.ndarray, tol: float = TOLERANCES.rank) -> int:
    """Count eigenvalues of a Hermitian matrix above tol relative to the largest one."""
    eigenvalues = np.linalg.eigvalsh((matrix + matrix.conj().T) / 2)
    largest = eigenvalues[-1]
    if largest <= 0:
        return 0
    return int(np.sum(eigenvalues > tol * largest))


def hermitize(matrix: np.ndarray) -> np.ndarray:
    """Return the Hermitian part of a matrix."""
    return (matrix + matrix.conj().T) / 2


def real_coordinates(block: np.ndarray) -> np.ndarray:
    """z = (Re c, Im c), row-major."""
    return np.concatenate([block.real.ravel(), block.imag.ravel()])


def block_from_real_coordinates(z: np.ndarray, dim: int, rank: int) -> np.ndarray:
    """Inverse of real_coordinates."""
    half = dim * rank
    return (z[:half] + 1j * z[half:]).reshape(dim, rank)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace state."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", TomographyValidator.validate_density_matrix(self.matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in descending order."""
        return np.linalg.eigvalsh(self.matrix)[::-1]

    @property
    def rank(self) -> int:
        return rank_of(self.matrix)

    @classmethod
    def from_vector(cls, vector: Sequence[complex]) -> "DensityMatrix":
        """Pure state |v><v| of a (normalized) state vector."""
        psi = np.asarray(vector, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)


@dataclass(frozen=True, eq=False)
class PurifiedState:
    """Complex s x r block c whose outer product c c^dagger is the density matrix."""

    block: np.ndarray

    def __post_init__(self):
        block = TomographyValidator.validate_finite(self.block, "purified block")
        if block.ndim == 1:
            block = block.reshape(-1, 1)
        if block.ndim != 2:
            raise ValueError(f"Error: Purified block must be 2-D, got shape {block.shape}")
        norm = np.linalg.norm(block)
        if abs(norm - 1.0) > TOLERANCES.norm:
            raise ValueError(f"Error: Purified block must have unit Frobenius norm, got {norm:.12g}")
        object.__setattr__(self, "block", block)

    @property
    def dim(self) -> int:
        return self.block.shape[0]

    @property
    def rank(self) -> int:
        return self.block.shape[1]

    @classmethod
    def normalized(cls, block: np.ndarray) -> "PurifiedState":
        """Build a purified state from an arbitrary nonzero block by normalizing it."""
        block = np.asarray(block, dtype=complex)
        norm = np.linalg.norm(block)
        if norm == 0:
            raise ValueError("Error: Cannot normalize a zero purified block")
        return cls(block / norm)

    def padded(self, rank: int) -> np.ndarray:
        """Block padded with zero columns up to the given rank."""
        if rank < self.rank:
            raise ValueError(f"Error: Cannot pad rank {self.rank} block down to rank {rank}")
        return np.hstack([self.block, np.zeros((self.dim, rank - self.rank), dtype=complex)])

    def real_coordinates(self) -> np.ndarray:
        """Doubled real coordinates z = (Re c, Im c), row-major."""
        return real_coordinates(self.block)


@dataclass(frozen=True, eq=False)
class KrausSet:
    """Operator-sum representation E_1..E_m of a channel on an s-dimensional space."""

    operators: Tuple[np.ndarray, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.operators) == 0:
            raise ValueError("Error: A Kraus set needs at least one operator")
        operators = tuple(TomographyValidator.validate_square(op, "Kraus operator") for op in self.operators)
        dim = operators[0].shape[0]
        for op in operators:
            TomographyValidator.validate_same_dimension(op.shape[0], dim, "Kraus operators")
        object.__setattr__(self, "operators", operators)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def __len__(self) -> int:
        return len(self.operators)

    @classmethod
    def from_unitary(cls, unitary: np.ndarray) -> "KrausSet":
        return cls((TomographyValidator.validate_unitary(unitary),))


@dataclass(frozen=True, eq=False)
class ChiMatrix:
    """Process matrix chi of size s^2 x s^2 with trace s, in the computational or Pauli-product basis."""

    matrix: np.ndarray
    basis: str = COMPUTATIONAL_BASIS

    def __post_init__(self):
        matrix = TomographyValidator.validate_square(self.matrix, "chi-matrix")
        if self.basis not in (COMPUTATIONAL_BASIS, PAULI_BASIS):
            raise ValueError(f"Error: Unknown chi-matrix basis '{self.basis}'")
        dim = _isqrt_exact(matrix.shape[0], "chi-matrix size")
        TomographyValidator.validate_hermitian(matrix, name="chi-matrix")
        matrix = hermitize(matrix)
        TomographyValidator.validate_psd(matrix, tol=TOLERANCES.psd * dim, name="chi-matrix")
        TomographyValidator.validate_unit_trace(matrix, expected=float(dim))
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return _isqrt_exact(self.matrix.shape[0], "chi-matrix size")


@dataclass(frozen=True, eq=False)
class ChoiState:
    """Choi state rho_chi = (I x E)(|Phi><Phi|) of a channel on an s-dimensional space."""

    state: DensityMatrix

    def __post_init__(self):
        _isqrt_exact(self.state.dim, "Choi state dimension")

    @property
    def dim(self) -> int:
        return _isqrt_exact(self.state.dim, "Choi state dimension")

    @property
    def matrix(self) -> np.ndarray:
        return self.state.matrix

    @property
    def rank(self) -> int:
        return self.state.rank

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "ChoiState":
        return cls(DensityMatrix(matrix))


QuantumProcess = Union[KrausSet, ChiMatrix, ChoiState]


def _isqrt_exact(value: int, what: str) -> int:
    root = int(round(np.sqrt(value)))
    if root * root != value:
        raise ValueError(f"Error: {what} must be a perfect square, got {value}")
    return root


def partial_trace(matrix: np.ndarray, dims: Tuple[int, int], keep: str) -> np.ndarray:
    """Reduced matrix of a bipartite operator on A x B; keep is 'A' or 'B'."""
    dim_a, dim_b = dims
    tensor = np.asarray(matrix).reshape(dim_a, dim_b, dim_a, dim_b)
    if keep == "A":
        return np.einsum("abcb->ac", tensor)
    if keep == "B":
        return np.einsum("abad->bd", tensor)
    raise ValueError(f"Error: keep must be 'A' or 'B', got '{keep}'")


def pauli_product_basis(dim: int) -> List[np.ndarray]:
    """Orthonormal Pauli-product operator basis ordered (I, X, Y, Z)^k, each element scaled by 1/sqrt(dim)."""
    qubits = int(round(np.log2(dim)))
    if 2**qubits != dim:
        raise ValueError(f"Error: Pauli-product basis needs a power-of-two dimension, got {dim}")
    labels = itertools.product("IXYZ", repeat=qubits)
    return [reduce(np.kron, [PAULI_MATRICES[p] for p in label], np.eye(1, dtype=complex)) / np.sqrt(dim)
            for label in labels]


def pauli_labels(dim: int) -> List[str]:
    """Labels of the Pauli-product basis in the order of pauli_product_basis."""
    qubits = int(round(np.log2(dim)))
    return ["".join(label) for label in itertools.product("IXYZ", repeat=qubits)]


def _pauli_transfer(dim: int) -> np.ndarray:
    # columns are vec(Q_m^T), so chi_computational = T chi_pauli T^dagger
    return np.column_stack([q.T.ravel() for q in pauli_product_basis(dim)])


class StateOperations:
    """Handles state-level operations: unitary and Kraus evolution, purification."""

    @staticmethod
    def apply_unitary(rho: DensityMatrix, unitary: np.ndarray) -> DensityMatrix:
        """Return U rho U^dagger."""
        unitary = TomographyValidator.validate_unitary(unitary)
        TomographyValidator.validate_same_dimension(unitary.shape[0], rho.dim, "unitary and state")
        return DensityMatrix(hermitize(unitary @ rho.matrix @ unitary.conj().T))

    @staticmethod
    def apply_kraus(rho: DensityMatrix, kraus: KrausSet) -> DensityMatrix:
        """Return sum_k E_k rho E_k^dagger for a trace-preserving Kraus set."""
        TomographyValidator.validate_same_dimension(kraus.dim, rho.dim, "Kraus operators and state")
        TomographyValidator.validate_trace_preserving(ChannelProcessor.verify_trace_preserving(kraus))
        output = sum(op @ rho.matrix @ op.conj().T for op in kraus.operators)
        return DensityMatrix(hermitize(output))

    @staticmethod
    def maximally_entangled_state(dim: int) -> np.ndarray:
        """|Phi> = (1/sqrt(s)) sum_j |j> x |j>, first factor A, row-major."""
        if dim < 2:
            raise ValueError(f"Error: Maximally entangled state needs dimension >= 2, got {dim}")
        return np.eye(dim, dtype=complex).ravel() / np.sqrt(dim)

    @staticmethod
    def purify(rho: DensityMatrix, rank: int) -> PurifiedState:
        """Purified block c (s x r) with c c^dagger = rho, built from the top-r eigenpairs."""
        if rank < rho.rank:
            raise ValueError(f"Error: Purification rank {rank} is below the state rank {rho.rank}")
        eigenvalues, eigenvectors = np.linalg.eigh(rho.matrix)
        order = np.argsort(eigenvalues)[::-1]
        eigenvalues = np.clip(eigenvalues[order], 0.0, None)
        eigenvectors = eigenvectors[:, order]
        kept = min(rank, rho.dim)
        block = eigenvectors[:, :kept] * np.sqrt(eigenvalues[:kept])
        if rank > kept:
            block = np.hstack([block, np.zeros((rho.dim, rank - kept), dtype=complex)])
        return PurifiedState.normalized(block)

    @staticmethod
    def densify(purified: PurifiedState) -> DensityMatrix:
        """Return c c^dagger / <c|c>."""
        block = purified.block
        rho = block @ block.conj().T
        return DensityMatrix(hermitize(rho) / np.real(np.trace(rho)))


class ChannelProcessor:
    """Handles conversions between Kraus, Choi and chi representations of channels."""

    @staticmethod
    def verify_trace_preserving(kraus: KrausSet) -> float:
        """Return ||sum_k E_k^dagger E_k - I|| (Frobenius)."""
        total = sum(op.conj().T @ op for op in kraus.operators)
        return float(np.linalg.norm(total - np.eye(kraus.dim)))

    @staticmethod
    def dilate_to_unitary(kraus: KrausSet) -> np.ndarray:
        """Complete the stacked block-column (E_1; ...; E_m) to an ms x ms unitary."""
        dim = kraus.dim
        column = np.vstack(kraus.operators)
        residual = np.linalg.norm(column.conj().T @ column - np.eye(dim))
        if residual > TOLERANCES.tp:
            raise ValueError(f"Error: Stacked Kraus operators are not an isometry (residual {residual:.3e})")
        q_full, _ = scipy.linalg.qr(column)
        return np.hstack([column, q_full[:, dim:]])

    @staticmethod
    def to_kraus(process: QuantumProcess) -> KrausSet:
        """Kraus representation of any supported process form."""
        if isinstance(process, KrausSet):
            return process
        if isinstance(process, ChiMatrix):
            return ChannelProcessor.kraus_from_chi(process)
        if isinstance(process, ChoiState):
            return ChannelProcessor.kraus_from_chi(ChannelProcessor.chi_from_choi(process))
        raise ValueError(f"Error: Unsupported process type {type(process).__name__}")

    @staticmethod
    def choi_of_process(process: QuantumProcess) -> ChoiState:
        """Apply the process to subsystem B of |Phi><Phi| (identity on A)."""
        if isinstance(process, ChoiState):
            return process
        if isinstance(process, ChiMatrix):
            chi = ChannelProcessor.chi_change_basis(process, COMPUTATIONAL_BASIS)
            return ChoiState.from_matrix(chi.matrix / chi.dim)
        TomographyValidator.validate_trace_preserving(ChannelProcessor.verify_trace_preserving(process))
        dim = process.dim
        vectors = np.array([op.T.ravel() for op in process.operators]) / np.sqrt(dim)
        return ChoiState.from_matrix(hermitize(vectors.T @ vectors.conj()))

    @staticmethod
    def chi_from_choi(choi: ChoiState, basis: str = COMPUTATIONAL_BASIS) -> ChiMatrix:
        """chi = s * rho_chi, optionally expressed in the Pauli-product basis."""
        chi = ChiMatrix(choi.dim * choi.matrix)
        return ChannelProcessor.chi_change_basis(chi, basis)

    @staticmethod
    def chi_change_basis(chi: ChiMatrix, basis: str) -> ChiMatrix:
        """Re-express chi in another operator basis (unitary change of basis)."""
        if chi.basis == basis:
            return chi
        transfer = _pauli_transfer(chi.dim)
        if basis == PAULI_BASIS:
            return ChiMatrix(transfer.conj().T @ chi.matrix @ transfer, PAULI_BASIS)
        if basis == COMPUTATIONAL_BASIS:
            return ChiMatrix(transfer @ chi.matrix @ transfer.conj().T, COMPUTATIONAL_BASIS)
        raise ValueError(f"Error: Unknown chi-matrix basis '{basis}'")

    @staticmethod
    def kraus_from_chi(chi: ChiMatrix) -> KrausSet:
        """Kraus operators from the scaled eigenvectors of chi."""
        chi = ChannelProcessor.chi_change_basis(chi, COMPUTATIONAL_BASIS)
        dim = chi.dim
        eigenvalues, eigenvectors = np.linalg.eigh(chi.matrix)
        if eigenvalues[0] < -TOLERANCES.psd * dim:
            raise ValueError(f"Error: Chi-matrix is not completely positive (eigenvalue {eigenvalues[0]:.3e})")
        keep = eigenvalues > TOLERANCES.rank * eigenvalues[-1]
        operators = [
            np.sqrt(value) * vector.reshape(dim, dim).T
            for value, vector in zip(eigenvalues[keep][::-1], eigenvectors[:, keep].T[::-1])
        ]
        return KrausSet(tuple(operators))

    @staticmethod
    def choi_marginal(choi: ChoiState) -> np.ndarray:
        """Reduced state on A (output factor B traced out); equals I/s for trace-preserving channels."""
        return partial_trace(choi.matrix, (choi.dim, choi.dim), keep="A")

    @staticmethod
    def choi_to_process_action(choi: ChoiState, rho: DensityMatrix) -> DensityMatrix:
        """Channel output s * Tr_A[(rho^T x I) rho_chi]."""
        dim = choi.dim
        TomographyValidator.validate_same_dimension(dim, rho.dim, "Choi state and input state")
        product = np.kron(rho.matrix.T, np.eye(dim)) @ choi.matrix
        return DensityMatrix(hermitize(dim * partial_trace(product, (dim, dim), keep="B")))


class FidelityCalculator:
    """Handles Uhlmann fidelity computations."""

    @staticmethod
    def _factor(matrix: np.ndarray) -> np.ndarray:
        eigenvalues, eigenvectors = np.linalg.eigh(matrix)
        eigenvalues = np.clip(eigenvalues, 0.0, None)
        keep = eigenvalues > TOLERANCES.rank * max(eigenvalues[-1], 0.0)
        return eigenvectors[:, keep] * np.sqrt(eigenvalues[keep])

    @staticmethod
    def fidelity(rho0: DensityMatrix, rho: DensityMatrix) -> float:
        """F = (Tr sqrt(rho0^1/2 rho rho0^1/2))^2."""
        TomographyValidator.validate_same_dimension(rho0.dim, rho.dim, "density matrices")
        # Tr sqrt(sqrt(rho0) rho sqrt(rho0)) is the nuclear norm of f0^dagger f for rho = f f^dagger
        f0 = FidelityCalculator._factor(rho0.matrix)
        f1 = FidelityCalculator._factor(rho.matrix)
        if f0.shape[1] == 0 or f1.shape[1] == 0:
            return 0.0
        overlap = np.sum(scipy.linalg.svdvals(f0.conj().T @ f1))
        return float(np.clip(overlap**2, 0.0, 1.0))

    @staticmethod
    def fidelity_purified(c0: PurifiedState, c: PurifiedState) -> float:
        """max over gauge unitaries of |<c0|c V>|^2 = (sum of singular values of c0^dagger c)^2."""
        TomographyValidator.validate_same_dimension(c0.dim, c.dim, "purified states")
        rank = max(c0.rank, c.rank)
        overlap = np.sum(scipy.linalg.svdvals(c0.padded(rank).conj().T @ c.padded(rank)))
        return float(np.clip(overlap**2, 0.0, 1.0))

    @staticmethod
    def process_fidelity(reference: QuantumProcess, process: QuantumProcess) -> float:
        """Fidelity between the Choi states of two processes."""
        choi0 = ChannelProcessor.choi_of_process(reference)
        choi1 = ChannelProcessor.choi_of_process(process)
        return FidelityCalculator.fidelity(choi0.state, choi1.state)
