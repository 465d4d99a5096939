"""Input validation utilities and numerical tolerances."""

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances shared by every module."""

    herm: float = 1e-8
    trace: float = 1e-8
    tp: float = 1e-8
    unit: float = 1e-8
    norm: float = 1e-8
    psd: float = 1e-10
    rank: float = 1e-10
    b_rank: float = 1e-10
    measurable: float = 1e-8
    conv: float = 1e-9
    intensity_floor: float = 1e-12
    probability: float = 1e-10


TOLERANCES = Tolerances()


class TomographyNumericalError(RuntimeError):
    """Raised when a computation fails for numerical rather than input reasons."""


class ConvergenceError(TomographyNumericalError):
    """Raised when an iterative estimator hits its iteration limit."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class ModelViolationError(TomographyNumericalError):
    """Raised when a row with a positive count has (numerically) zero predicted intensity."""


class DegreesOfFreedomError(ValueError):
    """Raised when a fitted model leaves no degrees of freedom for the chi-square test."""


class TomographyValidator:
    """Handles validation of matrices, protocols and run parameters."""

    @staticmethod
    def validate_finite(matrix: np.ndarray, name: str = "matrix") -> np.ndarray:
        """Validate a numeric array has no NaN/Inf entries and return it as a complex array."""
        array = np.asarray(matrix, dtype=complex)
        if not np.all(np.isfinite(array)):
            raise ValueError(f"Error: {name} contains NaN or infinite entries")
        return array

    @staticmethod
    def validate_square(matrix: np.ndarray, name: str = "matrix") -> np.ndarray:
        """Validate a 2-D square matrix."""
        array = TomographyValidator.validate_finite(matrix, name)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise ValueError(f"Error: {name} must be a square matrix, got shape {array.shape}")
        return array

    @staticmethod
    def validate_same_dimension(first: int, second: int, what: str = "operands") -> None:
        """Validate that two dimensions agree."""
        if first != second:
            raise ValueError(f"Error: Dimension mismatch between {what}: {first} != {second}")

    @staticmethod
    def validate_hermitian(matrix: np.ndarray, tol: Optional[float] = None, name: str = "matrix") -> None:
        """Validate Hermiticity within tolerance (Frobenius norm of the anti-Hermitian part)."""
        tol = TOLERANCES.herm if tol is None else tol
        deviation = np.linalg.norm(matrix - matrix.conj().T)
        if deviation > tol * max(1.0, np.linalg.norm(matrix)):
            raise ValueError(f"Error: {name} is not Hermitian (deviation {deviation:.3e})")

    @staticmethod
    def validate_psd(matrix: np.ndarray, tol: Optional[float] = None, name: str = "matrix") -> np.ndarray:
        """Validate positive semidefiniteness and return the eigenvalues (ascending)."""
        tol = TOLERANCES.psd if tol is None else tol
        eigenvalues = np.linalg.eigvalsh((matrix + matrix.conj().T) / 2)
        if eigenvalues[0] < -tol:
            raise ValueError(f"Error: {name} is not positive semidefinite (eigenvalue {eigenvalues[0]:.3e})")
        return eigenvalues

    @staticmethod
    def validate_unit_trace(matrix: np.ndarray, expected: float = 1.0, tol: Optional[float] = None) -> None:
        """Validate the trace equals the expected value."""
        tol = TOLERANCES.trace if tol is None else tol
        trace = np.trace(matrix)
        if abs(trace - expected) > tol * max(1.0, expected):
            raise ValueError(f"Error: Trace must be {expected:g}, got {trace.real:.12g}")

    @staticmethod
    def validate_density_matrix(matrix: np.ndarray) -> np.ndarray:
        """Validate a density matrix (Hermitian, PSD, unit trace) and return it Hermitized."""
        array = TomographyValidator.validate_square(matrix, "density matrix")
        TomographyValidator.validate_hermitian(array, name="density matrix")
        hermitized = (array + array.conj().T) / 2
        TomographyValidator.validate_psd(hermitized, name="density matrix")
        TomographyValidator.validate_unit_trace(hermitized)
        return hermitized

    @staticmethod
    def validate_unitary(matrix: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
        """Validate unitarity within tolerance."""
        tol = TOLERANCES.unit if tol is None else tol
        array = TomographyValidator.validate_square(matrix, "unitary")
        residual = np.linalg.norm(array.conj().T @ array - np.eye(array.shape[0]))
        if residual > tol:
            raise ValueError(f"Error: Matrix is not unitary (residual {residual:.3e})")
        return array

    @staticmethod
    def validate_trace_preserving(residual: float, tol: Optional[float] = None) -> None:
        """Validate a trace-preservation residual."""
        tol = TOLERANCES.tp if tol is None else tol
        if residual > tol:
            raise ValueError(f"Error: Kraus operators are not trace preserving (residual {residual:.3e})")

    @staticmethod
    def validate_probabilities(probabilities: np.ndarray) -> np.ndarray:
        """Validate probabilities lie in [0, 1] within tolerance and clip the roundoff."""
        values = np.asarray(probabilities, dtype=float)
        tol = TOLERANCES.probability
        if np.any(values < -tol) or np.any(values > 1 + tol):
            raise ValueError("Error: Probabilities must lie in [0, 1]")
        return np.clip(values, 0.0, 1.0)

    @staticmethod
    def validate_rank(rank: int, dim: int) -> None:
        """Validate a purification rank."""
        if rank < 1:
            raise ValueError(f"Error: Rank must be at least 1, got {rank}")
        if rank > dim:
            raise ValueError(f"Error: Rank {rank} exceeds the dimension {dim}")

    @staticmethod
    def validate_open_unit_interval(value: float, name: str) -> None:
        """Validate a significance or confidence level."""
        if not 0.0 < value < 1.0:
            raise ValueError(f"Error: {name} must lie in (0, 1), got {value}")

    @staticmethod
    def validate_mode_count(modes: int) -> None:
        """Validate an optical network mode count."""
        if modes < 2:
            raise ValueError(f"Error: Mode count must be at least 2, got {modes}")

    @staticmethod
    def validate_required_params(**kwargs) -> None:
        """Validate all required parameters are provided."""
        for param, value in kwargs.items():
            if value is None:
                raise ValueError(f"Error: Missing required parameter: {param}")

    @staticmethod
    def validate_group_sums(operators: Iterable[np.ndarray], group: str, tol: Optional[float] = None) -> None:
        """Validate a declared-complete group sums to a multiple of the identity."""
        tol = TOLERANCES.herm if tol is None else tol
        total = sum(operators)
        dim = total.shape[0]
        multiple = np.trace(total) / dim
        if np.linalg.norm(total - multiple * np.eye(dim)) > tol * max(1.0, abs(multiple)):
            raise ValueError(f"Error: Group '{group}' does not sum to a multiple of the identity")
