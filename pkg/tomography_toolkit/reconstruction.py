"""Maximum-likelihood reconstruction over purified blocks and adequate-rank selection."""

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np
import scipy.linalg

from .core import (
    COMPUTATIONAL_BASIS,
    ChannelProcessor,
    ChiMatrix,
    ChoiState,
    DensityMatrix,
    KrausSet,
    PurifiedState,
    StateOperations,
    block_from_real_coordinates,
    hermitize,
    partial_trace,
    real_coordinates,
)
from .protocols import PROCESS_KIND, STATE_KIND, Protocol, hermitian_coordinates, hermitian_from_coordinates
from .simulator import MeasurementData
from .validators import (
    TOLERANCES,
    ConvergenceError,
    DegreesOfFreedomError,
    ModelViolationError,
    TomographyValidator,
)

if TYPE_CHECKING:
    from .statistics import AdequacyReport

WARM_START_MIXING = 0.01
DAMPING_LIMIT = 1.0 - 1e-9
LIKELIHOOD_SLACK = 1e-12
NEWTON_DIMENSION_LIMIT = 2048
NEWTON_CURVATURE_FLOOR = 1e-10


@dataclass(eq=False)
class TomographyResult:
    """Reconstructed purified block with its fit diagnostics."""

    estimate: PurifiedState
    kind: str
    log_likelihood: float
    iterations: int
    residual: float
    fitted_probabilities: np.ndarray
    adequacy: Optional["AdequacyReport"] = None
    likelihood_history: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def rank(self) -> int:
        return self.estimate.rank

    @property
    def dim(self) -> int:
        """Hilbert-space dimension s of the reconstructed state or channel."""
        if self.kind == PROCESS_KIND:
            return int(round(np.sqrt(self.estimate.dim)))
        return self.estimate.dim

    @property
    def density_matrix(self) -> DensityMatrix:
        return StateOperations.densify(self.estimate)

    @property
    def choi(self) -> ChoiState:
        if self.kind != PROCESS_KIND:
            raise ValueError("Error: Only process reconstructions have a Choi state")
        return ChoiState(self.density_matrix)

    def chi(self, basis: str = COMPUTATIONAL_BASIS) -> ChiMatrix:
        return ChannelProcessor.chi_from_choi(self.choi, basis)

    def kraus(self) -> KrausSet:
        return ChannelProcessor.kraus_from_chi(self.chi())

    @property
    def trace_preservation_residual(self) -> float:
        """||Tr_B(rho_chi) - I/s|| of the reconstructed Choi state."""
        marginal = ChannelProcessor.choi_marginal(self.choi)
        return float(np.linalg.norm(marginal - np.eye(self.dim) / self.dim))


@dataclass(eq=False)
class RankSelection:
    """Outcome of the adequate-rank ladder."""

    rank: int
    passed: bool
    result: TomographyResult
    p_values: List[Tuple[int, float]] = field(default_factory=list)


class LikelihoodReconstructor:
    """Damped fixed-point maximum-likelihood estimator over purified blocks c (d x r)."""

    def __init__(self, max_iterations: int = 10_000, damping: float = 0.5, tolerance: float = TOLERANCES.conv):
        if max_iterations < 1:
            raise ValueError(f"Error: max_iterations must be positive, got {max_iterations}")
        if not 0.0 <= damping < 1.0:
            raise ValueError(f"Error: Damping must lie in [0, 1), got {damping}")
        self.max_iterations = max_iterations
        self.damping = damping
        self.tolerance = tolerance

    def reconstruct_state(
        self, data: MeasurementData, protocol: Protocol, rank: int, initial: Optional[PurifiedState] = None
    ) -> TomographyResult:
        """Maximum-likelihood state estimate at the given rank."""
        if protocol.kind != STATE_KIND:
            raise ValueError("Error: reconstruct_state needs a state protocol")
        return self._reconstruct(data, protocol, rank, initial)

    def reconstruct_process(
        self, data: MeasurementData, protocol: Protocol, rank: int, initial: Optional[PurifiedState] = None
    ) -> TomographyResult:
        """Maximum-likelihood Choi-state estimate at the given rank, trace preserving."""
        if protocol.kind != PROCESS_KIND:
            raise ValueError("Error: reconstruct_process needs a process protocol")
        return self._reconstruct(data, protocol, rank, initial)

    def reconstruct(
        self, data: MeasurementData, protocol: Protocol, rank: int, initial: Optional[PurifiedState] = None
    ) -> TomographyResult:
        if protocol.kind == PROCESS_KIND:
            return self.reconstruct_process(data, protocol, rank, initial)
        return self.reconstruct_state(data, protocol, rank, initial)

    def adequate_rank(
        self, data: MeasurementData, protocol: Protocol, significance: float = 0.05, max_rank: Optional[int] = None
    ) -> RankSelection:
        """Smallest rank whose chi-square p-value reaches the significance level."""
        from .statistics import AdequacyTester

        TomographyValidator.validate_open_unit_interval(significance, "Significance")
        max_rank = max_rank or protocol.operator_dim
        TomographyValidator.validate_rank(max_rank, protocol.operator_dim)
        p_values: List[Tuple[int, float]] = []
        last: Optional[TomographyResult] = None
        for rank in range(1, max_rank + 1):
            result = self.reconstruct(data, protocol, rank)
            try:
                report = AdequacyTester.chi_square_adequacy(data, result, significance)
            except DegreesOfFreedomError:
                if last is None:
                    raise
                break
            result.adequacy = report
            p_values.append((rank, report.p_value))
            last = result
            if report.passed:
                return RankSelection(rank, True, result, p_values)
        return RankSelection(last.rank, False, last, p_values)

    @staticmethod
    def linear_inversion(data: MeasurementData, protocol: Protocol) -> np.ndarray:
        """Least-squares Hermitian estimate from frequencies, normalized to unit trace."""
        TomographyValidator.validate_same_dimension(len(data), len(protocol), "data rows and protocol rows")
        design = hermitian_coordinates(protocol.operator_stack())
        solution, *_ = np.linalg.lstsq(design, data.frequencies / protocol.scale, rcond=None)
        estimate = hermitian_from_coordinates(solution, protocol.operator_dim)
        trace = np.real(np.trace(estimate))
        return estimate / trace if trace > 0 else estimate

    def _warm_start(self, data: MeasurementData, protocol: Protocol, rank: int) -> np.ndarray:
        dim = protocol.operator_dim
        estimate = hermitize(self.linear_inversion(data, protocol))
        eigenvalues, eigenvectors = np.linalg.eigh(estimate)
        eigenvalues = np.clip(eigenvalues, 0.0, None)
        if eigenvalues.sum() <= 0:
            indices = np.arange(dim)[:, None] * np.arange(rank)[None, :]
            return np.exp(2j * np.pi * indices / (dim * rank)) / np.sqrt(dim * rank)
        projected = (eigenvectors * eigenvalues) @ eigenvectors.conj().T / eigenvalues.sum()
        mixed = (1.0 - WARM_START_MIXING) * projected + WARM_START_MIXING * np.eye(dim) / dim
        top_values, top_vectors = scipy.linalg.eigh(hermitize(mixed), subset_by_index=[dim - rank, dim - 1])
        block = top_vectors[:, ::-1] * np.sqrt(top_values[::-1])
        return block / np.linalg.norm(block)

    def _reconstruct(
        self, data: MeasurementData, protocol: Protocol, rank: int, initial: Optional[PurifiedState]
    ) -> TomographyResult:
        TomographyValidator.validate_same_dimension(len(data), len(protocol), "data rows and protocol rows")
        TomographyValidator.validate_rank(rank, protocol.operator_dim)
        problem = _LikelihoodProblem(data, protocol)

        if initial is not None:
            TomographyValidator.validate_same_dimension(
                initial.dim, protocol.operator_dim, "initial block and protocol"
            )
            block = initial.padded(rank) if initial.rank < rank else initial.block[:, :rank]
        else:
            block = self._warm_start(data, protocol, rank)
        block = problem.constrain(block)

        likelihood = problem.log_likelihood(block)
        history = [likelihood]
        alpha = self.damping
        residual = np.inf
        newton_guard = np.inf
        for iteration in range(1, self.max_iterations + 1):
            target = problem.fixed_point_map(block)
            residual = np.linalg.norm(target - block) / np.linalg.norm(block)
            if residual < self.tolerance:
                return problem.result(block, iteration, residual, history)

            # Newton polish while it keeps shrinking the residual
            if residual < newton_guard:
                step = problem.newton_step(block)
                if step is not None:
                    candidate = problem.constrain(block + step)
                    candidate_likelihood = problem.log_likelihood(candidate)
                    if problem.accepts(candidate_likelihood, likelihood):
                        block, likelihood = candidate, candidate_likelihood
                        history.append(likelihood)
                        newton_guard = residual
                        continue
            newton_guard = np.inf

            while True:
                candidate = problem.constrain((1.0 - alpha) * target + alpha * block)
                candidate_likelihood = problem.log_likelihood(candidate)
                if problem.accepts(candidate_likelihood, likelihood):
                    break
                alpha = (1.0 + alpha) / 2.0
                if alpha > DAMPING_LIMIT:
                    # no ascent step left: numerically stationary
                    return problem.result(block, iteration, residual, history)
            block, likelihood = candidate, candidate_likelihood
            history.append(likelihood)
            alpha /= 2.0

        raise ConvergenceError(
            f"Error: Reconstruction did not converge in {self.max_iterations} iterations (residual {residual:.3e})",
            iterations=self.max_iterations,
            residual=float(residual),
        )


def _hermitian_basis(dim: int) -> np.ndarray:
    """Orthonormal Hermitian basis of d x d matrices, shape (d^2, d, d)."""
    return np.array([hermitian_from_coordinates(unit, dim) for unit in np.eye(dim * dim)])


def _real_operator(operator: np.ndarray, rank: int) -> np.ndarray:
    """Real matrix of c -> operator c acting on z = (Re c, Im c) of a d x r block."""
    expanded = np.kron(operator, np.eye(rank))
    return np.block([[expanded.real, -expanded.imag], [expanded.imag, expanded.real]])


class _LikelihoodProblem:
    """Poisson log-likelihood of a protocol, its fixed-point map and Newton step."""

    def __init__(self, data: MeasurementData, protocol: Protocol):
        self.protocol = protocol
        self.counts = data.counts
        self.exposures = data.exposures
        self.is_process = protocol.kind == PROCESS_KIND
        self.information = protocol.weighted_operator(self.exposures)
        self._information_inverse = scipy.linalg.pinvh(hermitize(self.information))

    def intensities(self, block: np.ndarray) -> np.ndarray:
        return self.protocol.intensities(block)

    def _weights(self, intensities: np.ndarray) -> np.ndarray:
        violating = (self.counts > 0) & (intensities < TOLERANCES.intensity_floor)
        if np.any(violating):
            row = int(np.flatnonzero(violating)[0])
            raise ModelViolationError(
                f"Error: Row {row} has {self.counts[row]:g} counts but predicted intensity {intensities[row]:.3e}"
            )
        weights = np.zeros_like(intensities)
        positive = self.counts > 0
        weights[positive] = self.counts[positive] / intensities[positive]
        return weights

    def log_likelihood(self, block: np.ndarray) -> float:
        intensities = self.intensities(block)
        positive = self.counts > 0
        floor = np.maximum(intensities[positive], TOLERANCES.intensity_floor)
        return float(np.sum(self.counts[positive] * np.log(floor)) - np.sum(self.exposures * intensities))

    @staticmethod
    def accepts(candidate: float, current: float) -> bool:
        """Ascent test up to rounding of the likelihood value."""
        return candidate >= current - LIKELIHOOD_SLACK * max(1.0, abs(current))

    def fixed_point_map(self, block: np.ndarray) -> np.ndarray:
        """I^-1 J(c) c for states; the Lagrange-multiplier step plus trace projection for processes."""
        weights = self._weights(self.intensities(block))
        score = self.protocol.weighted_operator(weights)
        if not self.is_process:
            return self._information_inverse @ score @ block
        dim = self.protocol.dim
        # M = Tr_B[(J - I) c c^dagger] keeps Tr_B(c c^dagger) = I/s stationary
        multiplier = hermitize(partial_trace((score - self.information) @ block @ block.conj().T, (dim, dim), "A"))
        operator = hermitize(self.information + dim * np.kron(multiplier, np.eye(dim)))
        return self.constrain(scipy.linalg.pinvh(operator) @ score @ block)

    def newton_step(self, block: np.ndarray) -> Optional[np.ndarray]:
        """Newton ascent step over the concave directions orthogonal to the gauge orbit.

        For processes the step lies in the tangent space of Tr_B(c c^dagger) = I/s and uses the
        Hessian of the Lagrangian with least-squares multipliers. None when no concave direction exists.
        """
        dim, rank = block.shape
        if 2 * dim * rank > NEWTON_DIMENSION_LIMIT:
            return None
        intensities = self.intensities(block)
        gradient_operator = self.protocol.weighted_operator(self._weights(intensities)) - self.information
        observed = self.counts > 0
        gradients = self.protocol.row_gradients(block)[observed]
        directions = np.concatenate(
            [gradients.real.reshape(len(gradients), -1), gradients.imag.reshape(len(gradients), -1)], axis=1
        )
        curvature = self.counts[observed] / intensities[observed] ** 2
        hessian = 2 * _real_operator(gradient_operator, rank) - 4 * (directions.T * curvature) @ directions

        normals = [real_coordinates(block @ (1j * generator)) for generator in _hermitian_basis(rank)]
        if self.is_process:
            size = self.protocol.dim
            marginal_basis = _hermitian_basis(size)
            constraint = np.column_stack([real_coordinates(np.kron(e, np.eye(size)) @ block) for e in marginal_basis])
            multipliers, *_ = np.linalg.lstsq(constraint, real_coordinates(gradient_operator @ block), rcond=None)
            correction = np.kron(np.einsum("k,kab->ab", multipliers, marginal_basis), np.eye(size))
            gradient_operator = gradient_operator - correction
            hessian = hessian - 2 * _real_operator(correction, rank)
            normals.extend(constraint.T)
        gradient = 2 * real_coordinates(gradient_operator @ block)

        tangent = scipy.linalg.null_space(np.array(normals))
        if tangent.shape[1] == 0:
            return None
        reduced = tangent.T @ hessian @ tangent
        values, vectors = np.linalg.eigh((reduced + reduced.T) / 2)
        concave = values < -NEWTON_CURVATURE_FLOOR * np.max(np.abs(values))
        if not np.any(concave):
            return None
        components = vectors[:, concave].T @ (tangent.T @ gradient)
        step = tangent @ (vectors[:, concave] @ (components / -values[concave]))
        return block_from_real_coordinates(step, dim, rank)

    def constrain(self, block: np.ndarray) -> np.ndarray:
        """Trace projection ((s rho_A)^-1/2 x I) c for processes; likelihood-optimal scale for states."""
        if not self.is_process:
            expected = float(np.sum(self.exposures * self.intensities(block)))
            observed = float(np.sum(self.counts))
            if expected <= 0 or observed <= 0:
                return block
            return block * np.sqrt(observed / expected)
        dim = self.protocol.dim
        marginal = hermitize(partial_trace(block @ block.conj().T, (dim, dim), "A"))
        eigenvalues, eigenvectors = np.linalg.eigh(dim * marginal)
        if eigenvalues[0] <= TOLERANCES.intensity_floor:
            raise ModelViolationError("Error: Choi marginal is singular; cannot enforce trace preservation")
        inverse_root = (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.conj().T
        return np.kron(inverse_root, np.eye(dim)) @ block

    def result(self, block: np.ndarray, iterations: int, residual: float, history: List[float]) -> TomographyResult:
        estimate = PurifiedState.normalized(block)
        fitted = self.intensities(estimate.block)
        return TomographyResult(
            estimate=estimate,
            kind=self.protocol.kind,
            log_likelihood=self.log_likelihood(estimate.block),
            iterations=iterations,
            residual=float(residual),
            fitted_probabilities=np.clip(fitted, 0.0, None),
            likelihood_history=np.array(history),
        )
