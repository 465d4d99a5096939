"""Information matrix, loss-of-fidelity distribution, chi-square adequacy and adjusted fidelity."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.stats import chi2

from .core import PurifiedState, real_coordinates
from .protocols import Protocol
from .reconstruction import TomographyResult
from .simulator import MeasurementData
from .validators import TOLERANCES, DegreesOfFreedomError, TomographyValidator

DEFAULT_LOSS_DRAWS = 100_000
_DRAW_CHUNK = 10_000


def j_max(dim: int, rank: int) -> int:
    """Degrees of freedom (2d - r) r - 1 of a rank-r purified state in dimension d."""
    TomographyValidator.validate_rank(rank, dim)
    return (2 * dim - rank) * rank - 1


@dataclass(eq=False)
class InformationMatrix:
    """Information matrix over z = (Re c, Im c) with its gauge directions and non-gauge spectrum."""

    matrix: np.ndarray
    block: np.ndarray
    gauge_basis: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sample_size: float

    @property
    def dim(self) -> int:
        return self.block.shape[0]

    @property
    def rank(self) -> int:
        return self.block.shape[1]

    @property
    def real_dimension(self) -> int:
        return 2 * self.dim * self.rank

    @property
    def measurable_mask(self) -> np.ndarray:
        largest = self.eigenvalues[0] if self.eigenvalues.size else 0.0
        if largest <= 0:
            return np.zeros(self.eigenvalues.shape, dtype=bool)
        return self.eigenvalues > TOLERANCES.measurable * largest

    @property
    def informative_count(self) -> int:
        return int(np.sum(self.measurable_mask))

    @property
    def is_complete(self) -> bool:
        return self.informative_count == len(self.eigenvalues)

    def measurable_basis(self) -> np.ndarray:
        """Orthonormal columns spanning the measurable subspace in z coordinates."""
        return self.eigenvectors[:, self.measurable_mask]

    def unmeasurable_basis(self) -> np.ndarray:
        """Orthonormal non-gauge directions carrying no information."""
        return self.eigenvectors[:, ~self.measurable_mask]


@dataclass(eq=False)
class LossDistribution:
    """Weights d_j of 1 - F = sum_j d_j xi_j^2."""

    coefficients: np.ndarray
    sample_size: float = 0.0
    incomplete: bool = False

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if np.any(self.coefficients < 0):
            raise ValueError("Error: Loss coefficients must be nonnegative")

    @property
    def j_max(self) -> int:
        return len(self.coefficients)

    @property
    def mean(self) -> float:
        return float(np.sum(self.coefficients))

    @property
    def variance(self) -> float:
        return float(2 * np.sum(self.coefficients**2))

    @property
    def normalized_loss(self) -> float:
        """L = n * sum_j d_j, independent of the sample size."""
        return float(self.sample_size * self.mean)


@dataclass(eq=False)
class AdequacyReport:
    """Pearson chi-square goodness of fit."""

    statistic: float
    dof: int
    p_value: float
    significance: float = 0.05

    @property
    def passed(self) -> bool:
        return self.p_value >= self.significance

    @property
    def verdict(self) -> str:
        return "adequate" if self.passed else "inadequate"


class InformationAnalyzer:
    """Builds the information matrix of a purified state under a protocol."""

    @staticmethod
    def gauge_basis(block: np.ndarray) -> np.ndarray:
        """Orthonormal span of the gauge tangents c (iG) over Hermitian G, plus the radial direction c."""
        rank = block.shape[1]
        tangents = [real_coordinates(block)]
        for a in range(rank):
            for b in range(rank):
                generator = np.zeros((rank, rank), dtype=complex)
                if a == b:
                    generator[a, a] = 1.0
                elif a < b:
                    generator[a, b] = generator[b, a] = 1.0
                else:
                    generator[a, b], generator[b, a] = 1j, -1j
                tangents.append(real_coordinates(block @ (1j * generator)))
        return scipy.linalg.orth(np.column_stack(tangents))

    @staticmethod
    def information_matrix(purified: PurifiedState, protocol: Protocol) -> InformationMatrix:
        """H = sum_j (t_j / lambda_j) 2 u_j u_j^T with u_j = (Re, Im) of Lambda_j c, gauge directions split off.

        H is half the Fisher information over z (whose row terms are (t_j / lambda_j) g_j g_j^T with
        g_j = 2 u_j the intensity gradient), so that the loss coefficients are d_j = 1 / (2 h_j).
        """
        TomographyValidator.validate_same_dimension(purified.dim, protocol.operator_dim, "purified state and protocol")
        block = purified.block
        exposures = protocol.exposures
        intensities = protocol.intensities(block)
        active = exposures > 0
        if np.any(intensities[active] < TOLERANCES.intensity_floor):
            row = int(np.flatnonzero(active & (intensities < TOLERANCES.intensity_floor))[0])
            raise ValueError(f"Error: Degenerate intensity {intensities[row]:.3e} at row {row}")
        gradients = protocol.row_gradients(block)[active]
        directions = np.concatenate(
            [gradients.real.reshape(len(gradients), -1), gradients.imag.reshape(len(gradients), -1)], axis=1
        )
        weights = 2 * exposures[active] / intensities[active]
        matrix = (directions.T * weights) @ directions
        matrix = (matrix + matrix.T) / 2

        gauge = InformationAnalyzer.gauge_basis(block)
        complement = scipy.linalg.null_space(gauge.T)
        eigenvalues, vectors = np.linalg.eigh(complement.T @ matrix @ complement)
        order = np.argsort(eigenvalues)[::-1]
        return InformationMatrix(
            matrix=matrix,
            block=block,
            gauge_basis=gauge,
            eigenvalues=np.clip(eigenvalues[order], 0.0, None),
            eigenvectors=complement @ vectors[:, order],
            sample_size=protocol.total_trials,
        )


class LossAnalyzer:
    """Loss-of-fidelity coefficients and their generalized chi-squared law."""

    @staticmethod
    def j_max(dim: int, rank: int) -> int:
        return j_max(dim, rank)

    @staticmethod
    def loss_coefficients(information: InformationMatrix, allow_incomplete: bool = False) -> LossDistribution:
        """d_j = 1 / (2 h_j) over the non-gauge eigenvalues h_j."""
        mask = information.measurable_mask
        if not np.all(mask):
            if not allow_incomplete:
                raise ValueError(
                    f"Error: {int(np.sum(~mask))} unmeasurable directions; the protocol is incomplete for this state"
                )
        coefficients = 1.0 / (2.0 * information.eigenvalues[mask])
        return LossDistribution(
            coefficients=np.sort(coefficients)[::-1],
            sample_size=information.sample_size,
            incomplete=not np.all(mask),
        )

    @staticmethod
    def loss_samples(distribution: LossDistribution, size: int = DEFAULT_LOSS_DRAWS, seed: int = 0) -> np.ndarray:
        """Seeded draws of sum_j d_j xi_j^2 with standard normal xi_j."""
        if size < 1:
            raise ValueError(f"Error: Number of draws must be positive, got {size}")
        rng = np.random.default_rng(seed)
        coefficients = distribution.coefficients
        samples = np.empty(size)
        for start in range(0, size, _DRAW_CHUNK):
            stop = min(start + _DRAW_CHUNK, size)
            samples[start:stop] = rng.standard_normal((stop - start, len(coefficients))) ** 2 @ coefficients
        return samples

    @staticmethod
    def loss_quantile(
        distribution: LossDistribution, confidence: float = 0.95, seed: int = 0, size: int = DEFAULT_LOSS_DRAWS
    ) -> float:
        """Fidelity bound 1 - q at the given confidence."""
        TomographyValidator.validate_open_unit_interval(confidence, "Confidence")
        if size < DEFAULT_LOSS_DRAWS:
            raise ValueError(f"Error: Quantiles need at least {DEFAULT_LOSS_DRAWS} draws, got {size}")
        if distribution.j_max == 0 or not np.any(distribution.coefficients):
            return 1.0
        quantile = np.quantile(LossAnalyzer.loss_samples(distribution, size, seed), confidence)
        return float(1.0 - quantile)


class AdequacyTester:
    """Chi-square test of a fitted model against observed counts."""

    @staticmethod
    def chi_square_p_value(statistic: float, dof: int) -> float:
        """Upper tail of the chi-squared law."""
        if dof < 1:
            raise ValueError(f"Error: Degrees of freedom must be at least 1, got {dof}")
        if statistic < 0:
            raise ValueError(f"Error: Chi-square statistic must be nonnegative, got {statistic}")
        return float(chi2.sf(statistic, dof))

    @staticmethod
    def chi_square_adequacy(
        data: MeasurementData, result: TomographyResult, significance: float = 0.05
    ) -> AdequacyReport:
        """Pearson chi-square with dof = independent frequencies - j_max of the fitted model.

        Rows whose expected and observed counts are both zero carry no information and are skipped.
        """
        TomographyValidator.validate_open_unit_interval(significance, "Significance")
        TomographyValidator.validate_same_dimension(len(data), len(result.fitted_probabilities), "data and fit")
        expected = data.exposures * result.fitted_probabilities
        floor = TOLERANCES.intensity_floor * np.maximum(data.exposures, 1.0)
        used = (data.exposures > 0) & ~((expected < floor) & (data.counts == 0))
        if np.any(used & (expected < floor)):
            raise ValueError("Error: Expected counts must be positive on rows with observations")
        statistic = float(np.sum((data.counts[used] - expected[used]) ** 2 / expected[used]))

        independent = int(np.sum(used & np.array([group is None for group in data.groups])))
        for indices in data.group_indices().values():
            independent += max(int(np.sum(used[indices])) - 1, 0)
        dof = independent - j_max(result.estimate.dim, result.rank)
        if dof < 1:
            raise DegreesOfFreedomError(
                f"Error: Model with rank {result.rank} has no degrees of freedom left ({independent} frequencies)"
            )
        return AdequacyReport(statistic, dof, AdequacyTester.chi_square_p_value(statistic, dof), significance)


def align_gauge(reference: np.ndarray, block: np.ndarray) -> np.ndarray:
    """Right-multiply block by the unitary maximizing Re Tr(reference^dagger block U)."""
    left, _, right_h = np.linalg.svd(reference.conj().T @ block)
    return block @ (left @ right_h).conj().T


def adjusted_fidelity(c_true: PurifiedState, c_est: PurifiedState, information: InformationMatrix) -> float:
    """1 - ||P_meas dz||^2 for the gauge-aligned deviation dz of the estimate from the truth."""
    TomographyValidator.validate_same_dimension(c_true.dim, c_est.dim, "purified states")
    TomographyValidator.validate_same_dimension(c_true.dim, information.dim, "purified state and information matrix")
    rank = information.rank
    if max(c_true.rank, c_est.rank) > rank:
        raise ValueError(f"Error: Purified ranks exceed the information matrix rank {rank}")
    truth = c_true.padded(rank)
    estimate = align_gauge(truth, c_est.padded(rank))
    deviation = real_coordinates(estimate) - real_coordinates(truth)
    projected = information.measurable_basis().T @ deviation
    return float(np.clip(1.0 - projected @ projected, 0.0, 1.0))


def coefficient_report(distribution: LossDistribution, confidence: float, seed: int) -> dict:
    """Loss summary used by the loss command."""
    return {
        "coefficients": distribution.coefficients,
        "j_max": distribution.j_max,
        "sample_size": distribution.sample_size,
        "mean": distribution.mean,
        "variance": distribution.variance,
        "normalized_loss": distribution.normalized_loss,
        "confidence": confidence,
        "fidelity_bound": LossAnalyzer.loss_quantile(distribution, confidence, seed),
        "incomplete": distribution.incomplete,
    }

