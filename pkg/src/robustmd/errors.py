"""Exception types shared across the package."""


class RobustMDError(Exception):
    """Base class for all package-specific errors."""


class InvalidMatrix(RobustMDError):
    """Matrix input is malformed (non-finite entries, wrong shape)."""


class DimensionError(RobustMDError):
    """Operands have incompatible shapes."""


class InvalidSampleSize(RobustMDError):
    """Sample size is too small for the requested operation."""


class NotPSD(RobustMDError):
    """A matrix required to be positive semi-definite has a materially
    negative eigenvalue, signalling a bug in the caller's covariance
    construction."""


class InvalidArgument(RobustMDError):
    """Scalar argument outside its admissible range."""


class ModelEvaluationError(RobustMDError):
    """Structural map returned a non-finite value.  Carries the evaluation
    point for debugging."""

    def __init__(self, message, theta=None, alpha=None, beta=None):
        super().__init__(message)
        self.theta = theta
        self.alpha = alpha
        self.beta = beta


class SolverError(RobustMDError):
    """Every restart of the nuisance minimization failed."""


class GcvDegenerate(RobustMDError):
    """Effective degrees of freedom exhaust the sample at every candidate
    penalty (nuisance dimension too large relative to n)."""


class DegreesOfFreedomError(RobustMDError):
    """Estimated degrees of freedom are non-positive; the covariance rank
    must exceed the nuisance Jacobian rank for the test to apply."""


class EquilibriumError(RobustMDError):
    """Fixed-point iteration failed to converge.  Carries the trajectory
    tail to help diagnose cycling or multiplicity."""

    def __init__(self, message, trajectory_tail=None):
        super().__init__(message)
        self.trajectory_tail = trajectory_tail


class InsufficientData(RobustMDError):
    """A cell of the dataset is too sparse to estimate its frequency."""


class ConfigError(RobustMDError):
    """Experiment or CLI configuration is invalid."""


class ExperimentError(RobustMDError):
    """Monte Carlo experiment exceeded its replication failure budget."""
