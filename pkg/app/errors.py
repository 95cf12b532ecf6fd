"""
Exception hierarchy shared by the services and the CLI.
Each error class maps onto one CLI exit code.
"""

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2
EXIT_IO = 3


class LowSwitchError(Exception):
    """Base class for all toolkit errors"""
    exit_code = EXIT_INVARIANT


class InvalidParameterError(LowSwitchError, ValueError):
    """Raised when an operation receives an out-of-range parameter"""
    exit_code = EXIT_CONFIG


class ConfigError(LowSwitchError):
    """Raised when an experiment config cannot be parsed or is inconsistent"""
    exit_code = EXIT_CONFIG


class DimensionMismatchError(LowSwitchError, ValueError):
    """Raised when vector or matrix dimensions disagree"""


class FeatureNormError(LowSwitchError, ValueError):
    """Raised when a feature vector exceeds the unit-norm bound"""


class CovarianceContractError(LowSwitchError):
    """Raised when the reference covariance is not dominated by the current one"""


class InvalidSpecError(LowSwitchError, ValueError):
    """Raised when an MDP description violates its invariants"""
    exit_code = EXIT_CONFIG

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class PolicyError(LowSwitchError):
    """Raised when a policy is undefined or infeasible at a reachable state"""


class ConstructionError(LowSwitchError):
    """Raised when a randomized or hand-built instance cannot be constructed"""


class NumericalFaultError(LowSwitchError):
    """Raised when a numerical check (e.g. regression residual) fails"""


class InvariantViolationError(LowSwitchError):
    """Raised when a runtime invariant is violated beyond its budget"""


class DegenerateFitError(LowSwitchError, ValueError):
    """Raised when a scaling fit has too few or degenerate points"""


class TraceMismatchError(LowSwitchError, ValueError):
    """Raised when traces cannot be combined or do not match an instance"""


def exit_code_for(exc: BaseException) -> int:
    """Map an exception onto the CLI exit code contract"""
    if isinstance(exc, LowSwitchError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_INVARIANT
