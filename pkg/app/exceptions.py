"""
Exception types shared by the lab modules and the command runner
"""


class LabError(Exception):
    """Base class for every error raised by the lab"""


class ConfigError(LabError):
    """Configuration could not be parsed or validated"""

    def __init__(self, message: str, key: str = None, line: int = None):
        self.key = key
        self.line = line
        location = ""
        if key is not None:
            location = f" (key '{key}'"
            location += f", line {line})" if line else ")"
        super().__init__(f"{message}{location}")


class InvalidInput(LabError):
    """Input rejected before any computation (shape, finiteness, ranges)"""


class ConstructionError(LabError):
    """An object could not be built, e.g. a singular covariance"""


class Refusal(LabError):
    """An operation declined a spec or configuration that violates its preconditions"""

    def __init__(self, message: str, diagnostic: dict = None):
        self.diagnostic = diagnostic or {}
        super().__init__(message)


class CapacityError(LabError):
    """Grassmann generator capacity exceeded"""


class BudgetError(LabError):
    """Sample budget below the minimum an estimator accepts"""
