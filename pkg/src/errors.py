"""
Error types shared across the homogenization toolkit
"""

from typing import List, Optional


class HomogenizationError(Exception):
    """Base class for all toolkit errors"""


class ConfigError(HomogenizationError):
    """Invalid run configuration (CLI exit code 2)"""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("Invalid configuration:\n  - " + "\n  - ".join(self.problems))


class MaterialError(HomogenizationError, ValueError):
    """Invalid material data or an operation the material kind does not support"""


class GramError(HomogenizationError):
    """Gram matrix cannot be used for the weighted loss"""

    def __init__(self, message: str, smallest_eigenvalue: Optional[float] = None):
        self.smallest_eigenvalue = smallest_eigenvalue
        super().__init__(message)


class FemSolveError(HomogenizationError):
    """Conjugate gradients did not reach the requested tolerance"""

    def __init__(self, message: str, residual_history: List[float]):
        self.residual_history = list(residual_history)
        super().__init__(message)


class NonFiniteError(HomogenizationError):
    """A loss or gradient evaluation produced NaN/Inf"""

    def __init__(self, stage: str, detail: str = ""):
        self.stage = stage
        super().__init__(f"Non-finite value in {stage}" + (f": {detail}" if detail else ""))


class TrainingAborted(HomogenizationError):
    """Training stopped early; carries the partial record and last good parameters"""

    def __init__(self, message: str, record, last_good_params: dict):
        self.record = record
        self.last_good_params = last_good_params
        super().__init__(message)
