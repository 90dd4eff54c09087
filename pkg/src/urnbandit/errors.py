"""Exception types raised across the package."""


class UrnBanditError(Exception):
    """Base class for all package errors."""


class SpecError(UrnBanditError, ValueError):
    """Invalid reward, budget, scenario or design specification."""


class CapacityError(UrnBanditError, ValueError):
    """Budget exceeds the number of units available in the urn."""


class DegenerateUrnError(UrnBanditError, ValueError):
    """All urn weights are zero."""


class CalibrationError(UrnBanditError, ValueError):
    """Target correlation is not attainable for the chosen marginals."""


class UnestimableArmError(UrnBanditError, ValueError):
    """An arm has zero cumulative weight, so its moments are undefined."""

    def __init__(self, arm: int, message: str | None = None):
        self.arm = arm
        super().__init__(message or f"arm {arm} has zero cumulative weight")


class DegenerateFunctionalError(UrnBanditError, ValueError):
    """Gradient of the tested functional vanishes on its dependence set."""


class PlanningError(UrnBanditError, ValueError):
    """Sequential design cannot be planned from the given inputs."""
