"""Urn bandit adaptive allocation with corrected inference and group sequential testing."""

from .allocation import BanditState, PolicyKind
from .errors import (CalibrationError, CapacityError, DegenerateFunctionalError,
                     DegenerateUrnError, PlanningError, SpecError, UnestimableArmError,
                     UrnBanditError)
from .kernel import BudgetSpec, RewardSpec, RngStream

__version__ = "0.1.0"

__all__ = [
    "BanditState", "BudgetSpec", "CalibrationError", "CapacityError",
    "DegenerateFunctionalError", "DegenerateUrnError", "PlanningError", "PolicyKind",
    "RewardSpec", "RngStream", "SpecError", "UnestimableArmError", "UrnBanditError",
]
