"""Exception hierarchy for the freefall package."""

from __future__ import annotations


class FreefallError(Exception):
    """Base class for all package errors."""


class SettingError(FreefallError, ValueError):
    """A candidate contract setting failed validation."""


class NonStochasticRow(SettingError):
    """A forecast row does not sum to one or leaves [0, 1]."""


class DominatedAction(SettingError):
    """Expected rewards are not strictly increasing with cost."""


class BadNullAction(SettingError):
    """The first forecast row is not a point mass on the null outcome."""


class DegenerateDirection(FreefallError, ValueError):
    """Two actions are indistinguishable along a scaling direction."""


class InvalidTrajectory(FreefallError, ValueError):
    """A trajectory failed best-response validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(
            f"{len(self.violations)} validity violation(s): "
            + "; ".join(str(v) for v in self.violations[:3])
        )


class OutOfRange(FreefallError, ValueError):
    """A query time lies outside a trajectory's span."""


class ZeroEndBreakpoint(FreefallError, ValueError):
    """A fall cannot terminate at the zero scalar in finite time."""


class NumericalBreakdown(FreefallError, ArithmeticError):
    """The simplex solver lost numerical reliability."""


class DegenerateSolution(FreefallError, ValueError):
    """An LP solution has no segment of usable duration."""


class TooManyActions(FreefallError, ValueError):
    """Sequence enumeration guarded off for large action counts."""


class NoDynamicAdvantage(FreefallError):
    """No dynamic contract beats the static optimum on this instance."""
