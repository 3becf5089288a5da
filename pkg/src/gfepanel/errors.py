"""Exception types shared across the package."""

from __future__ import annotations


class GfePanelError(Exception):
    """Base class for all package errors."""


class PanelValidationError(GfePanelError):
    """Raised when a dataset violates panel invariants.

    Carries the full list of violations so callers can report every
    problem at once instead of fixing them one by one.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(
            f"[{v.rule}] unit={v.unit!r} period={v.period!r}: {v.detail}"
            for v in self.violations
        )
        super().__init__(f"{len(self.violations)} validation violation(s): {lines}")


class UndefinedAlphaError(GfePanelError):
    """An observed cell maps to an undefined group-time effect."""


class NoObservationsError(GfePanelError):
    """The observation mask is empty."""


class NoFeasibleGroupError(GfePanelError):
    """Every candidate group has an undefined effect on a unit's support."""

    def __init__(self, units):
        self.units = list(units)
        super().__init__(f"no feasible group for units: {self.units}")


class UnitObservedOnceError(GfePanelError):
    """Units with a single observed period cannot be split."""

    def __init__(self, units):
        self.units = list(units)
        super().__init__(
            f"units observed only once cannot enter a last-period holdout: {self.units}"
        )


class DegreesOfFreedomExhaustedError(GfePanelError):
    """Observed cell count does not exceed the parameter count."""


class NoScorableCellsError(GfePanelError):
    """All holdout test cells were excluded (undefined group-time effects)."""


class NoOverlapError(GfePanelError):
    """Two transition tables share no end periods."""


class ZeroWeightCellError(GfePanelError):
    """A rate was requested for a key whose total weight is zero."""


class MissingCovariatesError(GfePanelError):
    """Prediction requested at a cell without covariate values."""


class UntaggedColumnError(GfePanelError):
    """A covariate column needs completion but has no completion rule."""


class InfeasibleRotationError(GfePanelError):
    """The rotation design could not satisfy its constraints within the retry budget."""


class IngestError(GfePanelError):
    """CSV ingestion failed (parse error or empty result after filtering)."""
