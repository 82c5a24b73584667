"""Exception types raised across the package."""


class SeqdynError(Exception):
    """Base class for all package errors."""


class NonConvergence(SeqdynError):
    pass


class NegativeIndexOnOneSided(SeqdynError):
    pass


class IncompatiblePhaseSpaces(SeqdynError):
    pass


class NoDeclaredLimit(SeqdynError):
    pass


class DefectTooLarge(SeqdynError):
    """Pseudo-orbit defect is too large for a consistent inverse-branch choice."""


class TruncationDominates(SeqdynError):
    pass


class NoSeparationWithinCap(SeqdynError):
    pass


class StabilityThresholdExceeded(SeqdynError):
    pass


class ShadowFailure(SeqdynError):
    def __init__(self, message, locations=()):
        super().__init__(message)
        self.locations = tuple(locations)


class AdmissibilityViolated(SeqdynError):
    pass


class GridMismatch(SeqdynError):
    pass


class BoundaryItinerary(SeqdynError):
    pass


class DegenerateObservable(SeqdynError):
    pass


class EmptyList(SeqdynError, ValueError):
    pass


class GridTooCoarse(SeqdynError):
    pass


class InequalityViolated(SeqdynError):
    pass


class NotMeanZero(SeqdynError):
    pass


class DegenerateVariance(SeqdynError):
    pass


class ParameterOutOfRange(SeqdynError, ValueError):
    pass


class UnknownPreset(SeqdynError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ConfigParse(SeqdynError):
    pass


class ExperimentFailure(SeqdynError):
    pass


class RatePreconditionUnchecked(UserWarning):
    """Warning: a partial-sum ensemble ran on a sequence whose tail rate was not verified."""
