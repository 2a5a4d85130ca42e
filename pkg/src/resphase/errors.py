"""Exception hierarchy for resphase."""


class ResonanceError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ResonanceError, ValueError):
    pass


class PreconditionViolation(ResonanceError, ValueError):
    pass


class NoResonantAction(ResonanceError):
    """The frequency does not change sign on the action bracket."""


class DegenerateResonance(ResonanceError):
    """d(omega0)/dI vanishes (to tolerance) at a Newton iterate."""


class TooCloseToResonance(ResonanceError):
    """|omega0| is below the floor where the averaging transform is valid."""


class ConditionEViolated(ResonanceError):
    """A critical point of F is degenerate."""


class BudgetExceeded(ResonanceError):
    pass


class FieldBlowup(ResonanceError):
    pass


class EventNotFound(ResonanceError):
    pass


class NoCrossing(EventNotFound):
    """The trajectory did not reach the resonant surface within the horizon."""


class TransformDiverged(ResonanceError):
    pass
