"""Exception and warning types shared across the package."""


class RiskCoupleError(Exception):
    """Base class for all package errors."""


class MalformedLine(RiskCoupleError):
    """A log line could not be parsed in the declared format."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class UnknownAction(MalformedLine):
    """The act field is outside the supported action set."""


class MissingField(MalformedLine):
    """A record violates the field schema for its action kind."""


class UnknownLocation(RiskCoupleError):
    """Queried location has never appeared in the event index."""


class UnknownFactor(RiskCoupleError):
    """Queried factor has never appeared in the event index."""


class EmptyInput(RiskCoupleError):
    """An operation that requires at least one sample received none."""


class KTooLarge(RiskCoupleError):
    """Requested cluster count exceeds the number of samples."""


class DimensionMismatch(RiskCoupleError):
    """Vector dimension does not match the trained model."""


class LengthMismatch(RiskCoupleError):
    """Two decision streams do not cover the same set of reads."""


class NoPresentFeatures(RiskCoupleError):
    """Average risk is undefined when every feature type is absent."""


class InvalidConfig(RiskCoupleError):
    """A configuration file or object violates its invariants."""


class ExitWithoutPresenceWarning(UserWarning):
    """Exit recorded for a factor that is not in the current event."""


class ReadWithUnplacedDeviceWarning(UserWarning):
    """Read recorded for a device that has no current location."""


class DegenerateDistributionWarning(UserWarning):
    """Risk binning over a zero-variance value population."""


class UnknownMemberWarning(UserWarning):
    """Event member missing from the training coupling matrices."""


class MissingCouplingWarning(UserWarning):
    """Policy component resolved against unseen context; fails closed."""


class SmallPopulationWarning(UserWarning):
    """Coupling distributions are unreliable for tiny populations."""
