"""Exception types raised across the tracking pipeline."""


class TrackingError(Exception):
    """Base class for all arttrack errors."""


class AngleNearPi(TrackingError):
    """Rotation angle too close to pi for an unambiguous logarithm."""


class TooFewPoints(TrackingError, ValueError):
    pass


class EmptyCloud(TrackingError, ValueError):
    pass


class DegeneratePair(TrackingError, ValueError):
    """The two points of a pair coincide, so the pair direction is undefined."""


class EmptyParams(TrackingError, ValueError):
    pass


class AmbiguousPeak(TrackingError):
    """Two accumulator peaks of near-equal mass far apart from each other."""


class UnknownPart(TrackingError, KeyError):
    pass


class LabelMismatch(TrackingError, ValueError):
    pass


class MissingCorrespondence(TrackingError, ValueError):
    pass


class UnknownTemplate(TrackingError, ValueError):
    pass


class ScriptGap(TrackingError, ValueError):
    pass


class LengthMismatch(TrackingError, ValueError):
    pass


class DataFormatError(TrackingError, ValueError):
    """Malformed input file."""


class RunAborted(TrackingError):
    """A fatal error stopped a run; carries the results produced before it."""

    def __init__(self, index: int, cause: BaseException, results: list) -> None:
        super().__init__(f"tracking aborted at frame {index}: {cause}")
        self.index = index
        self.cause = cause
        self.results = results
