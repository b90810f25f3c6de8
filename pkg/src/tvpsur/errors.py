"""Exception hierarchy shared by the estimation stack and the command line."""


class TvpError(Exception):
    """Base class. ``code`` is the stable machine-readable name."""

    code = "TvpError"
    exit_code = 3


class RankDeficient(TvpError):
    code = "RankDeficient"


class NotPositiveDefinite(TvpError):
    code = "NotPositiveDefinite"


class SingularTriangular(TvpError):
    code = "SingularTriangular"


class DowndateBreakdown(TvpError):
    code = "DowndateBreakdown"


class DimensionMismatch(TvpError):
    code = "DimensionMismatch"
    exit_code = 2


class InvalidTarget(TvpError):
    code = "InvalidTarget"
    exit_code = 2


class WindowTooShort(TvpError):
    code = "WindowTooShort"


class NumericalMismatch(TvpError):
    code = "NumericalMismatch"


class ScenarioTooLarge(TvpError):
    code = "ScenarioTooLarge"
    exit_code = 2


class StateVersionMismatch(TvpError):
    code = "StateVersionMismatch"
    exit_code = 4


class CorruptState(TvpError):
    code = "CorruptState"
    exit_code = 4
