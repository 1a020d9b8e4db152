"""Exception types raised by the tdmux toolkit.

Feasibility problems found by ``compiler.validate`` are *not* exceptions;
they are returned as ``Violation`` records so callers can report all of
them at once.
"""


class TdmuxError(Exception):
    """Base class for all tdmux errors."""


class ConfigError(TdmuxError):
    """A configuration file is missing, unreadable or malformed."""


# --- compiler -------------------------------------------------------------

class NonPositiveRateError(TdmuxError):
    pass


class UpdateRateExceedsDacRateError(TdmuxError):
    pass


class VoltageOutOfRangeError(TdmuxError):
    pass


class ValidationFailedError(TdmuxError):
    """Raised by compile() when the profile fails validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(str(v) for v in self.violations)
        super().__init__(f"profile validation failed: {msg}")


class MissingChannelTargetError(TdmuxError):
    pass


class TargetOutOfRangeError(TdmuxError):
    pass


# --- simulator ------------------------------------------------------------

class MalformedProgramError(TdmuxError):
    pass


class LengthMismatchError(TdmuxError):
    pass


class StepTooCoarseError(TdmuxError):
    pass


# --- analysis -------------------------------------------------------------

class NonPositiveSamplesError(TdmuxError):
    pass


class TooFewSamplesError(TdmuxError):
    pass


class NoDecayDetectedError(TdmuxError):
    pass


class NoStepDetectedError(TdmuxError):
    pass


class CutoffAboveNyquistError(TdmuxError):
    pass


class GridMismatchError(TdmuxError):
    pass


class TooShortForFrequencyError(TdmuxError):
    pass


class ZeroAggressorAmplitudeError(TdmuxError):
    pass


class InsufficientSpanError(TdmuxError):
    pass


class TraceFormatError(TdmuxError):
    """A trace CSV could not be parsed or fails basic sanity checks."""


# --- estimator ------------------------------------------------------------

class UnknownParameterError(TdmuxError):
    pass


class InfeasiblePlatformError(TdmuxError):
    pass
