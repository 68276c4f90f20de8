"""Exception hierarchy shared by all evgate modules.

Every error raised on purpose derives from :class:`EvgateError` so callers
(and the CLI) can distinguish expected failures from bugs. Errors carry the
context needed to locate the problem (line numbers, paths, coordinates).
"""

from __future__ import annotations


class EvgateError(Exception):
    """Base class for all expected evgate failures."""


# --- event stream parsing -------------------------------------------------

class MalformedLineError(EvgateError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class EmptyStreamError(EvgateError):
    """Stream parsed cleanly but contains zero events.

    The caller decides whether an empty stream is legal; for binary streams
    the header geometry is preserved so an empty window can be rebuilt.
    """

    def __init__(self, geometry=None):
        super().__init__("event stream contains no events")
        self.geometry = geometry


class BadMagicError(EvgateError):
    pass


class TruncatedStreamError(EvgateError):
    pass


class CoordinateOutOfRangeError(EvgateError):
    def __init__(self, x: int, y: int, geometry):
        super().__init__(f"event at ({x}, {y}) outside geometry {geometry}")
        self.x = x
        self.y = y
        self.geometry = geometry


class InvertedIntervalError(EvgateError):
    pass


# --- region geometry ------------------------------------------------------

class RegionOutOfBoundsError(EvgateError):
    pass


class OverlapTooLargeError(EvgateError):
    pass


class GeometryTooSmallError(EvgateError):
    pass


class ShapeMismatchError(EvgateError):
    pass


class MissingRegionError(EvgateError):
    pass


# --- metrics ----------------------------------------------------------------

class LabelOutOfRangeError(EvgateError):
    pass


class NoValidClassesError(EvgateError):
    pass


class ZeroTimeError(EvgateError):
    pass


# --- spiking network --------------------------------------------------------

class NonFiniteValueError(EvgateError):
    pass


class NonFiniteLossError(EvgateError):
    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class CheckpointFormatError(EvgateError):
    pass


# --- gate pipeline ----------------------------------------------------------

class EmptyCacheReuseError(EvgateError):
    """Internal bug guard: a REUSE decision hit a region with no cached result."""


class SequenceTooShortError(EvgateError):
    pass


class ManifestError(EvgateError):
    def __init__(self, message: str, path=None):
        super().__init__(message if path is None else f"{message}: {path}")
        self.path = path


# --- optical-flow warping ---------------------------------------------------

class NonFiniteFlowError(EvgateError):
    pass


class MissingFlowError(EvgateError):
    pass


# --- synthetic data / CLI ---------------------------------------------------

class SceneSpecError(EvgateError):
    pass


class IoFailureError(EvgateError):
    def __init__(self, message: str, path=None):
        super().__init__(message if path is None else f"{message}: {path}")
        self.path = path


class ConfigError(EvgateError):
    pass
