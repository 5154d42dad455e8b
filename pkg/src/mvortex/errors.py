"""Exception hierarchy.

Every error raised on purpose by the library derives from :class:`MVortexError`
so callers (and the CLI) can map failures onto exit codes.
"""


class MVortexError(Exception):
    """Base class for library errors."""


# grid file format
class GridFormatError(MVortexError, ValueError):
    """Malformed QVG1 file."""


class BadMagicError(GridFormatError):
    pass


class TruncatedPayloadError(GridFormatError):
    pass


class DimsOverflowError(GridFormatError):
    pass


class UnsupportedFormatError(GridFormatError):
    """Unknown version or dtype code."""


# geometry
class GeometryError(MVortexError, ValueError):
    pass


class OrientationError(GeometryError):
    pass


class BoundaryMismatchError(GeometryError):
    pass


class NonPlanarError(GeometryError):
    pass


class MeshFormatError(GeometryError):
    pass


# field kernels
class CoreProximityError(MVortexError, ValueError):
    """Evaluation point inside a filament core tube."""


class OnCutError(MVortexError, ValueError):
    """Evaluation point lies on the Seifert surface."""


class IllConditionedProbeError(MVortexError, ValueError):
    """Probe loop circulation is not close to an integer multiple of gamma."""


# wavefunction / identity
class NoVortexError(MVortexError, ValueError):
    pass


class GaugeViolationError(MVortexError, ValueError):
    pass


class StateConstructionError(MVortexError, ValueError):
    pass


# solver aborts
class NumericalAbort(MVortexError, RuntimeError):
    """Base for aborts raised while integrating or evaluating residuals."""


class NormDriftError(NumericalAbort):
    pass


class FixedPointError(NumericalAbort):
    pass


class MaskFractionError(NumericalAbort):
    pass


class StabilityError(NumericalAbort):
    pass


class ConfigError(MVortexError, ValueError):
    pass
