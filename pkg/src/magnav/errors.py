"""Exception types shared across the package."""


class MagnavError(Exception):
    """Base class for all package errors."""


class InputError(MagnavError):
    """Invalid argument to a core operation (out-of-bounds cell, bad grid, ...)."""


class ScenarioError(MagnavError):
    """A scenario file failed to load or validate."""


class InstructionParseError(MagnavError):
    """Free-form instruction could not be parsed; supply structured target/landmarks."""


class NoFeasibleViewpointError(MagnavError):
    """Viewpoint optimization found no free cell to stand on."""


class GroundingIntegrityError(MagnavError):
    """An oracle answer referenced an identifier or keyframe that does not exist."""


class ScriptExhaustedError(MagnavError):
    """A scripted oracle ran out of playback entries."""


class OracleUnavailableError(MagnavError):
    """The remote oracle endpoint could not be reached or returned garbage."""
