"""Exception hierarchy shared by all tactile modules."""


class TactileError(Exception):
    """Base class; ``kind`` is the machine-readable error tag used by the CLI."""

    kind = "error"


class ShapeMismatchError(TactileError, ValueError):
    kind = "shape-mismatch"


class InvalidInputError(TactileError, ValueError):
    kind = "invalid-input"


class NoContactError(TactileError):
    kind = "no-contact"


class NoUsablePixelsError(TactileError):
    kind = "no-usable-pixels"


class NoMarkersError(TactileError):
    kind = "no-markers"


class TrackingLossError(TactileError):
    kind = "tracking-loss"

    def __init__(self, message, matched_fraction=0.0):
        super().__init__(message)
        self.matched_fraction = matched_fraction


class TexturelessError(TactileError):
    kind = "textureless"


class InsufficientMarkersError(TactileError):
    kind = "insufficient-markers"


class SceneError(TactileError, ValueError):
    kind = "scene"


class SchemaError(InvalidInputError):
    """A JSON document does not follow its documented layout."""

    kind = "schema"
