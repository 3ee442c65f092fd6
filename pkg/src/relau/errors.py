"""Exception hierarchy shared by the library and the command line.

Every error carries an ``exit_code`` so the CLI can map failures to distinct
process exit statuses without a lookup table.
"""


class RelauError(Exception):
    exit_code = 1
    kind = "error"


class ConfigError(RelauError):
    exit_code = 2
    kind = "invalid-config"


class MissingInputError(RelauError):
    exit_code = 3
    kind = "missing-input"


class ConflictError(RelauError):
    exit_code = 4
    kind = "conflict"


class TrainingError(RelauError):
    exit_code = 5
    kind = "training-failure"


class FormatError(RelauError):
    exit_code = 6
    kind = "format"


class BundleError(FormatError):
    kind = "bundle"


class MissingFileError(BundleError, MissingInputError):
    exit_code = 3
    kind = "missing-file"


class LandmarkCountError(BundleError):
    kind = "landmark-count"


class FrameOrderError(BundleError):
    kind = "frame-order"


class AnnotationLengthError(BundleError):
    kind = "annotation-length"


class GeometryError(RelauError):
    exit_code = 7
    kind = "geometry"


class BehindCameraError(GeometryError):
    kind = "behind-camera"


class WarpError(GeometryError):
    kind = "warp"


class ExtractionError(RelauError):
    exit_code = 8
    kind = "extraction"

    def __init__(self, message, frame=None):
        super().__init__(message if frame is None else f"frame {frame}: {message}")
        self.frame = frame


class ConnectivityError(TrainingError):
    kind = "connectivity"


class SizeError(TrainingError):
    kind = "size"


class RegularizationError(TrainingError):
    kind = "regularization"
