"""Exception hierarchy shared by every scenesmith module."""


class SceneSmithError(Exception):
    """Base class; the CLI maps these to exit status 2."""


class PointBehindCamera(SceneSmithError):
    pass


class DegenerateAzimuth(SceneSmithError):
    pass


class DegenerateConfiguration(SceneSmithError):
    pass


class InsufficientPoints(SceneSmithError):
    pass


class NonConvergence(SceneSmithError):
    pass


class AllCellsFailed(SceneSmithError):
    pass


class MismatchedDimensions(SceneSmithError):
    pass


class InsufficientFrames(SceneSmithError):
    pass


class NonPlanarQuad(SceneSmithError):
    pass


class MissingGround(SceneSmithError):
    pass


class ParseError(SceneSmithError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IndexOutOfRange(ParseError):
    pass


class InvalidParams(SceneSmithError):
    pass


class ConfigError(SceneSmithError):
    pass


class ConfigOutOfBounds(ConfigError):
    pass


class UnknownPreset(ConfigError):
    pass


class NotPresent(SceneSmithError):
    pass


class InvalidRatio(SceneSmithError):
    pass


class IoFailure(SceneSmithError):
    pass


class InconsistentInputs(SceneSmithError):
    pass


class EmptyInput(SceneSmithError):
    pass


class MissingCondition(SceneSmithError):
    pass


class UnknownFrame(SceneSmithError):
    pass
