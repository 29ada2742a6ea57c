"""Exception types. Each carries a short machine-readable category used by the CLI."""


class BeamfuseError(Exception):
    category = "error"


class InvalidConfigError(BeamfuseError, ValueError):
    category = "invalid-config"


class SteeringDomainError(BeamfuseError, ValueError):
    category = "out-of-steering-domain"


class SceneError(BeamfuseError, ValueError):
    category = "invalid-scene"


class ShapeError(BeamfuseError, ValueError):
    category = "shape-mismatch"


class FormatError(BeamfuseError, ValueError):
    category = "bad-file-format"


class UsageError(BeamfuseError, ValueError):
    category = "usage"
