"""Exception hierarchy.

Every domain error carries a short machine-greppable ``code`` used by the CLI.
"""


class MobManipError(Exception):
    code = "E_DOMAIN"


class ConfigError(MobManipError):
    code = "E_CONFIG"


class DegenerateBasis(MobManipError):
    code = "E_DEGENERATE_BASIS"


class InvalidGeometry(MobManipError):
    code = "E_INVALID_GEOMETRY"


class NonPositiveDt(MobManipError):
    code = "E_NONPOSITIVE_DT"


class Unreachable(MobManipError):
    code = "E_UNREACHABLE"


class EmptySolutionSet(MobManipError):
    code = "E_EMPTY_SOLUTION_SET"


class ImageTooSmall(MobManipError):
    code = "E_IMAGE_TOO_SMALL"


class EmptyDescriptorSet(MobManipError):
    code = "E_EMPTY_DESCRIPTORS"


class EmptyTree(MobManipError):
    code = "E_EMPTY_TREE"


class TooFewCorrespondences(MobManipError):
    code = "E_TOO_FEW_CORRESPONDENCES"


class NoConsensus(MobManipError):
    code = "E_NO_CONSENSUS"


class PointAtInfinity(MobManipError):
    code = "E_POINT_AT_INFINITY"


class InvalidDepth(MobManipError):
    code = "E_INVALID_DEPTH"


class ObjectBehindCamera(MobManipError):
    code = "E_OBJECT_BEHIND_CAMERA"
