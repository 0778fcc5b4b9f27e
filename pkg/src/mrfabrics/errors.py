"""Exception types raised by the planner stack."""


class FabricError(Exception):
    """Base class for library errors.

    Planner-side errors may carry the robot, sphere and rollout step that
    triggered them; any of those can be ``None``.
    """

    def __init__(self, message="", robot=None, sphere=None, step=None):
        super().__init__(message)
        self.robot = robot
        self.sphere = sphere
        self.step = step


class DimensionMismatch(FabricError, ValueError):
    pass


class DegenerateVelocity(FabricError, ValueError):
    pass


class SingularMetric(FabricError, ArithmeticError):
    pass


class IndexOutOfRange(FabricError, IndexError):
    pass


class NonpositiveDistance(FabricError, ValueError):
    """A barrier coordinate reached zero or below (interpenetration)."""


class GradientSingularity(FabricError, ArithmeticError):
    """Distance gradient undefined because two sphere centers coincide."""


class InvalidState(FabricError, RuntimeError):
    pass


class ConfigError(FabricError, ValueError):
    """Malformed scenario file or configuration block."""
