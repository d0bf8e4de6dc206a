"""Exception types shared across the package."""


class TameInvError(Exception):
    """Base class for all package errors."""


class OutsideBall(TameInvError):
    """An iterate or linearization point left the ball where the problem is tame."""


class SingularInverse(TameInvError):
    """The right inverse could not be applied (numerically singular system)."""


class RadiusExceeded(TameInvError):
    """The right-hand side lies outside the admissible surjectivity ball."""


class EpsilonTooLarge(TameInvError):
    """The perturbation parameter violates the implicit-function smallness condition."""


class ConditionViolation(TameInvError):
    """A sampled inequality that must hold by construction failed."""


class ConfigError(TameInvError):
    """Malformed or inconsistent experiment configuration."""
