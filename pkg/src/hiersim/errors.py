"""Exception hierarchy shared by all hiersim modules."""


class HiersimError(Exception):
    """Base class for every error raised by hiersim."""


class NonFinite(HiersimError, ValueError):
    """A matrix or state contained NaN or Inf."""


class SingularSystem(HiersimError, ArithmeticError):
    """A linear system had no unique solution."""


class NotSymmetric(HiersimError, ValueError):
    pass


class NotPositiveDefinite(HiersimError, ValueError):
    pass


class NotStabilizable(HiersimError):
    """No stabilizing gain could be computed for the concrete system."""


class NotHurwitz(HiersimError, ValueError):
    pass


class DecayTooLarge(HiersimError, ValueError):
    """The requested decay rate exceeds what the closed loop supports."""


class NoExactEmbedding(HiersimError):
    """The abstract system cannot be embedded into the concrete one (no P, Q)."""


class InvalidSpec(HiersimError, ValueError):
    pass


class GridTooCoarse(HiersimError, ValueError):
    pass


class SamplingExhausted(HiersimError):
    pass


class NoPath(HiersimError):
    pass


class DegeneratePath(HiersimError, ValueError):
    pass


class ScenarioError(HiersimError, ValueError):
    """A scenario or certificate file failed to parse or validate."""
