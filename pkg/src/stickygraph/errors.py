"""Exception hierarchy shared by the package."""


class StickyGraphError(Exception):
    pass


class ConfigError(StickyGraphError, ValueError):
    """Invalid model or run configuration (CLI exit code 2)."""


class RhoSumError(ConfigError):
    pass


class EllipticityError(ConfigError):
    pass


class BadTableError(ConfigError):
    pass


class NumericsError(StickyGraphError, ArithmeticError):
    """A numerical procedure could not deliver its contract (CLI exit code 3)."""


class QuadratureError(NumericsError):
    pass


class SingularSystem(NumericsError):
    pass


class DegenerateInput(NumericsError):
    pass


class KindError(StickyGraphError, TypeError):
    """A path of the wrong kind (sticky/nonsticky) was passed."""


class BeyondHorizon(StickyGraphError, ValueError):
    pass


class ContinuityError(StickyGraphError, ValueError):
    """Per-edge test function disagrees with itself at the vertex."""


class TruncationWarning(UserWarning):
    pass
