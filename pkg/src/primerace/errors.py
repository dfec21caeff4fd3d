"""Exception types shared across the package."""


class PrimeRaceError(Exception):
    """Base class for all library errors."""


class PreconditionViolation(PrimeRaceError, ValueError):
    pass


class InsufficientPrimes(PrimeRaceError):
    """The prime interval used to build a race tuple is too thin."""


class ParseError(PrimeRaceError):
    pass


class OrderError(PrimeRaceError):
    """Zero ordinates in a data file are not strictly ascending."""


class MissingCharacter(PrimeRaceError, KeyError):
    """A race needs zeros of a primitive character that the repository lacks."""

    def __str__(self):
        return Exception.__str__(self)


class ZeroCountMismatch(PrimeRaceError):
    pass


class NotPositiveDefinite(PrimeRaceError, ValueError):
    pass


class Inadmissible(PrimeRaceError, ValueError):
    """The constraint set S has a cycle, so R(S) is empty."""


class DimensionTooLarge(PrimeRaceError, ValueError):
    pass


class ConfigError(PrimeRaceError, ValueError):
    pass


class HypothesisWarning(UserWarning):
    """A numerical hypothesis of an approximation theorem is not met."""
