"""Exception and warning types shared across the package."""


class OvershootLabError(Exception):
    """Base class for errors raised by this package."""


class InvalidSpec(OvershootLabError, ValueError):
    """An increment law violates its admissibility constraints."""


class GuardExceeded(OvershootLabError, RuntimeError):
    """The step guard elapsed before the requested events were observed.

    Heavy-tailed excursions between crossings have infinite mean length, so
    every trajectory carries a step budget.  Callers may raise the guard.
    """

    def __init__(self, message, steps=None, events=None):
        super().__init__(message)
        self.steps = steps
        self.events = events


class TruncationTooSmall(OvershootLabError, ValueError):
    """Too much convolution mass falls outside the truncation window."""


class DegenerateInterval(OvershootLabError, ValueError):
    """The entrance density vanishes identically on the interval."""


class ModeMismatch(OvershootLabError, ValueError):
    """Two distributions do not share an atom/bin geometry."""


class NoiseFloor(OvershootLabError, ValueError):
    """Too few points of a decay curve exceed the Monte Carlo noise floor.

    This signals convergence faster than the sample size can resolve.
    ``bound`` holds the rate bound implied by the points that remain.
    """

    def __init__(self, message, bound=None, n_above=0):
        super().__init__(message)
        self.bound = bound
        self.n_above = n_above


class InsufficientSamples(OvershootLabError, ValueError):
    """An estimator was given fewer effective counts than it needs."""


class ConfigError(OvershootLabError, ValueError):
    """An experiment configuration could not be parsed or is inadmissible."""


class HeavyTailVariance(UserWarning):
    """Bootstrap standard error exceeds 10% of the estimate."""
