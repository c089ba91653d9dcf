"""Exception types raised across the package."""

from __future__ import annotations


class McBucketsError(Exception):
    """Base class for all package errors."""


class CoverageGap(McBucketsError, ValueError):
    """A point of [0, 1] is not covered by any bucket."""

    def __init__(self, point: float):
        super().__init__(f"point {point!r} is not covered by any bucket")
        self.point = point


class DegenerateBucket(McBucketsError, ValueError):
    """A bucket has non-positive length."""


class BucketNotInSet(McBucketsError, ValueError):
    """A bucket was expected to be a member of a bucket set."""


class OverlapCollision(McBucketsError, ValueError):
    """A generated overlap bucket reaches a neighbouring threshold."""


class RhoTooLarge(McBucketsError, ValueError):
    """A square-root overlap bucket would reach zero."""

    def __init__(self, threshold: float):
        super().__init__(f"overlap bucket around {threshold!r} reaches 0")
        self.threshold = threshold


class OverflowGuard(McBucketsError, OverflowError):
    """Sample counts left the exactly representable range."""


class NMaxTooSmall(McBucketsError, IndexError):
    """A boundary table was queried beyond its length."""


class NotFound(McBucketsError, RuntimeError):
    """A scan terminated without finding a qualifying value."""


class InconsistentDecisions(McBucketsError, RuntimeError):
    """Threshold decisions contradict the monotone ordering."""


class NotClosed(McBucketsError, RuntimeError):
    """Undecided states remain at the end of the boundary tables."""

    def __init__(self, n_max: int):
        super().__init__(f"undecided states remain at n_max={n_max}")
        self.n_max = n_max


class InvalidConfig(McBucketsError, ValueError):
    """Inconsistent run configuration."""


class DegenerateAlternative(McBucketsError, ValueError):
    """Null and alternative parameters coincide."""


class QuadratureNotConverged(McBucketsError, RuntimeError):
    """Adaptive quadrature missed its error target."""

    def __init__(self, value: float, error: float):
        super().__init__(f"estimated error {error:.3g} exceeds 1% of {value:.6g}")
        self.value = value
        self.error = error
