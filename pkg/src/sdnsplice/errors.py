"""Exception hierarchy shared by all modules."""


class SdnError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SdnError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class ShapeError(SdnError, ValueError):
    """Two arrays that must share a lattice do not."""


class RankError(SdnError, ValueError):
    """Training data are too degenerate to build a prior."""


class InsufficientDataError(SdnError):
    """Too few samples to compute a statistic."""

    def __init__(self, message, count=0):
        super().__init__(message)
        self.count = count


class DegenerateFitError(SdnError):
    """A fit is undefined because the data have no spread."""


class SingleClusterError(SdnError):
    """Two-cluster split requested on data with a single distinct value."""


class InsufficientSmoothBlocksError(SdnError):
    """No flat blocks are left in a region after the smoothness test."""

    def __init__(self, region, count=0):
        super().__init__(f"no smooth blocks available in the {region} region ({count} candidates)")
        self.region = region
        self.count = count
