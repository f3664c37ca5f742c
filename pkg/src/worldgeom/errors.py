"""Exception types shared across the toolkit."""


class WorldGeomError(Exception):
    """Base class for all toolkit errors."""


class InputError(WorldGeomError):
    """Malformed or inconsistent input (dimension mismatch, bad file, bad range)."""


class InsufficientSupportError(WorldGeomError):
    """Too few reliable pixels to fit alignment coefficients; frame is unalignable."""


class UndefinedLossError(WorldGeomError):
    """A loss was requested over an empty valid-pixel set."""


class InfeasibleBudgetError(WorldGeomError):
    """Token budget cannot accommodate even the minimum view count."""


class DegenerateResultError(WorldGeomError):
    """A pipeline stage produced an unusable result (e.g. every sequence discarded)."""
