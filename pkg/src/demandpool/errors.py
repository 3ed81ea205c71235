"""Exception types raised across the package."""


class DemandPoolError(Exception):
    """Base class for all package errors."""


# distribution algebra
class NotNormalized(DemandPoolError, ValueError):
    pass


class NegativeMass(DemandPoolError, ValueError):
    pass


class NegativeSupport(DemandPoolError, ValueError):
    pass


class LengthMismatch(DemandPoolError, ValueError):
    pass


class TooFewSimulations(DemandPoolError, ValueError):
    pass


# forecasters
class DegenerateSeries(DemandPoolError, ValueError):
    """Series does not carry enough positive demand for the requested model."""


class NonConvergence(DemandPoolError, RuntimeError):
    pass


class EmptySeries(DemandPoolError, ValueError):
    pass


# ingest
class IngestError(DemandPoolError):
    """Anything wrong with an input file. The CLI maps these to exit code 2."""


class MissingFile(IngestError, FileNotFoundError):
    pass


class MalformedRow(IngestError, ValueError):
    def __init__(self, line, reason=""):
        self.line = line
        super().__init__(f"malformed row at line {line}" + (f": {reason}" if reason else ""))


class NonContiguousPeriods(IngestError, ValueError):
    def __init__(self, series_id):
        self.series_id = series_id
        super().__init__(f"periods of series {series_id!r} are not contiguous")


class NegativeValue(IngestError, ValueError):
    def __init__(self, series_id, period):
        self.series_id = series_id
        self.period = period
        super().__init__(f"negative demand in series {series_id!r} at period {period}")


class IncompleteGrid(IngestError, ValueError):
    def __init__(self, series_id, method, horizon):
        self.series_id = series_id
        self.method = method
        self.horizon = horizon
        super().__init__(
            f"incomplete quantile grid for series {series_id!r}, method {method!r}, horizon {horizon}"
        )


class UnknownTau(IngestError, ValueError):
    pass


class TooShort(DemandPoolError, ValueError):
    pass


# scoring / combination / inventory
class EmptySample(DemandPoolError, ValueError):
    pass


class ZeroMethods(DemandPoolError, ValueError):
    pass


class NegativeInput(DemandPoolError, ValueError):
    pass


class ZeroSales(DemandPoolError, ValueError):
    pass


class MissingClass(DemandPoolError, KeyError):
    pass
