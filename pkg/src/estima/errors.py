class EstimaError(ValueError):
    """Bad input: malformed files, invalid methodology, missing data."""


class LedgerError(EstimaError):
    pass


class MethodologyError(EstimaError):
    pass


class MissingRateError(EstimaError):
    pass


class InvariantError(RuntimeError):
    """An internal consistency check failed; indicates a bug, not bad input."""
