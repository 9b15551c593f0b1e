"""Exception types shared across the package."""


class SplineQRError(Exception):
    """Base class for all library errors."""


class InvalidInputError(SplineQRError):
    """Arguments or data violate a documented precondition."""


class DataFormatError(SplineQRError):
    """An input file could not be parsed into a clean numeric table."""


class SingularDesignError(SplineQRError):
    """The weighted cross-product of the active design is rank deficient."""


class ConstraintInfeasibleError(SplineQRError):
    """No sample pair satisfies the curve-ordering constraint."""


class ChainDiagnosticError(SplineQRError):
    """The recorded chain is unusable (e.g. every log posterior is -inf)."""
