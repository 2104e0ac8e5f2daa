"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` and a ``details``
mapping so the command line front end can emit a structured record.
"""


class RegimeError(ValueError):
    code = "regime_error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_record(self):
        return {"error": self.code, "message": self.message, "details": self.details}


class DimensionError(RegimeError):
    code = "dimension_mismatch"


class NonFiniteError(RegimeError):
    code = "non_finite"


class InvalidDistributionError(RegimeError):
    code = "invalid_distribution"


class InsufficientDataError(RegimeError):
    code = "insufficient_data"


class MissingColumnError(RegimeError):
    code = "missing_column"


class SchemaVersionError(RegimeError):
    code = "schema_version"
