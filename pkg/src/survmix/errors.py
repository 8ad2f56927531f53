"""Exception types shared across the package.

The CLI maps these onto process exit codes, so commands raise the most
specific type that applies instead of bare ValueError.
"""


class SurvmixError(Exception):
    """Base class for all package errors."""


class ConfigError(SurvmixError):
    """Invalid configuration: bad flag value, inconsistent settings, bad paths."""


class DataError(SurvmixError):
    """Input data violates the ingestion contract (shape, domain, missing values)."""


class NumericalError(SurvmixError):
    """A computation failed in a way no fallback covers (hard numerical error)."""
