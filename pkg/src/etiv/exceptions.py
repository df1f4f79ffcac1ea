"""Exception hierarchy for the etiv package."""


class EtivError(Exception):
    """Base class for all etiv errors."""


class SchemaError(EtivError):
    """A column mapping refers to a column that does not exist."""


class ParseError(EtivError):
    """A CSV cell could not be parsed as a number."""


class IdentificationError(EtivError):
    """The order condition (enough instruments / full rank) fails."""


class DataError(EtivError):
    """Invalid data values (NaN/Inf, bad cluster layout, too-small split)."""


class FitError(EtivError):
    """An optimization or sampling stage failed."""


class EvidenceError(EtivError):
    """Marginal likelihood estimation failed (e.g. zero ordinate denominator)."""


class ConfigError(EtivError):
    """Invalid run configuration."""
