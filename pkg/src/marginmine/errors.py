"""Exception hierarchy.

Every error a caller can trigger with bad input derives from
:class:`MiningError`; the CLI maps those to exit status 2.
"""


class MiningError(ValueError):
    """Base class for input and configuration errors."""


class FormatError(MiningError):
    """A file header, magic string, or record is malformed."""


class LengthError(MiningError):
    """A binary payload is shorter or longer than its header declares."""


class DataError(MiningError):
    """Values are present but unusable (NaN, Inf, zero-norm rows)."""


class ShapeError(MiningError):
    """Dimensions or lengths do not agree."""


class CapacityError(MiningError):
    """Too few points for the requested number of clusters or cells."""


class ParameterError(MiningError):
    """A numeric parameter is out of its valid range."""


class ConsistencyError(MiningError):
    """Two inputs that must line up do not (ids, label files, tables)."""


class ConfigError(MiningError):
    """Unsupported configuration, e.g. a language without a segmenter."""


class TrainingError(MiningError):
    """A model cannot be trained from the given examples."""
