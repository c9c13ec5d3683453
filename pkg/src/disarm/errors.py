"""Exception types shared across the package."""


class DisarmError(Exception):
    pass


class DimensionError(DisarmError, ValueError):
    """Array shapes do not conform."""


class ContractError(DisarmError, ValueError):
    """A documented precondition or invariant was violated."""


class EncoderInputError(DisarmError, FileNotFoundError):
    """An encoder could not read its input (e.g. a missing image file)."""


class EncoderError(DisarmError, RuntimeError):
    """An encoder adapter failed or returned a malformed vector."""


class ConfigError(DisarmError, ValueError):
    pass


class CheckpointError(DisarmError, ValueError):
    """A checkpoint does not match the model it is loaded into."""


class TrainingError(DisarmError, RuntimeError):
    pass


class SearchError(DisarmError, RuntimeError):
    """A search client could not produce a result for a query."""
