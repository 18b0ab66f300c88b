"""Error taxonomy shared across the package.

The CLI maps these onto exit codes: validation/configuration problems exit
with status 2, numerical divergence during training exits with status 3.
"""


class AbsaError(Exception):
    """Base class for all package errors."""


class DimensionError(AbsaError):
    """Tensor shapes do not line up for the requested operation."""


class EmptyTargetError(AbsaError):
    """An operation that needs at least one target row got none."""


class ConfigError(AbsaError):
    """A configuration value is out of range or inconsistent."""


class ValidationError(AbsaError):
    """Structured input (corpus, ontology, store) violates its contract."""


class ParseError(ValidationError):
    """A line of an input file could not be parsed."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ContractError(AbsaError):
    """A caller broke an API precondition."""


class DivergenceError(AbsaError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int | None = None, example: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.example = example


class EmptyCorpusError(AbsaError):
    """An operation that needs a nonempty corpus got an empty one."""
