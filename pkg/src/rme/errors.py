"""Exception taxonomy shared across the toolkit.

Everything raised on purpose derives from RmeError so the CLI can catch one
type, print a single machine-parsable line and exit nonzero.
"""


class RmeError(Exception):
    """Base class for all errors raised by this package."""

    category = "error"


class DimensionError(RmeError):
    """Operand shapes do not line up; message names both shapes."""

    category = "dimension"


class ConfigurationError(RmeError):
    """A config value is out of its legal range (kernel size, counts, ...)."""

    category = "configuration"


class NumericError(RmeError):
    """Non-finite values or a numerically failed decomposition."""

    category = "numeric"


class TapeError(RmeError):
    """Gradient-tape misuse: stale handles, detached losses, nested tapes."""

    category = "tape"


class ContractError(RmeError):
    """An API precondition that is not a shape or config issue was violated."""

    category = "contract"


class RangeError(RmeError):
    """An index or window falls outside the addressed structure."""

    category = "range"


class DegenerateInputError(RmeError):
    """Input set too small or empty for the requested operation."""

    category = "degenerate-input"


class TrainingDivergedError(RmeError):
    """Loss became non-finite; message carries optimizer diagnostics."""

    category = "training-diverged"


class DataFormatError(RmeError):
    """A dataset or model file failed magic/version/length validation."""

    category = "data-format"
