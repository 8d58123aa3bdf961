"""Exception hierarchy shared by all pevsel modules.

The CLI maps these onto exit codes: contract/usage problems exit 1, data
problems exit 2, internal numerical failures exit 3.
"""


class PevselError(Exception):
    """Base class for all pevsel exceptions."""


class ContractError(PevselError, ValueError):
    """A caller violated a documented precondition (bad argument, misuse)."""


class DataError(PevselError, ValueError):
    """Input data is structurally valid but semantically unusable."""


class FormatError(DataError):
    """An input file could not be parsed under its declared format."""


class DegenerateInputError(DataError):
    """Input carries no usable signal (constant phenotype, all-zero-variance)."""


class RefusalError(ContractError):
    """A request exceeds a configured enumeration or size limit."""


class NumericalError(PevselError, ArithmeticError):
    """An internal numerical routine failed to produce a finite result."""
