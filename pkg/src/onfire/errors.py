"""Exception types shared across the package."""


class OnFireError(Exception):
    """Base class for all package errors."""


class ContractError(OnFireError, ValueError):
    """A documented precondition was violated by the caller."""


class ShapeError(ContractError):
    """Tensor extents are inconsistent with the operation's contract."""


class NumericError(OnFireError, ArithmeticError):
    """A computation produced (or received) NaN/infinity."""


class GraphValidationError(OnFireError, ValueError):
    """An architecture graph failed structural or shape validation."""


class ManifestParseError(OnFireError, ValueError):
    """An architecture manifest could not be parsed."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class CheckpointError(OnFireError, ValueError):
    """A checkpoint file is malformed or incompatible."""


class UnknownArchitectureError(OnFireError, KeyError):
    """Requested architecture name is not in the catalog."""

    def __init__(self, name: str, valid: list):
        self.name = name
        self.valid = sorted(valid)
        super().__init__(f"unknown architecture {name!r}; valid names: {', '.join(self.valid)}")

    def __str__(self) -> str:  # KeyError quotes its arg otherwise
        return self.args[0]
