"""Exception hierarchy shared by all convoscribe modules.

The CLI maps these onto process exit codes: validation and parse errors
exit 2, model-contract violations exit 3, I/O failures exit 4.
"""


class ConvoscribeError(Exception):
    """Base class for all toolkit errors."""


class ParseError(ConvoscribeError):
    """A file could not be decoded; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ConvoscribeError):
    """Structurally decoded data violates a type invariant."""


class ContractError(ConvoscribeError):
    """A caller or a pluggable model broke an interface contract."""


class ModelContractError(ContractError):
    """A model implementation returned invalid distributions or attention."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class UndefinedRateError(ConvoscribeError):
    """A rate with a zero denominator; never silently reported as 0 or 1."""


class DataError(ConvoscribeError):
    """Supplied data is incomplete for the requested operation."""


class OracleGuardError(ConvoscribeError):
    """A brute-force oracle refused an input beyond its size guard."""
