"""Exception types raised across the toolkit."""


class EvalkitError(Exception):
    """Base class for toolkit errors."""


class DomainError(EvalkitError, ValueError):
    """An argument is outside the operation's domain."""


class EmptyInputError(DomainError):
    pass


class SchemaError(EvalkitError, ValueError):
    """A column mapping does not match the input."""


class RowError(EvalkitError, ValueError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class IneligibleProfileError(DomainError):
    """A user profile is too short for the hold-out plan."""


class DegenerateFoldError(EvalkitError):
    pass


class ContractError(EvalkitError, ValueError):
    """Inputs violate an interface contract (shapes, masks, model state)."""


class ColdStartError(EvalkitError):
    """A personalised model was asked to score an empty fold-in."""


class ResourceError(EvalkitError, MemoryError):
    pass


class OptimizationError(EvalkitError, RuntimeError):
    pass


class StudyError(EvalkitError, RuntimeError):
    """A nested-CV study failed; carries the outer fold index."""

    def __init__(self, fold, cause):
        super().__init__(f"fold {fold}: {cause!r}")
        self.fold = fold
        self.cause = cause


class ConvergenceWarning(UserWarning):
    pass
