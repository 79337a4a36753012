"""Exception types shared across opttune modules."""


class OptTuneError(Exception):
    """Base class for all opttune domain errors."""


class DescriptorError(OptTuneError):
    """Malformed or invalid parameter-space descriptor."""


class ValidationError(OptTuneError):
    """A value violates a domain invariant. Message names the offending key."""


class RulesError(OptTuneError):
    """Malformed log-parsing rules file."""


class AdapterError(OptTuneError):
    """Malformed solver adapter or unresolved command placeholder."""


class TaskError(OptTuneError):
    """Task lifecycle violation (illegal transition, backend failure, ...)."""


class UnknownTaskError(TaskError):
    """No task with the given id exists."""


class SanitizerError(OptTuneError):
    """Model file parse error. Carries line/column context in the message."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column
