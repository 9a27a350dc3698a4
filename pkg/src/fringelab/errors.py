"""Exception types shared across the toolkit."""


class ValidationError(ValueError):
    """Raised when inputs or configuration fail validation."""


class ParseError(ValidationError):
    """Raised when an input file cannot be parsed.

    Carries the offending line number when one is known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PipelineError(RuntimeError):
    """Raised when a processing stage fails on otherwise valid inputs."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")
