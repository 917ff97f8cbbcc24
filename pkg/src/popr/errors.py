"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PoprError(Exception):
    """Base class for every error raised by popr."""


class ValidationError(PoprError, ValueError):
    """Invalid argument, configuration or data."""


class DimensionMismatchError(ValidationError):
    """State or action vector has the wrong shape."""


class ActionSpaceError(ValidationError):
    """An action does not belong to the declared action space."""


class DatasetFormatError(PoprError):
    """A dataset file could not be parsed.

    ``line`` is the 1-based line number of the offending record, when known.
    """

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ExternalPolicyError(PoprError):
    """Failure talking to an external policy subprocess."""


class PolicyEvaluationError(PoprError):
    """Wraps a failure raised while sampling the posterior of one policy."""

    def __init__(self, policy_id: str, cause: BaseException):
        self.policy_id = policy_id
        self.cause = cause
        super().__init__(f"policy {policy_id!r}: {cause}")
