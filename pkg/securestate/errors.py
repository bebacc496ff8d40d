"""
Exception hierarchy shared by the services and the CLI.

Every error carries a list of structured ``details`` dictionaries
(``field`` / ``message`` plus optional context) so the CLI can print one
diagnostic line per problem.
"""
from typing import Any, Dict, List, Optional, Sequence


class SecureStateError(Exception):
    """Base class for all library errors"""

    def __init__(self, message: str, details: Optional[List[Dict[str, Any]]] = None):
        self.message = message
        self.details = details or [{"field": None, "message": message}]
        super().__init__(message)


class DimensionError(SecureStateError):
    """Raised when matrix / vector shapes or sensor indices are inconsistent"""


class CombinatoricsError(SecureStateError):
    """Raised on invalid subset-enumeration or binomial arguments"""


class WindowError(SecureStateError):
    """Raised when a measurement window does not fit the available data"""


class PreconditionError(SecureStateError):
    """Raised when a reconstruction method's preconditions do not hold"""


class NotSparseObservableError(PreconditionError):
    """Raised when some deleted-row subset leaves (A, C(S)) unobservable"""

    def __init__(self, s: int, subset: Sequence[int]):
        self.s = s
        self.subset = tuple(subset)
        super().__init__(
            f"system is not {s}-sparse observable: deleting sensors {list(self.subset)} loses observability",
            [{"field": "system", "message": "not sparse observable", "s": s, "subset": list(self.subset)}],
        )


class ConfigError(SecureStateError):
    """Raised when a scenario file fails to parse or validate"""

    def __init__(self, details: List[Dict[str, Any]]):
        first = details[0]["message"] if details else "invalid scenario"
        super().__init__(f"Scenario validation failed: {first}", details)


class ExpressionError(ConfigError):
    """Raised when a signal expression over k is malformed or uses disallowed names"""

    def __init__(self, expression: str, message: str, field: Optional[str] = None):
        self.expression = expression
        super().__init__([{"field": field, "value": expression, "message": message}])
