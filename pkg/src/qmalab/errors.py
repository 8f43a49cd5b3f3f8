"""Exception hierarchy shared by all qmalab modules."""


class QMAError(Exception):
    """Base class for library errors."""


class StructureError(QMAError):
    """Input has a shape for which the requested structure cannot exist."""


class ValidationError(QMAError):
    """Input violates a documented precondition (Hermitian, antisymmetric, ...)."""


class NotAMetricForm(ValidationError):
    """A (2,0)-form that is not q-positive was used where a metric is required."""


class ChartError(QMAError):
    """Chart construction or inversion failed."""


class ConeExitError(QMAError):
    """An iterate left the q-positive cone."""


class StageFailure(QMAError):
    """A continuity stage did not converge."""

    def __init__(self, message, state=None, diagnostics=None):
        super().__init__(message)
        self.state = state
        self.diagnostics = diagnostics or {}
