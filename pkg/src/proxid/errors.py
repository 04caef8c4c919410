"""Exception types shared across the package."""


class ProxidError(Exception):
    """Base class for every package-specific error."""


class GraphError(ProxidError):
    """Malformed graph or invalid arguments to a graph operation."""


class ModelError(ProxidError):
    """Malformed discrete model."""


class StateSpaceError(ModelError):
    """Joint state space exceeds the dense-table budget."""


class ZeroMassError(ProxidError):
    """Conditioning on, or dividing by, a zero-probability state."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


class PositivityViolation(ProxidError):
    """A positivity requirement fails numerically (denominator below floor)."""


class FixNotApplicable(GraphError):
    """Fix requested on a vertex that is not fixable in the current graph."""

    def __init__(self, vertex: str, witness):
        self.vertex = vertex
        # witness: the offending dis(b) & de(b) overlap beyond {b}
        self.witness = tuple(witness)
        super().__init__(
            f"{vertex} is not fixable: dis({vertex}) meets de({vertex}) at "
            f"{{{', '.join(self.witness)}}}"
        )


class NoSolutionError(ProxidError):
    """A bridge equation has no solution within tolerance."""

    def __init__(self, message: str, residual: float, tol: float):
        super().__init__(f"{message} (residual {residual:.3e} > tol {tol:.3e})")
        self.residual = residual
        self.tol = tol


class ConditionFailed(ProxidError):
    """A kernel operation's preconditions do not hold; carries the report."""

    def __init__(self, report):
        self.report = report
        super().__init__(report.summary())


class BudgetExhausted(ProxidError):
    """The identification search ran out of its node budget."""


class ParseError(ProxidError):
    """Malformed graph/model file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class EvaluationError(ProxidError):
    """An identification expression cannot be evaluated on the given table."""
