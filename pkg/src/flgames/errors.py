"""Exception hierarchy shared by the solver modules."""


class DimensionError(ValueError):
    """Array shapes do not match the dynamics they are used with."""


class SolverError(RuntimeError):
    """Base class for failures that end a solve early."""

    reason = "solver_error"


class DivergenceError(SolverError):
    reason = "divergence"

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SingularityError(SolverError):
    """The decoupling matrix is not invertible (or the state is too close to that set)."""

    reason = "singularity"

    def __init__(self, message, state=None, index=None):
        super().__init__(message)
        self.state = state
        self.index = index


class LQNoSolutionError(SolverError):
    reason = "lq_no_solution"

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class LinesearchError(SolverError):
    reason = "linesearch_exhausted"


class ScenarioError(ValueError):
    """A scenario file or object violates the schema or its invariants."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class ReferenceSolveError(RuntimeError):
    """The reference solve did not converge."""
