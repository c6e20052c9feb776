"""Exception hierarchy.

Every error carries a short machine-readable ``code`` used by the command
line front end when printing ``error: <code>: <message>``.
"""


class GraphPDEError(Exception):
    code = "runtime"


class DegenerateInput(GraphPDEError):
    code = "degenerate-input"


class ShapeMismatch(GraphPDEError, ValueError):
    code = "shape-mismatch"


class EmptyGraph(GraphPDEError):
    code = "empty-graph"


class NonFiniteGradient(GraphPDEError):
    code = "non-finite-gradient"


class NonFiniteState(GraphPDEError):
    code = "non-finite-state"


class MaxStepsExceeded(GraphPDEError):
    code = "max-steps"


class StepUnderflow(GraphPDEError):
    code = "step-underflow"


class DegenerateField(GraphPDEError):
    code = "degenerate-field"


class LinearSolveFailure(GraphPDEError):
    code = "linear-solve"


class TimeNotOnGrid(GraphPDEError, ValueError):
    code = "time-not-on-grid"


class TimeMisalignment(GraphPDEError, ValueError):
    code = "time-misalignment"


class ZeroReference(GraphPDEError, ZeroDivisionError):
    code = "zero-reference"


class FormatError(GraphPDEError):
    code = "format"
