"""Exception and warning types shared across the package."""


class GraphNLSError(Exception):
    """Base class for all errors raised by graphnls."""


# ---------------------------------------------------------------------------
# graph construction and vertex conditions

class DisconnectedGraphError(GraphNLSError):
    """The graph is not connected (or has an isolated vertex)."""


class DanglingEdgeError(GraphNLSError):
    """An edge endpoint references a vertex that does not exist."""


class NonPositiveLengthError(GraphNLSError):
    """A finite edge length or truncation length is not strictly positive."""


class InvalidExponentError(GraphNLSError):
    """The nonlinearity exponent must satisfy p > 1."""


class UnsupportedTopologyError(GraphNLSError):
    """Loop edges and multiple edges between one vertex pair are rejected."""


class ZeroAlphaError(GraphNLSError):
    """alpha = 0 has no projector form; use the Kirchhoff flag instead."""


class DimensionMismatchError(GraphNLSError):
    """Vertex-condition matrices do not match the vertex degree."""


class ComplexConditionError(GraphNLSError):
    """Only real symmetric vertex conditions are accepted by the solvers."""


class InvalidConditionError(GraphNLSError):
    """A vertex condition failed its projector/coupling validation."""


# ---------------------------------------------------------------------------
# discretization

class MeshTooCoarseError(GraphNLSError):
    """Mesh size exceeds the shortest edge length."""


class SystemMismatchError(GraphNLSError):
    """A grid function was used with a system it does not belong to."""


# ---------------------------------------------------------------------------
# solvers

class EigensolveError(GraphNLSError):
    """The generalized eigensolver did not converge."""


class NoDescentError(GraphNLSError):
    """Backtracking line search could not find a decreasing step."""


class MaxIterationsError(GraphNLSError):
    """Iteration limit reached before the tolerance was met."""


class ZeroMassError(GraphNLSError):
    """Operation requires a function with nonzero mass."""


class NoConvergenceError(GraphNLSError):
    """Newton iteration failed to converge."""


class ConvergedToZeroError(GraphNLSError):
    """Newton iteration collapsed onto the trivial zero solution."""


# ---------------------------------------------------------------------------
# problem domain

class FrequencyOutOfRangeError(GraphNLSError):
    """Frequency outside the range that admits nontrivial states."""


class NegativeOmegaError(GraphNLSError):
    """Half-line profiles require omega >= 0."""


class SupercriticalZeroFrequencyError(GraphNLSError):
    """No nontrivial zero-frequency half-line profile exists for p >= 5."""


class DivergentMassError(GraphNLSError):
    """The requested profile has infinite squared norm."""


class SupercriticalExponentError(GraphNLSError):
    """Threshold detection applies to subcritical exponents p < 5 only."""


class NoSignChangeError(GraphNLSError):
    """The multiplier does not change sign on the search bracket."""


class InsufficientSamplesError(GraphNLSError):
    """Too few curve samples inside the asymptotic fit window."""


# ---------------------------------------------------------------------------
# input / output

class SchemaError(GraphNLSError):
    """Graph file violates the documented schema (unknown key, bad type)."""


class SemanticError(GraphNLSError):
    """Graph file is well-formed but internally inconsistent."""


class GraphFileSyntaxError(GraphNLSError):
    """Graph file is not valid JSON."""


class CsvWriteError(GraphNLSError):
    """Failed to write a CSV result file."""


# ---------------------------------------------------------------------------
# warnings

class NonNegativeSpectrumWarning(UserWarning):
    """Constrained minimization on a graph whose spectrum bottom is >= 0."""


class TruncationWarning(UserWarning):
    """Significant mass near the truncated far ends; results suspect."""


class SmallnessViolatedWarning(UserWarning):
    """Requested mass is outside the small-mass multiplier regime."""
