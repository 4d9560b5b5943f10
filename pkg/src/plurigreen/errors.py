"""Exception hierarchy shared by every plurigreen module."""


class PlurigreenError(Exception):
    """Base class for all errors raised by the toolkit."""


class InvalidDomain(PlurigreenError, ValueError):
    pass


class StencilOutOfDomain(PlurigreenError):
    pass


class EvaluationAtPole(PlurigreenError, ValueError):
    pass


class InvalidSingularityData(PlurigreenError, ValueError):
    pass


class InfeasibleBackground(PlurigreenError):
    pass


class InfeasibleProblem(PlurigreenError):
    pass


class NonConvergence(PlurigreenError):
    """Iteration budget exhausted before the fixed-point tolerance was met.

    The last iterate is attached as ``last`` (a ``SolveReport`` or a raw
    array, depending on the raising solver) so callers can persist it.
    """

    def __init__(self, message, max_sweeps=None, last=None):
        super().__init__(message)
        self.max_sweeps = max_sweeps
        self.last = last


class NewtonDivergence(PlurigreenError):
    def __init__(self, message, t=None, last=None):
        super().__init__(message)
        self.t = t
        self.last = last


class PositivityLoss(PlurigreenError):
    def __init__(self, message, t=None, last=None):
        super().__init__(message)
        self.t = t
        self.last = last


class RadiusOutOfRange(PlurigreenError, ValueError):
    pass


class InsufficientRadii(PlurigreenError):
    pass


class PivotDegenerate(PlurigreenError):
    pass


class NotASection(PlurigreenError):
    pass


class HypothesisViolated(PlurigreenError):
    pass


class NotPositive(PlurigreenError):
    pass


class StageFailure(PlurigreenError):
    def __init__(self, message, stage):
        super().__init__(message)
        self.stage = stage


class GaugeFailure(PlurigreenError):
    pass


class SymmetryViolation(PlurigreenError):
    pass


class UnknownSuite(PlurigreenError):
    pass


class ConfigError(PlurigreenError):
    """Any problem with a run configuration (maps to exit code 2)."""


class ConfigParseError(ConfigError):
    def __init__(self, message, line=None, column=None, expected=None):
        super().__init__(message)
        self.line = line
        self.column = column
        self.expected = expected


class ConfigValidationError(ConfigError):
    """Carries every violation found, as a list of ``(field, message)``."""

    def __init__(self, violations):
        self.violations = list(violations)
        text = "; ".join(f"{f}: {m}" for f, m in self.violations)
        super().__init__(text or "invalid configuration")
