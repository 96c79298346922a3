"""Exception types. Each carries a short machine-readable ``code`` used in run manifests."""


class SSLError(Exception):
    code = "error"


class InvalidParams(SSLError, ValueError):
    code = "invalid_params"


class ZeroCoupling(SSLError, ValueError):
    code = "zero_coupling"


class SingularRegime(SSLError, ArithmeticError):
    code = "singular_regime"


class NotApplicable(SSLError, ValueError):
    code = "not_applicable"


class UnstableStep(SSLError, FloatingPointError):
    code = "unstable_step"


class ScheduleGap(SSLError, ValueError):
    code = "schedule_gap"


class EmptyRecord(SSLError, ValueError):
    code = "empty_record"


class FlatLandscape(SSLError, RuntimeError):
    code = "flat_landscape"


class Unidentifiable(SSLError, RuntimeError):
    code = "unidentifiable"


class InsufficientCycles(SSLError, RuntimeError):
    code = "insufficient_cycles"


class ParseError(SSLError, ValueError):
    code = "parse_error"


class ValidationError(SSLError, ValueError):
    code = "validation_error"

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class WeakProbeWarning(UserWarning):
    """Probe amplitude is not small against the coupling fields."""


class MaxIterationsWarning(RuntimeWarning):
    """Optimizer hit its iteration cap; the best point so far is returned."""
