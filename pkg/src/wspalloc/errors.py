"""Exception types raised by the solver."""


class WspError(Exception):
    """Base class for all solver errors."""


class InvalidInput(WspError, ValueError):
    pass


class InvalidAllocation(WspError, ValueError):
    pass


class InvalidScenario(WspError, ValueError):
    pass


class Infeasible(WspError):
    """The link pair admits no allocation satisfying the QoS and power limits."""


class Unconverged(WspError):
    """Newton iteration hit ``max_iter``; ``bracket`` holds the last bracket."""

    def __init__(self, message, bracket=None, trace=None):
        super().__init__(message)
        self.bracket = bracket
        self.trace = trace


class InternalInconsistency(WspError, RuntimeError):
    pass
