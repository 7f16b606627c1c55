"""Exception types shared across the package."""


class MtbranchError(Exception):
    """Base class for all library errors."""


class SpecError(MtbranchError, ValueError):
    """Invalid process specification, marked sets, mark values, or arguments."""


class ConvergenceError(MtbranchError, RuntimeError):
    """An iterative solver failed to reach its requested tolerance."""


class StepSizeError(MtbranchError, RuntimeError):
    """ODE step too large: the out-of-box excursion exceeded the fail threshold."""


class HorizonCapError(ConvergenceError):
    """Long-time flow limit hit the horizon cap before settling.

    Carries both the last flow checkpoint and the fixed-point root so the
    caller can inspect how far apart they still are.
    """

    def __init__(self, message: str, flow_value, root_value):
        super().__init__(message)
        self.flow_value = tuple(flow_value)
        self.root_value = tuple(root_value)


class SimulationError(MtbranchError, ValueError):
    """Invalid simulation request, e.g. stepping an absorbed chain."""
