"""Exception types shared across the simulator."""


class EvNavError(Exception):
    pass


class ConfigError(EvNavError, ValueError):
    pass


class BehindCameraError(EvNavError, ValueError):
    pass


class StreamOrderError(EvNavError, ValueError):
    """Events, spikes or estimates arrived out of time order."""


class DegenerateGeometryError(EvNavError, ValueError):
    pass


class NumericalDivergenceError(EvNavError, FloatingPointError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NoPlanError(EvNavError, ValueError):
    pass


class InfeasiblePlanError(EvNavError, ValueError):
    pass


class TrainingFailure(EvNavError, RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class ComparisonError(EvNavError, ValueError):
    pass
