"""Exception types shared across the toolkit."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class StepSizeError(RuntimeError):
    """The chosen time step is too coarse for the requested operation."""


class NegativeRateError(ValueError):
    """A negative decay rate reached an engine that requires positive rates."""


class ImpossibleJumpError(ValueError):
    """A jump operator annihilates the state it is applied to."""


class UndefinedSourceError(ValueError):
    """A reversed jump was requested from a source with zero occupation."""


class NumericalBlowupError(RuntimeError):
    """Integration produced non-finite values."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class PositivityError(RuntimeError):
    """A probability component turned significantly negative during integration."""

    def __init__(self, message: str, state: int | None = None, time: float | None = None):
        super().__init__(message)
        self.state = state
        self.time = time


class ConfigError(ValueError):
    """A scenario configuration failed validation."""
