from typing import Optional, Sequence


class FormationError(Exception):
    """Base class for every error raised by shapeformation."""


class TopologyError(FormationError, ValueError):
    pass


class PreconditionError(FormationError, ValueError):
    pass


class DegenerateConfigurationError(FormationError, ArithmeticError):
    pass


class DivergenceError(FormationError, RuntimeError):
    pass


class StabilityViolationError(FormationError, RuntimeError):
    def __init__(self, message: str, time: float, before: float, after: float) -> None:
        super().__init__(message)
        self.time = time
        self.before = before
        self.after = after


class InfeasibleGainsError(FormationError, RuntimeError):
    pass


class ConfigError(FormationError, ValueError):
    def __init__(self, message: str, diagnostics: Optional[Sequence[str]] = None) -> None:
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])

    def __str__(self) -> str:
        if not self.diagnostics:
            return super().__str__()
        lines = [super().__str__()]
        lines.extend(f"  {line}" for line in self.diagnostics)
        return "\n".join(lines)
