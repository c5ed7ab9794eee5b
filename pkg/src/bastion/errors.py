"""Exception hierarchy shared by every bastion module."""


class BastionError(Exception):
    """Base class for all library errors."""


class DimensionError(BastionError, ValueError):
    """Array shapes do not match the operation's contract."""


class InsufficientDataError(BastionError, ValueError):
    """Too few (or badly ordered) samples to form a quadrature."""


class IntegrationBlowupError(BastionError, ArithmeticError):
    """A non-finite value appeared inside an integrator stage."""

    def __init__(self, t, stage, message=None):
        self.t = float(t)
        self.stage = int(stage)
        super().__init__(message or f"non-finite derivative at t={self.t:.6g} (stage {self.stage})")


class UnsafeStateError(BastionError, ValueError):
    """The barrier was evaluated at a state with h(x) <= 0."""

    def __init__(self, h_value):
        self.h = float(h_value)
        super().__init__(f"state outside the safe interior: h(x) = {self.h:.6g}")


class BarrierDomainError(BastionError, ValueError):
    """z + beta0 left (0, inf), so the barrier gain is undefined."""

    def __init__(self, beta_value):
        self.beta = float(beta_value)
        super().__init__(f"barrier argument z + beta0 = {self.beta:.6g} is not positive")


class DegenerateGainError(BastionError, ArithmeticError):
    """mu' Gamma mu vanished in the boundary branch of the projection."""


class ConfigError(BastionError, ValueError):
    """Scenario configuration failed validation."""

    def __init__(self, message, path=None):
        self.path = path
        where = f" at '{path}'" if path else ""
        super().__init__(f"{message}{where}")
