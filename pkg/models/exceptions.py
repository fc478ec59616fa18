class TrapSimError(Exception):
    """Base exception for trap simulation errors.

    ``category`` selects the CLI exit code: ``config`` -> 2,
    ``numerical`` -> 3, ``domain`` -> 4.
    """

    category = "numerical"


class ConfigError(TrapSimError):
    category = "config"


class NumericalError(TrapSimError):
    category = "numerical"


class ModelDomainError(TrapSimError):
    category = "domain"


class LayoutError(ConfigError):
    pass


class UnknownElectrodeError(ConfigError):
    pass


class InfeasibleBoundsError(ConfigError):
    pass


class DomainError(ModelDomainError):
    """Evaluation point lies on or below the electrode plane."""


class LaplaceViolationError(ModelDomainError):
    pass


class NonStationaryPointError(ModelDomainError):
    pass


class UnstableModeError(ModelDomainError):
    pass


class NoEquilibriumError(ModelDomainError):
    pass


class UnstableEquilibriumError(ModelDomainError):
    pass


class BetaRangeError(ModelDomainError):
    pass


class IonEscapedError(ModelDomainError):
    def __init__(self, message: str, exit_time: float, trajectory=None):
        super().__init__(message)
        self.exit_time = exit_time
        self.trajectory = trajectory


class NoNullError(NumericalError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class TargetUnreachableError(NumericalError):
    pass


class CircuitSolveError(NumericalError):
    pass


class IntegrationError(NumericalError):
    pass


class FitError(NumericalError):
    pass


class NonThermalError(NumericalError):
    pass
