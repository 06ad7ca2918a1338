"""Exception types shared across the simulation modules."""


class SimulationError(Exception):
    """Base class for runtime failures of the simulator."""


class LeakageError(SimulationError):
    """Probability would leave the truncated Fock basis (basis too small)."""


class OrthogonalOutcomeError(SimulationError):
    """Projection onto a state orthogonal to the current one (norm below 1e-12)."""


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""
