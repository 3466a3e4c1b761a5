"""Exception hierarchy shared across the package."""


class FluxLatticeError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FluxLatticeError, ValueError):
    """Invalid configuration or precondition violation (CLI exit code 2)."""


class NumericalError(FluxLatticeError, RuntimeError):
    """Numerical failure such as trace drift or gap closure (CLI exit code 3)."""
