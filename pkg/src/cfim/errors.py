"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A system parameter is invalid.

    ``field`` names the offending parameter (``"M"``, ``"L"``, ...) so the
    CLI can report it.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class CapacityError(ConfigError):
    """Not enough orthogonal codes to give every user its own codebook."""


class FramingError(ValueError):
    """Array shapes or bit counts do not match the configuration."""


class DegenerateChannelError(ValueError):
    """Equalization was asked to divide by a zero channel coefficient."""


class InsufficientSamplesError(RuntimeError):
    """A Monte Carlo estimator retained no usable samples."""


class UndefinedPAPRError(ValueError):
    """PAPR of an all-zero signal was requested."""
