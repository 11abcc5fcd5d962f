"""Code-frequency index modulation (CFIM) link simulator and analysis tools."""

__version__ = "0.1.0"

from .config import BitBudget, EnergyBudget, SystemConfig, calibrate_energy, derive_bit_budget
from .errors import (CapacityError, ConfigError, DegenerateChannelError, FramingError,
                     InsufficientSamplesError, UndefinedPAPRError)

__all__ = [
    "BitBudget",
    "CapacityError",
    "ConfigError",
    "DegenerateChannelError",
    "EnergyBudget",
    "FramingError",
    "InsufficientSamplesError",
    "SystemConfig",
    "UndefinedPAPRError",
    "calibrate_energy",
    "derive_bit_budget",
]
