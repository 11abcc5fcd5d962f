"""System parameters, bit budget and energy/SNR accounting.

Every other module takes a :class:`SystemConfig`.  Energies are relative:
the energy per information bit ``ebs`` is fixed at 1 and the noise density
follows from the requested Ebs/N0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .errors import CapacityError, ConfigError

# Short keys used by the flat text format and the CLI flags.
SHORT_KEYS = {
    "K": "n_blocks",
    "N": "n_subcarriers",
    "Nc": "n_codes",
    "M": "mod_order",
    "L": "spreading_factor",
    "U": "n_users",
}


def is_power_of_two(n) -> bool:
    return isinstance(n, int) and not isinstance(n, bool) and n >= 1 and n & (n - 1) == 0


def log2_exact(n: int) -> int:
    return n.bit_length() - 1


@dataclass(frozen=True)
class BitBudget:
    """Bits carried by one block, split by what carries them.

    ``mod_bits`` ride on the PSK symbol, ``code_bits`` select the spreading
    code and ``subcarrier_bits`` select the active subcarrier.
    """

    mod_bits: int
    code_bits: int
    subcarrier_bits: int

    def __post_init__(self):
        for name in ("mod_bits", "code_bits", "subcarrier_bits"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ConfigError(name, f"must be a nonnegative integer, got {v!r}")

    @property
    def mapped_bits(self) -> int:
        return self.code_bits + self.subcarrier_bits

    @property
    def total(self) -> int:
        return self.mod_bits + self.code_bits + self.subcarrier_bits


def derive_bit_budget(mod_order: int, n_subcarriers: int, n_codes: int) -> BitBudget:
    """Bit split for M-PSK over ``n_subcarriers`` subcarriers and ``n_codes`` codes."""
    for key, v in (("M", mod_order), ("N", n_subcarriers), ("Nc", n_codes)):
        if not is_power_of_two(v):
            raise ConfigError(key, f"must be a power of two, got {v!r}")
    if mod_order < 2:
        raise ConfigError("M", f"modulation order must be >= 2, got {mod_order}")
    return BitBudget(log2_exact(mod_order), log2_exact(n_codes), log2_exact(n_subcarriers))


@dataclass(frozen=True)
class SystemConfig:
    """One CFIM parameter set, shared by all ``n_blocks`` blocks.

    Raises :class:`ConfigError` (or :class:`CapacityError`) on construction
    when an invariant is violated.
    """

    mod_order: int = 2
    n_subcarriers: int = 4
    n_codes: int = 2
    spreading_factor: int = 32
    n_blocks: int = 1
    n_users: int = 1

    def __post_init__(self):
        problems = self.violations()
        if problems:
            key, msg = problems[0]
            cls = CapacityError if key == "U" else ConfigError
            raise cls(key, msg)

    def violations(self) -> list[tuple[str, str]]:
        out = []
        for key in ("M", "N", "Nc", "L"):
            v = getattr(self, SHORT_KEYS[key])
            if not is_power_of_two(v):
                out.append((key, f"must be a power of two, got {v!r}"))
        if is_power_of_two(self.mod_order) and self.mod_order < 2:
            out.append(("M", f"modulation order must be >= 2, got {self.mod_order}"))
        for key in ("K", "U"):
            v = getattr(self, SHORT_KEYS[key])
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                out.append((key, f"must be a positive integer, got {v!r}"))
        if not out and self.n_users * self.n_codes > self.spreading_factor:
            max_users = self.spreading_factor // self.n_codes
            out.append((
                "U",
                f"{self.n_users} users x {self.n_codes} codes exceed the "
                f"{self.spreading_factor} available codes; at most {max_users} "
                "users are supported",
            ))
        return out

    @property
    def bits(self) -> BitBudget:
        return derive_bit_budget(self.mod_order, self.n_subcarriers, self.n_codes)

    def to_short(self) -> dict:
        return {k: getattr(self, v) for k, v in SHORT_KEYS.items()}

    @classmethod
    def from_short(cls, values: dict) -> SystemConfig:
        kwargs = {}
        for key, value in values.items():
            if key not in SHORT_KEYS:
                raise ConfigError(key, "unknown parameter")
            kwargs[SHORT_KEYS[key]] = value
        return cls(**kwargs)


@dataclass(frozen=True)
class EnergyBudget:
    """Energies and noise level at one operating point (``ebs`` = 1)."""

    eb: float
    ebs: float
    es: float
    n0: float
    snr_symbol: float
    ebs_over_n0_db: float = field(default=math.nan)

    def as_dict(self) -> dict:
        return asdict(self)


def calibrate_energy(budget: BitBudget, ebs_over_n0_db: float) -> EnergyBudget:
    """Energy bookkeeping at ``ebs_over_n0_db``.

    >>> e = calibrate_energy(BitBudget(1, 1, 2), 0.0)
    >>> (e.es, e.n0, e.eb)
    (1.0, 1.0, 0.25)
    """
    ebs = 1.0
    n0 = 10.0 ** (-ebs_over_n0_db / 10.0)
    es = budget.mod_bits * ebs
    eb = budget.mod_bits / budget.total * ebs if budget.total else 0.0
    snr = es / n0 if n0 > 0 else math.inf
    return EnergyBudget(eb=eb, ebs=ebs, es=es, n0=n0, snr_symbol=snr,
                        ebs_over_n0_db=float(ebs_over_n0_db))


# -- flat key=value text format -------------------------------------------

_INT_KEYS = set(SHORT_KEYS)
_FLOAT_KEYS = {"ebs_over_n0_db"}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` starts a comment) into a dict.

    Integer keys are K, N, Nc, M, L, U; ``ebs_over_n0_db`` is a float.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in _INT_KEYS:
            try:
                values[key] = int(value)
            except ValueError:
                raise ConfigError(key, f"expected an integer, got {value!r}") from None
        elif key in _FLOAT_KEYS:
            try:
                values[key] = float(value)
            except ValueError:
                raise ConfigError(key, f"expected a number, got {value!r}") from None
        else:
            raise ConfigError(key, "unknown parameter")
    return values


def format_config_text(config: SystemConfig, ebs_over_n0_db: float | None = None) -> str:
    lines = [f"{k} = {v}" for k, v in config.to_short().items()]
    if ebs_over_n0_db is not None:
        lines.append(f"ebs_over_n0_db = {ebs_over_n0_db!r}")
    return "\n".join(lines) + "\n"


def load_config(path) -> tuple[SystemConfig, dict]:
    """Read a config file; returns the config and any extra keys."""
    with open(path, encoding="utf-8") as fh:
        values = parse_config_text(fh.read())
    extras = {k: values.pop(k) for k in list(values) if k in _FLOAT_KEYS}
    return SystemConfig.from_short(values), extras
