"""Walsh-Hadamard spreading codes and per-user codebooks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .config import is_power_of_two
from .errors import CapacityError, ConfigError


def hadamard_matrix(length: int) -> np.ndarray:
    """Sylvester Hadamard matrix scaled to orthonormal rows (chips ±1/sqrt(L)).

    Row 0 is the all-positive code.
    """
    if not is_power_of_two(length):
        raise ConfigError("L", f"spreading factor must be a power of two, got {length!r}")
    return scipy.linalg.hadamard(length, dtype=float) / np.sqrt(length)


@dataclass(frozen=True)
class Codebook:
    """``n_codes`` x ``L`` matrix of real chips owned by one user.

    The same matrix is used in every block.
    """

    codes: np.ndarray
    user: int = 0

    @property
    def n_codes(self) -> int:
        return self.codes.shape[0]

    @property
    def length(self) -> int:
        return self.codes.shape[1]


def partition_codebooks(length: int, n_users: int, n_codes: int) -> list[Codebook]:
    """Give user ``u`` the contiguous rows ``[u*n_codes, (u+1)*n_codes)``."""
    if n_users * n_codes > length:
        raise CapacityError(
            "U",
            f"{n_users} users x {n_codes} codes exceed the {length} available codes; "
            f"at most {length // n_codes} users are supported",
        )
    h = hadamard_matrix(length)
    return [Codebook(h[u * n_codes:(u + 1) * n_codes].copy(), user=u) for u in range(n_users)]


def single_user_codebook(config) -> Codebook:
    return partition_codebooks(config.spreading_factor, 1, config.n_codes)[0]
