"""CFIM block mapping, spreading, despreading, square-law detection and demapping.

All functions broadcast over leading batch axes: a bit array of shape
``(..., p)`` maps to a batch of blocks, and a received array of shape
``(..., N, L)`` despreads to ``(..., N, Nc)``.

Indices are 0-based.  A block whose code-index bits read ``v`` (big-endian)
uses code row ``v``; the subcarrier is chosen the same way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import Codebook
from .config import SystemConfig
from .errors import DegenerateChannelError, FramingError


def gray_encode(m):
    m = np.asarray(m)
    return m ^ (m >> 1)


def gray_decode(g):
    m = np.array(g, copy=True)
    shift = m >> 1
    while np.any(shift):
        m ^= shift
        shift >>= 1
    return m


def bits_to_int(bits) -> np.ndarray:
    """Big-endian value of the last axis."""
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.shape[-1]
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    return bits @ weights if n else np.zeros(bits.shape[:-1], dtype=np.int64)


def int_to_bits(values, n_bits: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    shifts = np.arange(n_bits - 1, -1, -1, dtype=np.int64)
    return ((values[..., None] >> shifts) & 1).astype(np.int8)


def psk_modulate(bits, mod_order: int, es: float = 1.0) -> np.ndarray:
    """Gray-coded M-PSK; point ``m`` sits at angle ``2*pi*m/M`` with energy ``es``."""
    m = gray_decode(bits_to_int(bits))
    return np.sqrt(es) * np.exp(2j * np.pi * m / mod_order)


def psk_demodulate(z, mod_order: int) -> np.ndarray:
    """Nearest-phase decision, returned as Gray label bits.

    A point exactly halfway between two constellation points goes to the
    lower symbol index.
    """
    n_bits = mod_order.bit_length() - 1
    x = np.mod(np.angle(z) * mod_order / (2 * np.pi), mod_order)
    m = np.mod(np.ceil(x - 0.5), mod_order).astype(np.int64)
    return int_to_bits(gray_encode(m), n_bits)


@dataclass(frozen=True)
class MappedBlock:
    """Transmit-side content of one block (or a batch of them)."""

    symbol: np.ndarray
    code_index: np.ndarray
    subcarrier_index: np.ndarray
    bits: np.ndarray


def map_block(bits, config: SystemConfig, es: float = 1.0) -> MappedBlock:
    """Split ``p`` bits into (symbol | code | subcarrier) fields."""
    bits = np.asarray(bits, dtype=np.int8)
    budget = config.bits
    if bits.ndim == 0 or bits.shape[-1] != budget.total:
        raise FramingError(f"expected {budget.total} bits per block, got shape {bits.shape}")
    p1, p2 = budget.mod_bits, budget.code_bits
    return MappedBlock(
        symbol=psk_modulate(bits[..., :p1], config.mod_order, es),
        code_index=bits_to_int(bits[..., p1:p1 + p2]),
        subcarrier_index=bits_to_int(bits[..., p1 + p2:]),
        bits=bits,
    )


def spread(block: MappedBlock, codebook: Codebook, n_subcarriers: int) -> np.ndarray:
    """Place ``symbol * code`` on the active subcarrier row; other rows stay zero.

    Returns an array of shape ``(..., n_subcarriers, L)``.
    """
    symbol = np.asarray(block.symbol)
    chips = symbol[..., None] * codebook.codes[block.code_index]
    out = np.zeros(symbol.shape + (n_subcarriers, codebook.length), dtype=complex)
    rows = np.asarray(block.subcarrier_index)[..., None, None]
    np.put_along_axis(out, np.broadcast_to(rows, symbol.shape + (1, codebook.length)),
                      chips[..., None, :], axis=-2)
    return out


def despread(received, codebook: Codebook) -> np.ndarray:
    """Correlate every subcarrier row against every code: ``Y @ C^H``."""
    received = np.asarray(received)
    if received.ndim < 2 or received.shape[-1] != codebook.length:
        raise FramingError(
            f"received rows have {received.shape[-1] if received.ndim else 0} chips, "
            f"codebook has length {codebook.length}"
        )
    return received @ codebook.codes.conj().T


def sled_detect(despread_out):
    """Square-law energy detection over all (subcarrier, code) cells.

    Returns ``(i_hat, j_hat, zeta)`` where ``zeta = |X|**2``.  Ties go to
    the smallest subcarrier, then the smallest code.
    """
    zeta = np.abs(np.asarray(despread_out)) ** 2
    n_sub, n_codes = zeta.shape[-2:]
    flat = np.argmax(zeta.reshape(zeta.shape[:-2] + (n_sub * n_codes,)), axis=-1)
    return flat // n_codes, flat % n_codes, zeta


def demap_block(despread_out, i_hat, j_hat, h, config: SystemConfig) -> np.ndarray:
    """Recover ``p`` bits from the detected cell.

    The selected entry is equalized by dividing by ``h`` (the channel
    coefficient of subcarrier ``i_hat``) and demodulated even if the
    detected indices are wrong.
    """
    h = np.asarray(h)
    if np.any(h == 0):
        raise DegenerateChannelError("channel coefficient is zero; cannot equalize")
    budget = config.bits
    x = np.asarray(despread_out)
    i_hat = np.asarray(i_hat)
    j_hat = np.asarray(j_hat)
    sel = np.take_along_axis(
        np.take_along_axis(x, i_hat[..., None, None], axis=-2)[..., 0, :],
        j_hat[..., None], axis=-1,
    )[..., 0]
    mod = psk_demodulate(sel / h, config.mod_order)
    return np.concatenate(
        [mod, int_to_bits(j_hat, budget.code_bits), int_to_bits(i_hat, budget.subcarrier_bits)],
        axis=-1,
    )
