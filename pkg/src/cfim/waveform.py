"""Time-domain synthesis and PAPR statistics.

Subcarrier ``i`` of block ``k`` (both 0-based) occupies FFT bin
``N*k + i``; bins past ``K*N`` are left empty.  Each chip index of a CFIM
symbol is synthesized as its own ``n_fft``-sample OFDM symbol, so a CFIM
symbol spans ``L`` consecutive chip slots and contributes ``L`` PAPR
samples.  No cyclic prefix is inserted.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import as_generator, derive_seed
from .codebook import single_user_codebook
from .config import SystemConfig
from .errors import ConfigError, UndefinedPAPRError
from .modem import map_block, psk_modulate, spread

SCHEMES = ("cfim", "ofdm", "ofdm-im")


def subcarrier_bin(block: int, subcarrier: int, n_subcarriers: int) -> int:
    return n_subcarriers * block + subcarrier


def synthesize_chip_slot(freq_bins, oversample: int = 1) -> np.ndarray:
    """Unitary inverse DFT of the bin vector(s) along the last axis.

    With ``oversample > 1`` the spectrum is zero-padded above the last bin
    and the result is scaled to keep Parseval's identity.
    """
    x = np.asarray(freq_bins, dtype=complex)
    if oversample != 1:
        pad = [(0, 0)] * (x.ndim - 1) + [(0, x.shape[-1] * (oversample - 1))]
        x = np.pad(x, pad)
    return np.fft.ifft(x, axis=-1, norm="ortho")


def measure_papr(samples) -> np.ndarray | float:
    """``max |x|^2 / mean |x|^2`` along the last axis."""
    p = np.abs(np.asarray(samples)) ** 2
    mean = p.mean(axis=-1)
    if p.size == 0 or np.any(mean == 0):
        raise UndefinedPAPRError("PAPR is undefined for an all-zero signal")
    out = p.max(axis=-1) / mean
    return float(out) if np.ndim(out) == 0 else out


def cfim_bins(config: SystemConfig, bits, n_fft: int) -> np.ndarray:
    """Map ``(..., K, p)`` bits to ``(..., L, n_fft)`` chip-slot spectra."""
    k, n = config.n_blocks, config.n_subcarriers
    if k * n > n_fft:
        raise ConfigError("K", f"K*N = {k * n} subcarriers do not fit in an FFT of {n_fft}")
    block = map_block(bits, config, es=1.0)
    chips = spread(block, single_user_codebook(config), n)   # (..., K, N, L)
    lead = chips.shape[:-3]
    per_slot = np.moveaxis(chips.reshape(lead + (k * n, config.spreading_factor)), -1, -2)
    out = np.zeros(lead + (config.spreading_factor, n_fft), dtype=complex)
    out[..., : k * n] = per_slot
    return out


def ofdm_bins(config: SystemConfig, bits, n_fft: int) -> np.ndarray:
    """All ``K*N`` bins carry an M-PSK symbol; ``bits`` is ``(..., K*N, log2 M)``."""
    kn = config.n_blocks * config.n_subcarriers
    out = np.zeros(bits.shape[:-2] + (n_fft,), dtype=complex)
    out[..., :kn] = psk_modulate(bits, config.mod_order)
    return out


def ofdm_im_patterns(n_subcarriers: int, active: int) -> np.ndarray:
    """First ``2**floor(log2 C(N, g))`` active-subcarrier sets, lexicographic."""
    combos = list(itertools.combinations(range(n_subcarriers), active))
    usable = 1 << (len(combos).bit_length() - 1)
    return np.array(combos[:usable], dtype=np.int64)


def ofdm_im_bins(config: SystemConfig, pattern_index, bits, n_fft: int, active: int) -> np.ndarray:
    """OFDM-IM spectra; ``pattern_index`` is ``(..., K)``, ``bits`` is ``(..., K, g, log2 M)``."""
    k, n = config.n_blocks, config.n_subcarriers
    patterns = ofdm_im_patterns(n, active)
    chosen = patterns[pattern_index]                          # (..., K, g)
    bins = chosen + n * np.arange(k)[:, None]
    out = np.zeros(pattern_index.shape[:-1] + (n_fft,), dtype=complex)
    np.put_along_axis(out, bins.reshape(bins.shape[:-2] + (-1,)),
                      psk_modulate(bits, config.mod_order).reshape(bins.shape[:-2] + (-1,)),
                      axis=-1)
    return out


def _papr_chunk(scheme, config, n_trials, seed, n_fft, active, oversample):
    rng = as_generator(seed)
    p1 = config.bits.mod_bits
    if scheme == "cfim":
        bits = rng.integers(0, 2, (n_trials, config.n_blocks, config.bits.total))
        bins = cfim_bins(config, bits, n_fft).reshape(-1, n_fft)
    elif scheme == "ofdm":
        kn = config.n_blocks * config.n_subcarriers
        bins = ofdm_bins(config, rng.integers(0, 2, (n_trials, kn, p1)), n_fft)
    else:
        n_patterns = len(ofdm_im_patterns(config.n_subcarriers, active))
        pattern = rng.integers(0, n_patterns, (n_trials, config.n_blocks))
        bits = rng.integers(0, 2, (n_trials, config.n_blocks, active, p1))
        bins = ofdm_im_bins(config, pattern, bits, n_fft, active)
    return measure_papr(synthesize_chip_slot(bins, oversample))


@dataclass(frozen=True)
class CCDFResult:
    scheme: str
    thresholds_db: np.ndarray
    ccdf: np.ndarray
    papr: np.ndarray

    @property
    def papr_db(self) -> np.ndarray:
        return 10 * np.log10(self.papr)

    def quantile_db(self, prob: float) -> float:
        """PAPR level (dB) exceeded with probability ``prob``."""
        return float(10 * np.log10(np.quantile(self.papr, 1.0 - prob)))


def papr_ccdf(scheme: str, config: SystemConfig, thresholds_db, trials: int = 10_000,
              seed: int = 0, n_fft: int = 64, active: int = 2, oversample: int = 1,
              chunk: int = 1000, executor=None) -> CCDFResult:
    """Empirical ``P(PAPR > threshold)`` over ``trials`` random transmissions.

    CFIM trials contribute one PAPR sample per chip slot; OFDM and OFDM-IM
    trials one per OFDM symbol.  Chunks of ``chunk`` trials use seeds
    derived from ``seed`` and the chunk number, so the result does not
    depend on ``executor``.
    """
    scheme = scheme.lower()
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")
    if trials < 1000:
        raise ValueError(f"trials must be >= 1000, got {trials}")
    sizes = [min(chunk, trials - s) for s in range(0, trials, chunk)]
    scheme_key = SCHEMES.index(scheme)

    def run(c):
        return _papr_chunk(scheme, config, sizes[c], derive_seed(seed, scheme_key, c),
                           n_fft, active, oversample)

    mapper = executor.map if executor is not None else map
    papr = np.concatenate(list(mapper(run, range(len(sizes)))))
    thresholds = np.asarray(thresholds_db, dtype=float)
    levels = 10.0 ** (thresholds / 10.0)
    ccdf = (papr[None, :] > levels[:, None]).mean(axis=1)
    return CCDFResult(scheme, thresholds, ccdf, papr)


def papr_ceiling_db(config: SystemConfig) -> float:
    return 10 * math.log10(config.n_blocks * config.spreading_factor)
