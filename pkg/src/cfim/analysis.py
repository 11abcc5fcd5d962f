"""Closed-form and semi-analytic performance figures.

BER composition::

    P_cfim = (p1/p) P_mod + ((p2+p3)/p) P_map
    P_mod  = P_b (1 - P_ed) + P_ed / 2
    P_map  = 2**(q-1) / (2**q - 1) * P_ed,      q = p2 + p3

``P_ed`` is the symbol error probability of noncoherent ``N*Nc``-ary
orthogonal signalling in Rayleigh fading.  ``P_b`` is Gray M-PSK BER given
correct index detection, from finite angular integrals over the decision regions.

Also here: spectral efficiency, energy saving, operation counts and PAPR
ceilings for CFIM and the DS-FIM / DS-OFDM / DS-OFDM-IM baselines.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .channel import as_generator, complex_normal
from .config import BitBudget, EnergyBudget, SystemConfig, log2_exact
from .errors import InsufficientSamplesError

# -- index detection --------------------------------------------------------


def p_ed_closed_form(n_subcarriers: int, n_codes: int, snr_symbol):
    """Probability that square-law detection picks the wrong (subcarrier, code) cell.

    Evaluates ``sum_{m=1}^{n-1} (-1)**(m+1) C(n-1, m) / (1 + m + m*snr)``
    with ``n = N*Nc`` through the equivalent form
    ``1 - Gamma(n) Gamma(1+a) / Gamma(n+a)``, ``a = 1/(1+snr)``, which does
    not suffer cancellation for large ``n``.
    """
    n = n_subcarriers * n_codes
    snr = np.asarray(snr_symbol, dtype=float)
    with np.errstate(divide="ignore"):
        a = 1.0 / (1.0 + snr)
    log_pc = special.gammaln(n) + special.gammaln(1.0 + a) - special.gammaln(n + a)
    out = np.clip(-np.expm1(log_pc), 0.0, 1.0 - 1.0 / n) + 0.0
    return float(out) if out.ndim == 0 else out


def p_map(code_bits: int, subcarrier_bits: int, p_ed):
    q = code_bits + subcarrier_bits
    if q == 0:
        warnings.warn("no index bits: mapped-bit error probability taken as 0",
                      RuntimeWarning, stacklevel=2)
        return 0.0 * p_ed
    return 2 ** (q - 1) / (2 ** q - 1) * p_ed


# -- modulated bits -----------------------------------------------------------


@lru_cache(maxsize=None)
def _lee_terms(mod_order: int):
    """(weight, sign, angle) triples for the Gray M-PSK angular integrals.

    Symbol ``m`` carries Gray label ``m ^ (m >> 1)``; weights fold the
    symmetric pair ``m``, ``M-m`` together.
    """
    w = [bin(m ^ (m >> 1)).count("1") for m in range(mod_order)]
    terms = []
    for m in range(1, mod_order // 2 + 1):
        wp = w[m] if m == mod_order // 2 else w[m] + w[mod_order - m]
        for sign, k in ((1.0, 2 * m - 1), (-1.0, 2 * m + 1)):
            terms.append((wp, sign, k * math.pi / mod_order))
    return tuple(terms)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(96)


def p_b_mpsk_awgn(mod_order: int, gamma_b):
    """Gray M-PSK bit error probability in AWGN at per-bit SNR ``gamma_b``.

    Vectorized over ``gamma_b`` with fixed 96-point Gauss-Legendre
    quadrature on each angular integral.
    """
    p1 = log2_exact(mod_order)
    g = np.asarray(gamma_b, dtype=float)
    s = p1 * g[..., None]
    total = np.zeros(g.shape)
    for weight, sign, angle in _lee_terms(mod_order):
        upper = math.pi - angle
        theta = 0.5 * upper * (_GL_X + 1.0)
        sin2 = np.sin(theta) ** 2
        with np.errstate(divide="ignore", over="ignore"):
            vals = np.exp(-s * math.sin(angle) ** 2 / sin2)
        total += weight * sign * (0.5 * upper) * (vals @ _GL_W)
    out = total / (2 * math.pi * p1)
    return float(out) if out.ndim == 0 else out


def _averaged_integral(angle: float, mean_snr: float) -> float:
    # E over gamma ~ Exp(mean) of exp(-gamma c / sin^2) = sin^2 / (sin^2 + mean c)
    c = mean_snr * math.sin(angle) ** 2

    def f(theta):
        s2 = math.sin(theta) ** 2
        return s2 / (s2 + c) if s2 + c > 0 else 1.0

    val, _ = integrate.quad(f, 0.0, math.pi - angle, epsabs=1e-11, epsrel=1e-10, limit=200)
    return val


def p_b_mpsk_rayleigh_ideal(mod_order: int, snr_b: float) -> float:
    """Gray M-PSK BER in Rayleigh fading at average per-bit SNR ``snr_b``.

    The AWGN expression is averaged over the exponential density of the
    instantaneous SNR in closed form, leaving one finite angular integral
    per term, evaluated adaptively.
    """
    if math.isinf(snr_b):
        return 0.0
    p1 = log2_exact(mod_order)
    total = 0.0
    for weight, sign, angle in _lee_terms(mod_order):
        total += weight * sign * _averaged_integral(angle, p1 * snr_b)
    return max(total / (2 * math.pi * p1), 0.0)


def p_b_semi_analytic(config: SystemConfig, energy: EnergyBudget, trials: int = 20_000,
                      seed=0) -> float:
    """Modulated-bit BER conditioned on correct index detection, by sampling.

    Draws fading and despread noise for ``trials`` blocks, runs square-law
    detection, keeps blocks whose indices were detected correctly and
    averages the AWGN BER at their instantaneous ``|h|**2 Ebs/N0``.
    The despread noise is drawn directly in the code domain, where it is
    white with variance ``N0`` per cell.
    """
    if trials < 10_000:
        raise ValueError(f"trials must be >= 10000, got {trials}")
    if energy.n0 == 0:
        return 0.0
    rng = as_generator(seed)
    n_cells = config.n_subcarriers * config.n_codes
    h = complex_normal(rng, trials)
    x = complex_normal(rng, (trials, n_cells), energy.n0)
    x[:, 0] += np.sqrt(energy.es) * h
    correct = np.argmax(np.abs(x) ** 2, axis=1) == 0
    if not correct.any():
        raise InsufficientSamplesError(
            f"no correct detections in {trials} trials at {energy.ebs_over_n0_db} dB")
    gamma_b = np.abs(h[correct]) ** 2 * energy.ebs / energy.n0
    return float(np.mean(p_b_mpsk_awgn(config.mod_order, gamma_b)))


@dataclass(frozen=True)
class BerBreakdown:
    p_ed: float
    p_map: float
    p_b: float
    p_mod: float
    p_cfim: float

    def as_dict(self) -> dict:
        return asdict(self)


def compose_ber(budget: BitBudget, p_ed: float, p_b: float) -> BerBreakdown:
    pmap = p_map(budget.code_bits, budget.subcarrier_bits, p_ed) if budget.mapped_bits else 0.0
    pmod = p_b * (1.0 - p_ed) + 0.5 * p_ed
    p = budget.total
    pcfim = budget.mod_bits / p * pmod + budget.mapped_bits / p * pmap
    return BerBreakdown(float(p_ed), float(pmap), float(p_b), float(pmod), float(pcfim))


def ber_closed_form(config: SystemConfig, energy: EnergyBudget, trials_for_pb: int = 20_000,
                    seed=0, ideal_threshold: float = 1e-4) -> BerBreakdown:
    """Total BER and its parts at one operating point.

    ``P_b`` comes from the Rayleigh closed form when ``P_ed`` is below
    ``ideal_threshold``; otherwise from :func:`p_b_semi_analytic`.
    """
    ped = p_ed_closed_form(config.n_subcarriers, config.n_codes, energy.snr_symbol)
    if ped < ideal_threshold:
        snr_b = energy.ebs / energy.n0 if energy.n0 > 0 else math.inf
        pb = p_b_mpsk_rayleigh_ideal(config.mod_order, snr_b)
    else:
        pb = p_b_semi_analytic(config, energy, trials_for_pb, seed)
    return compose_ber(config.bits, ped, pb)


# -- efficiency, complexity, PAPR ---------------------------------------------


def spectral_efficiency(budget: BitBudget) -> Fraction:
    """Bits per block over the block's subcarrier count (bits/s/Hz)."""
    return Fraction(budget.total, 2 ** budget.subcarrier_bits)


def energy_saving(budget: BitBudget) -> Fraction:
    """Fraction of per-block bits that cost no transmit energy."""
    return 1 - Fraction(budget.mod_bits, budget.total)


def complexity_cfim(config: SystemConfig) -> int:
    n, nc, big_l, k = (config.n_subcarriers, config.n_codes,
                       config.spreading_factor, config.n_blocks)
    sled = n * nc * k
    spread_despread = 2 * n * big_l * nc - n * nc + big_l
    mod_demod = 3 * config.bits.mod_bits - 1
    return sled + k * (spread_despread + mod_demod)


def complexity_ds_fim(config: SystemConfig) -> int:
    return complexity_cfim(replace(config, n_codes=1, n_users=1))


def complexity_ds_ofdm(config: SystemConfig) -> int:
    per_subcarrier = 3 * config.spreading_factor - 1
    mod_demod = 3 * config.bits.mod_bits - 1
    return config.n_blocks * config.n_subcarriers * (per_subcarrier + mod_demod)


def ofdm_im_budget(config: SystemConfig, active: int) -> BitBudget:
    """Bits per block of OFDM-IM with ``active`` of ``N`` subcarriers lit.

    Index bits are ``floor(log2 C(N, g))``; the modulated bits of all
    active subcarriers count as ``mod_bits``.
    """
    index_bits = math.comb(config.n_subcarriers, active).bit_length() - 1
    return BitBudget(active * config.bits.mod_bits, 0, index_bits)


def complexity_ofdm_im(config: SystemConfig, active: int = 2) -> int:
    if not 1 <= active <= config.n_subcarriers:
        raise ValueError(f"active subcarriers must be in 1..{config.n_subcarriers}")
    big_l, g = config.spreading_factor, active
    index_bits = ofdm_im_budget(config, g).subcarrier_bits
    mld = 2 ** index_bits * config.mod_order ** g
    spread_despread = math.comb(config.n_subcarriers, g) * math.factorial(g) * (2 * big_l - 1) + g * big_l
    mod_demod = 3 * config.bits.mod_bits - 1
    return config.n_blocks * (g * spread_despread + mod_demod) + mld


def papr_bounds(config: SystemConfig) -> tuple[int, int]:
    """Worst-case PAPR ceilings ``(K N L, K L)`` for OFDM and CFIM."""
    k, big_l = config.n_blocks, config.spreading_factor
    return k * config.n_subcarriers * big_l, k * big_l


@dataclass(frozen=True)
class MetricsReport:
    se: float
    energy_saving: float
    ops_cfim: int
    ops_ds_fim: int
    ops_ds_ofdm: int
    ops_ofdm_im: int
    papr_max_ofdm: int
    papr_max_cfim: int

    def as_dict(self) -> dict:
        return asdict(self)


def metrics_report(config: SystemConfig, active: int = 2) -> MetricsReport:
    budget = config.bits
    papr_ofdm, papr_cfim = papr_bounds(config)
    return MetricsReport(
        se=float(spectral_efficiency(budget)),
        energy_saving=float(energy_saving(budget)),
        ops_cfim=complexity_cfim(config),
        ops_ds_fim=complexity_ds_fim(config),
        ops_ds_ofdm=complexity_ds_ofdm(config),
        ops_ofdm_im=complexity_ofdm_im(config, active),
        papr_max_ofdm=papr_ofdm,
        papr_max_cfim=papr_cfim,
    )


@dataclass(frozen=True)
class SystemMetrics:
    """One comparison-table row."""

    system: str
    config: SystemConfig
    bits_per_block: int
    complexity: int
    spectral_efficiency: Fraction
    energy_saving: Fraction

    def as_row(self) -> dict:
        row = {"system": self.system}
        row.update(self.config.to_short())
        row.update({
            "bits_per_block": self.bits_per_block,
            "complexity": self.complexity,
            "spectral_efficiency": float(self.spectral_efficiency),
            "energy_saving": float(self.energy_saving),
            "energy_saving_pct": round(float(self.energy_saving) * 100, 1),
        })
        return row


def cfim_metrics(config: SystemConfig, name: str | None = None) -> SystemMetrics:
    b = config.bits
    name = name or f"CFIM({config.n_subcarriers},{config.n_codes})"
    return SystemMetrics(name, config, b.total, complexity_cfim(config),
                         spectral_efficiency(b), energy_saving(b))


def ds_fim_metrics(config: SystemConfig) -> SystemMetrics:
    fim = replace(config, n_codes=1, n_users=1)
    return cfim_metrics(fim, "DS-FIM")


def ds_ofdm_metrics(config: SystemConfig) -> SystemMetrics:
    cfg = replace(config, n_codes=1, n_users=1)
    p = config.n_subcarriers * config.bits.mod_bits
    return SystemMetrics("DS-OFDM", cfg, p, complexity_ds_ofdm(config),
                         Fraction(p, config.n_subcarriers), Fraction(0))


def ofdm_im_metrics(config: SystemConfig, active: int = 2) -> SystemMetrics:
    cfg = replace(config, n_codes=1, n_users=1)
    b = ofdm_im_budget(config, active)
    return SystemMetrics(f"DS-OFDM-IM({config.n_subcarriers},{active})", cfg, b.total,
                         complexity_ofdm_im(config, active),
                         Fraction(b.total, config.n_subcarriers), energy_saving(b))


def comparison_table(config: SystemConfig, active: int = 2) -> list[SystemMetrics]:
    """CFIM at ``config`` next to the three baselines at the same M, N, L, K."""
    return [cfim_metrics(config), ds_fim_metrics(config), ds_ofdm_metrics(config),
            ofdm_im_metrics(config, active)]


def table1() -> list[SystemMetrics]:
    """The reference comparison: M=2, N=4, L=32, one block."""
    base = SystemConfig(mod_order=2, n_subcarriers=4, n_codes=2, spreading_factor=32)
    return [
        cfim_metrics(base),
        cfim_metrics(replace(base, n_codes=8)),
        cfim_metrics(replace(base, n_codes=32)),
        ds_fim_metrics(base),
        ds_ofdm_metrics(base),
        ofdm_im_metrics(base, 2),
    ]
