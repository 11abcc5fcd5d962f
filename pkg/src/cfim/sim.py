"""End-to-end Monte Carlo BER experiments.

Trials run in chunks of ``chunk_blocks`` blocks.  Chunk ``c`` at grid
point ``i`` draws everything (bits, fading, noise) from
``derive_seed(seed, i, c)``.  Chunks may be computed concurrently but are
folded in index order and the stopping rule is checked after each one, so
results never depend on the number of workers.

Stopping rule per grid point: keep going until at least ``min_bits`` bits
have been simulated and either ``max_errors`` bit errors were seen or
``100 * min_bits`` bits were simulated.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import channel
from .analysis import BerBreakdown, ber_closed_form, compose_ber, p_b_mpsk_rayleigh_ideal
from .channel import as_generator, derive_seed
from .codebook import Codebook, partition_codebooks, single_user_codebook
from .config import BitBudget, EnergyBudget, SystemConfig, calibrate_energy
from .modem import (demap_block, despread, map_block, psk_demodulate, psk_modulate,
                    sled_detect, spread)

_ANALYTIC_KEY = 2**31 - 1
HARD_CAP_FACTOR = 100


@dataclass
class ErrorCounts:
    """Raw error tallies; ``block_err_sq`` sums squared per-block bit errors."""

    blocks: int = 0
    mapped_errors: int = 0
    modulated_errors: int = 0
    index_errors: int = 0
    block_err_sq: int = 0

    def __iadd__(self, other):
        self.blocks += other.blocks
        self.mapped_errors += other.mapped_errors
        self.modulated_errors += other.modulated_errors
        self.index_errors += other.index_errors
        self.block_err_sq += other.block_err_sq
        return self

    @property
    def errors(self) -> int:
        return self.mapped_errors + self.modulated_errors


def count_errors(sent, received, mod_bits: int, index_wrong=None) -> ErrorCounts:
    wrong = np.asarray(sent) != np.asarray(received)
    per_block = wrong.reshape(wrong.shape[0], -1).sum(axis=1).astype(np.int64)
    wrong = wrong.reshape(wrong.shape[0], -1)
    return ErrorCounts(
        blocks=wrong.shape[0],
        mapped_errors=int(wrong[:, mod_bits:].sum()),
        modulated_errors=int(wrong[:, :mod_bits].sum()),
        index_errors=0 if index_wrong is None else int(np.count_nonzero(index_wrong)),
        block_err_sq=int((per_block ** 2).sum()),
    )


@dataclass(frozen=True)
class SweepResult:
    """Simulated error rates at one Ebs/N0, with the analytic figures alongside."""

    ebs_over_n0_db: float
    ber_total: float
    ber_mapped: float
    ber_modulated: float
    index_error_rate: float
    bits_simulated: int
    error_count: int
    mapped_bits: int
    mapped_errors: int
    modulated_bits: int
    modulated_errors: int
    blocks: int
    std_error: float
    analytic: BerBreakdown | None = field(default=None)

    @classmethod
    def from_counts(cls, db: float, counts: ErrorCounts, budget: BitBudget,
                    analytic: BerBreakdown | None = None) -> SweepResult:
        b, p = counts.blocks, budget.total
        mapped_bits = b * budget.mapped_bits
        mod_bits = b * budget.mod_bits
        mean = counts.errors / b
        var = (counts.block_err_sq - b * mean * mean) / (b - 1) if b > 1 else 0.0
        return cls(
            ebs_over_n0_db=float(db),
            ber_total=counts.errors / (b * p),
            ber_mapped=counts.mapped_errors / mapped_bits if mapped_bits else 0.0,
            ber_modulated=counts.modulated_errors / mod_bits if mod_bits else 0.0,
            index_error_rate=counts.index_errors / b,
            bits_simulated=b * p,
            error_count=counts.errors,
            mapped_bits=mapped_bits,
            mapped_errors=counts.mapped_errors,
            modulated_bits=mod_bits,
            modulated_errors=counts.modulated_errors,
            blocks=b,
            std_error=math.sqrt(max(var, 0.0) / b) / p,
            analytic=analytic,
        )

    def as_row(self) -> dict:
        row = asdict(self)
        analytic = row.pop("analytic")
        for key in ("p_ed", "p_map", "p_b", "p_mod", "p_cfim"):
            row[f"analytic_{key}"] = analytic[key] if analytic else math.nan
        return row


# -- chunk kernels -------------------------------------------------------------


def _detect(rx_samples, h, codebook: Codebook, config: SystemConfig):
    xhat = despread(rx_samples, codebook)
    i_hat, j_hat, _ = sled_detect(xhat)
    h_sel = np.take_along_axis(h, i_hat[..., None], axis=-1)[..., 0]
    return demap_block(xhat, i_hat, j_hat, h_sel, config), i_hat, j_hat


def cfim_chunk(config: SystemConfig, energy: EnergyBudget, codebook: Codebook,
               n_blocks: int, seed) -> list[ErrorCounts]:
    rng = as_generator(seed)
    budget = config.bits
    bits = rng.integers(0, 2, (n_blocks, budget.total), dtype=np.int8)
    block = map_block(bits, config, energy.es)
    rx = channel.apply(spread(block, codebook, config.n_subcarriers), energy, rng)
    out, i_hat, j_hat = _detect(rx.samples, rx.h, codebook, config)
    wrong = (i_hat != block.subcarrier_index) | (j_hat != block.code_index)
    return [count_errors(bits, out, budget.mod_bits, wrong)]


def ds_ofdm_chunk(config: SystemConfig, energy: EnergyBudget, codebook: Codebook,
                  n_blocks: int, seed) -> list[ErrorCounts]:
    """Every subcarrier carries its own M-PSK symbol spread by the first code."""
    rng = as_generator(seed)
    p1 = config.bits.mod_bits
    bits = rng.integers(0, 2, (n_blocks, config.n_subcarriers, p1), dtype=np.int8)
    code = codebook.codes[:1]
    frame = psk_modulate(bits, config.mod_order, energy.es)[..., None] * code[0]
    rx = channel.apply(frame, energy, rng)
    z = despread(rx.samples, Codebook(code))[..., 0] / rx.h
    out = psk_demodulate(z, config.mod_order)
    return [count_errors(bits.reshape(n_blocks, -1), out.reshape(n_blocks, -1),
                         config.n_subcarriers * p1)]


def multiuser_chunk(config: SystemConfig, energy: EnergyBudget, codebooks, uplink: bool,
                    n_blocks: int, seed) -> list[ErrorCounts]:
    rng = as_generator(seed)
    budget = config.bits
    n_users = len(codebooks)
    bits = rng.integers(0, 2, (n_users, n_blocks, budget.total), dtype=np.int8)
    blocks = [map_block(bits[u], config, energy.es) for u in range(n_users)]
    frames = [spread(b, cb, config.n_subcarriers) for b, cb in zip(blocks, codebooks)]
    apply = channel.apply_multiuser_uplink if uplink else channel.apply_multiuser_downlink
    rx = apply(frames, energy, rng)
    counts = []
    for u, (block, cb) in enumerate(zip(blocks, codebooks)):
        h = rx.h[u] if uplink else rx.h
        out, i_hat, j_hat = _detect(rx.samples, h, cb, config)
        wrong = (i_hat != block.subcarrier_index) | (j_hat != block.code_index)
        counts.append(count_errors(bits[u], out, budget.mod_bits, wrong))
    return counts


# -- driver ----------------------------------------------------------------------


def _executor(workers: int):
    if workers and workers > 1:
        return ThreadPoolExecutor(max_workers=workers)
    return nullcontext(None)


def _run_point(kernel, bits_per_block: int, min_bits: int, max_errors: int, seed: int,
               point: int, executor, workers: int) -> list[ErrorCounts]:
    cap = HARD_CAP_FACTOR * min_bits
    totals = None
    chunk = 0
    wave = max(1, workers)
    while True:
        ids = range(chunk, chunk + wave)
        if executor is None:
            results = (kernel(derive_seed(seed, point, c)) for c in ids)
        else:
            results = executor.map(lambda c: kernel(derive_seed(seed, point, c)), ids)
        for res in results:
            chunk += 1
            if totals is None:
                totals = [ErrorCounts() for _ in res]
            for t, r in zip(totals, res):
                t += r
            bits = totals[0].blocks * bits_per_block
            if bits >= min_bits and (bits >= cap or all(t.errors >= max_errors for t in totals)):
                return totals


def _energies(config, grid, noiseless):
    for db in grid:
        energy = calibrate_energy(config.bits, db)
        if noiseless:
            energy = replace(energy, n0=0.0, snr_symbol=math.inf)
        yield db, energy


def run_ber_sweep(config: SystemConfig, ebn0_grid_db, min_bits: int = 100_000,
                  max_errors: int = 200, seed: int = 0, *, chunk_blocks: int = 4096,
                  workers: int = 1, noiseless: bool = False, analytic: bool = True,
                  trials_for_pb: int = 20_000) -> list[SweepResult]:
    """Full-chain CFIM BER over an Ebs/N0 grid (dB)."""
    if min_bits < 10_000:
        raise ValueError(f"min_bits must be >= 10000, got {min_bits}")
    codebook = single_user_codebook(config)
    budget = config.bits
    results = []
    with _executor(workers) as ex:
        for point, (db, energy) in enumerate(_energies(config, ebn0_grid_db, noiseless)):
            def kernel(s, energy=energy):
                return cfim_chunk(config, energy, codebook, chunk_blocks, s)
            (counts,) = _run_point(kernel, budget.total, min_bits, max_errors, seed, point,
                                   ex, workers)
            ref = None
            if analytic and not noiseless:
                ref = ber_closed_form(config, energy, trials_for_pb,
                                      derive_seed(seed, _ANALYTIC_KEY))
            results.append(SweepResult.from_counts(db, counts, budget, ref))
    return results


BASELINES = ("ds-fim", "ds-ofdm")


def run_baseline_ber(scheme: str, config: SystemConfig, ebn0_grid_db, min_bits: int = 100_000,
                     seed: int = 0, *, max_errors: int = 200, chunk_blocks: int = 4096,
                     workers: int = 1, noiseless: bool = False) -> list[SweepResult]:
    """BER of DS-FIM (CFIM with one code) or coherent DS-OFDM."""
    scheme = scheme.lower()
    if scheme == "ds-fim":
        return run_ber_sweep(replace(config, n_codes=1, n_users=1), ebn0_grid_db, min_bits,
                             max_errors, seed, chunk_blocks=chunk_blocks, workers=workers,
                             noiseless=noiseless)
    if scheme != "ds-ofdm":
        raise ValueError(f"unknown baseline {scheme!r}; expected one of {', '.join(BASELINES)}")
    if min_bits < 10_000:
        raise ValueError(f"min_bits must be >= 10000, got {min_bits}")
    codebook = single_user_codebook(config)
    budget = BitBudget(config.n_subcarriers * config.bits.mod_bits, 0, 0)
    results = []
    with _executor(workers) as ex:
        for point, (db, energy) in enumerate(_energies(config, ebn0_grid_db, noiseless)):
            def kernel(s, energy=energy):
                return ds_ofdm_chunk(config, energy, codebook, chunk_blocks, s)
            (counts,) = _run_point(kernel, budget.total, min_bits, max_errors, seed, point,
                                   ex, workers)
            ref = None
            if not noiseless:
                pb = p_b_mpsk_rayleigh_ideal(config.mod_order, energy.ebs / energy.n0)
                ref = compose_ber(budget, 0.0, pb)
            results.append(SweepResult.from_counts(db, counts, budget, ref))
    return results


# -- multiuser -------------------------------------------------------------------

DIRECTIONS = ("downlink", "uplink")


@dataclass(frozen=True)
class MultiuserScenario:
    """``config.n_users`` synchronous users sharing one parameter shape.

    User ``u`` owns code rows ``[u*Nc, (u+1)*Nc)`` of the L x L Hadamard matrix.
    """

    config: SystemConfig
    direction: str = "downlink"

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")

    @property
    def n_users(self) -> int:
        return self.config.n_users

    @property
    def codebooks(self) -> list[Codebook]:
        c = self.config
        return partition_codebooks(c.spreading_factor, c.n_users, c.n_codes)


def subcarrier_occupancy(subcarrier_index, n_subcarriers: int) -> np.ndarray:
    """Number of users on each subcarrier; input is ``(U, ...)``, output ``(..., N)``."""
    idx = np.asarray(subcarrier_index)
    return (idx[..., None] == np.arange(n_subcarriers)).sum(axis=0)


def run_multiuser(scenario: MultiuserScenario, ebn0_grid_db, min_bits: int = 100_000,
                  seed: int = 0, *, max_errors: int = 200, chunk_blocks: int = 4096,
                  workers: int = 1, noiseless: bool = False, analytic: bool = True,
                  trials_for_pb: int = 20_000) -> list[list[SweepResult]]:
    """Per-user BER sweeps, ``result[user][point]``.

    Each point runs until every user satisfies the stopping rule.
    """
    if min_bits < 10_000:
        raise ValueError(f"min_bits must be >= 10000, got {min_bits}")
    config = scenario.config
    codebooks = scenario.codebooks
    uplink = scenario.direction == "uplink"
    budget = config.bits
    per_user = [[] for _ in codebooks]
    with _executor(workers) as ex:
        for point, (db, energy) in enumerate(_energies(config, ebn0_grid_db, noiseless)):
            def kernel(s, energy=energy):
                return multiuser_chunk(config, energy, codebooks, uplink, chunk_blocks, s)
            counts = _run_point(kernel, budget.total, min_bits, max_errors, seed, point,
                                ex, workers)
            ref = None
            if analytic and not noiseless:
                ref = ber_closed_form(config, energy, trials_for_pb,
                                      derive_seed(seed, _ANALYTIC_KEY))
            for u, c in enumerate(counts):
                per_user[u].append(SweepResult.from_counts(db, c, budget, ref))
    return per_user


def max_codes_per_user(length: int, n_users: int) -> int:
    share = length // n_users
    return 1 << (share.bit_length() - 1) if share >= 1 else 0


def max_se_per_user(mod_order: int, n_subcarriers: int, length: int, n_users: int) -> float:
    """Best per-user spectral efficiency when ``n_users`` split an L x L Hadamard set."""
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    nc = max_codes_per_user(length, n_users)
    if nc < 1:
        return 0.0
    bits = sum(x.bit_length() - 1 for x in (mod_order, nc, n_subcarriers))
    return bits / n_subcarriers
