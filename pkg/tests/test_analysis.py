import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.special import erfc

from cfim import analysis
from cfim.analysis import (ber_closed_form, complexity_cfim, complexity_ds_fim,
                           complexity_ds_ofdm, complexity_ofdm_im, compose_ber, energy_saving,
                           metrics_report, p_b_mpsk_awgn, p_b_mpsk_rayleigh_ideal,
                           p_b_semi_analytic, p_ed_closed_form, p_map, papr_bounds,
                           spectral_efficiency, table1)
from cfim.config import BitBudget, SystemConfig, calibrate_energy
from cfim.errors import InsufficientSamplesError


def p_ed_sum(n, snr):
    """Alternating-sum form of noncoherent orthogonal symbol error."""
    return sum((-1) ** (m + 1) * math.comb(n - 1, m) / (1 + m + m * snr) for m in range(1, n))


def p_ed_mc(n, snr, trials, rng):
    h = (rng.standard_normal(trials) + 1j * rng.standard_normal(trials)) / math.sqrt(2)
    z = (rng.standard_normal((trials, n)) + 1j * rng.standard_normal((trials, n))) / math.sqrt(2)
    z[:, 0] += math.sqrt(snr) * h
    wrong = np.argmax(np.abs(z) ** 2, axis=1) != 0
    p = wrong.mean()
    return p, math.sqrt(p * (1 - p) / trials)


@pytest.mark.parametrize("n, nc", [(1, 2), (2, 2), (4, 2), (4, 4), (8, 1)])
@pytest.mark.parametrize("snr", [0.0, 0.5, 1.0, 10.0, 100.0, 1e4])
def test_p_ed_matches_alternating_sum(n, nc, snr):
    assert p_ed_closed_form(n, nc, snr) == pytest.approx(p_ed_sum(n * nc, snr), abs=1e-12)


def test_p_ed_trivial_cases():
    assert p_ed_closed_form(1, 1, 3.0) == 0.0
    assert p_ed_closed_form(2, 1, 0.0) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("n, nc", [(2, 2), (4, 2), (4, 8), (16, 32)])
def test_p_ed_limits_and_monotone(n, nc):
    assert p_ed_closed_form(n, nc, 10 ** 8) < 1e-3
    assert p_ed_closed_form(n, nc, 10 ** -8) == pytest.approx(1 - 1 / (n * nc), abs=1e-3)
    vals = p_ed_closed_form(n, nc, 10 ** (np.arange(-10, 40) / 10))
    assert np.all(np.diff(vals) <= 1e-15)


def test_p_ed_large_alphabet_is_stable():
    v = p_ed_closed_form(64, 64, 1e3)
    assert 0 < v < 1 - 1 / 4096


def test_p_ed_monte_carlo():
    p, se = p_ed_mc(8, 10.0, 1_000_000, np.random.default_rng(2024))
    assert abs(p_ed_closed_form(4, 2, 10.0) - p) < 3 * se


def test_p_map_examples():
    assert p_map(1, 1, 0.3) == pytest.approx(0.2, abs=1e-15)
    assert p_map(3, 2, 0.0) == 0.0
    assert p_map(1, 0, 0.37) == pytest.approx(0.37, abs=1e-15)
    with pytest.warns(RuntimeWarning):
        assert p_map(0, 0, 0.2) == 0.0


@pytest.mark.parametrize("snr", [0.0, 0.1, 1.0, 10.0, 1000.0])
def test_bpsk_rayleigh_closed_form(snr):
    oracle = 0.5 * (1 - math.sqrt(snr / (1 + snr)))
    assert p_b_mpsk_rayleigh_ideal(2, snr) == pytest.approx(oracle, abs=1e-6)


def test_rayleigh_ideal_infinite_snr():
    assert p_b_mpsk_rayleigh_ideal(8, math.inf) == 0.0


def test_qpsk_rayleigh_monte_carlo():
    rng = np.random.default_rng(77)
    n_sym = 5_000_000
    snr_b = 10.0
    # Gray QPSK: bit pairs on I and Q are independent BPSK at Eb
    h = (rng.standard_normal(n_sym) + 1j * rng.standard_normal(n_sym)) / math.sqrt(2)
    bits = rng.integers(0, 2, (n_sym, 2))
    s = ((1 - 2 * bits[:, 0]) + 1j * (1 - 2 * bits[:, 1])) * math.sqrt(snr_b)
    z = (rng.standard_normal(n_sym) + 1j * rng.standard_normal(n_sym)) / math.sqrt(2)
    y = (h * s + z) * np.conj(h)
    errs = (y.real < 0) != (bits[:, 0] == 1)
    errs = errs.astype(int) + ((y.imag < 0) != (bits[:, 1] == 1))
    p = errs.sum() / (2 * n_sym)
    se = math.sqrt(p * (1 - p) / (2 * n_sym))
    assert abs(p_b_mpsk_rayleigh_ideal(4, snr_b) - p) < 3 * se


def _lee_trapezoid(mod_order, gamma_b, average=False, points=200_001):
    p1 = int(math.log2(mod_order))
    s = p1 * gamma_b
    total = 0.0
    for m in range(1, mod_order):
        w = bin(m ^ (m >> 1)).count("1")
        prob = 0.0
        for sign, k in ((1, 2 * m - 1), (-1, 2 * m + 1)):
            a = k * math.pi / mod_order
            upper = math.pi * (1 - k / mod_order)
            theta = np.linspace(0.0, upper, points)
            s2 = np.sin(theta) ** 2
            c = s * math.sin(a) ** 2
            edge = 1.0 if c == 0 else 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                if average:
                    f = np.where(s2 > 0, s2 / (s2 + c), edge)
                else:
                    f = np.where(s2 > 0, np.exp(-c / s2), edge)
            prob += sign * trapezoid(f, theta)
        total += w * prob / (2 * math.pi)
    return total / p1


@pytest.mark.parametrize("m", [2, 4, 8, 16])
@pytest.mark.parametrize("g", [0.0, 0.5, 3.0, 20.0])
def test_awgn_quadrature_matches_trapezoid(m, g):
    assert p_b_mpsk_awgn(m, g) == pytest.approx(_lee_trapezoid(m, g), abs=1e-8)


@pytest.mark.parametrize("m", [2, 4, 8])
@pytest.mark.parametrize("g", [0.5, 3.0, 20.0])
def test_rayleigh_quadrature_matches_trapezoid(m, g):
    assert p_b_mpsk_rayleigh_ideal(m, g) == pytest.approx(_lee_trapezoid(m, g, True), abs=1e-8)


def test_awgn_bpsk_closed_form():
    g = np.array([0.0, 1.0, 4.0, 9.0])
    np.testing.assert_allclose(p_b_mpsk_awgn(2, g), 0.5 * erfc(np.sqrt(g)), atol=1e-12)


def test_semi_analytic_sure_detection():
    cfg = SystemConfig(2, 1, 1, 1)
    energy = calibrate_energy(cfg.bits, 5.0)
    trials = 200_000
    est = p_b_semi_analytic(cfg, energy, trials, seed=3)
    ideal = p_b_mpsk_rayleigh_ideal(2, energy.ebs / energy.n0)
    # per-trial std of the conditional BER is below its mean
    assert abs(est - ideal) < 3 * ideal / math.sqrt(trials)


SEMI_CFGS = [SystemConfig(2, 4, 2, 32), SystemConfig(4, 2, 2, 32), SystemConfig(8, 4, 8, 32)]


@pytest.mark.xfail(strict=True, reason="P_ed and P_b both scale as 1/SNR under Rayleigh "
                   "fading, so conditioning on correct detection keeps removing the deep "
                   "fades and the ratio to the unconditioned value stays near 0.2-0.5")
@pytest.mark.parametrize("cfg", SEMI_CFGS, ids=str)
def test_semi_analytic_high_snr_reaches_ideal(cfg):
    energy = calibrate_energy(cfg.bits, 30.0)
    ideal = p_b_mpsk_rayleigh_ideal(cfg.mod_order, energy.ebs / energy.n0)
    assert p_b_semi_analytic(cfg, energy, 100_000, seed=1) == pytest.approx(ideal, rel=0.05)


@pytest.mark.parametrize("cfg", SEMI_CFGS, ids=str)
@pytest.mark.parametrize("db", [10.0, 20.0, 30.0])
def test_conditioning_lowers_modulated_ber(cfg, db):
    energy = calibrate_energy(cfg.bits, db)
    ideal = p_b_mpsk_rayleigh_ideal(cfg.mod_order, energy.ebs / energy.n0)
    assert 0 < p_b_semi_analytic(cfg, energy, 100_000, seed=1) < ideal


def test_semi_analytic_deterministic_and_guarded():
    cfg = SystemConfig()
    energy = calibrate_energy(cfg.bits, 5.0)
    assert p_b_semi_analytic(cfg, energy, 10_000, 9) == p_b_semi_analytic(cfg, energy, 10_000, 9)
    with pytest.raises(ValueError):
        p_b_semi_analytic(cfg, energy, 100, 9)


def test_semi_analytic_no_retained_trials(monkeypatch):
    # dead fading and noise that always outshines the signal cell
    def rigged(rng, shape, variance=1.0):
        if isinstance(shape, tuple):
            out = np.ones(shape, complex)
            out[:, 0] = 0
            return out
        return np.zeros(shape, complex)

    monkeypatch.setattr(analysis, "complex_normal", rigged)
    cfg = SystemConfig()
    with pytest.raises(InsufficientSamplesError):
        p_b_semi_analytic(cfg, calibrate_energy(cfg.bits, 0.0), 10_000, 0)


def _check_identities(b, budget):
    p, q = budget.total, budget.mapped_bits
    assert b.p_mod == pytest.approx(b.p_b * (1 - b.p_ed) + b.p_ed / 2, abs=1e-15)
    assert b.p_map == pytest.approx(2 ** (q - 1) / (2 ** q - 1) * b.p_ed, abs=1e-15)
    assert b.p_cfim == pytest.approx(budget.mod_bits / p * b.p_mod + q / p * b.p_map, abs=1e-15)


def test_closed_form_high_snr():
    cfg = SystemConfig(2, 4, 2, 32)
    b = ber_closed_form(cfg, calibrate_energy(cfg.bits, 60.0))
    assert b.p_cfim <= 1e-5
    _check_identities(b, cfg.bits)


def test_closed_form_zero_snr_floors():
    cfg = SystemConfig(2, 4, 2, 32)
    energy = calibrate_energy(cfg.bits, -300.0)
    b = ber_closed_form(cfg, energy, 10_000, 0, ideal_threshold=0.0)
    assert b.p_ed == pytest.approx(1 - 1 / 8, abs=1e-12)
    assert b.p_mod >= 0.25
    # the estimator may lack correct detections at zero SNR; compose directly
    b = compose_ber(cfg.bits, p_ed_closed_form(4, 2, 0.0), 0.5)
    assert b.p_ed == pytest.approx(7 / 8) and b.p_mod >= 0.25


@pytest.mark.parametrize("cfg", [SystemConfig(2, 4, 2, 32), SystemConfig(4, 2, 2, 32),
                                 SystemConfig(2, 4, 32, 32), SystemConfig(8, 8, 4, 16)], ids=str)
def test_closed_form_monotone(cfg):
    vals = []
    for db in range(0, 31):
        b = ber_closed_form(cfg, calibrate_energy(cfg.bits, db), 20_000, 5)
        _check_identities(b, cfg.bits)
        assert 0 <= b.p_cfim <= 1
        vals.append(b.p_cfim)
    assert all(b <= a * (1 + 1e-9) for a, b in zip(vals, vals[1:]))


def test_compose_without_index_bits():
    b = compose_ber(BitBudget(1, 0, 0), 0.0, 0.1)
    assert b.p_cfim == pytest.approx(0.1) and b.p_map == 0.0


@pytest.mark.parametrize("budget, se, saving", [
    (BitBudget(1, 1, 2), Fraction(1), Fraction(3, 4)),
    (BitBudget(1, 3, 2), Fraction(3, 2), Fraction(5, 6)),
    (BitBudget(1, 5, 2), Fraction(2), Fraction(7, 8)),
    (BitBudget(1, 0, 2), Fraction(3, 4), Fraction(2, 3)),
    (BitBudget(0, 1, 2), Fraction(3, 4), Fraction(1)),
])
def test_se_and_saving(budget, se, saving):
    assert spectral_efficiency(budget) == se
    assert energy_saving(budget) == saving


def test_complexity_counts():
    base = SystemConfig(2, 4, 2, 32)
    assert complexity_cfim(base) == 8 + (512 - 8 + 32) + 2 == 546
    assert complexity_cfim(SystemConfig(2, 4, 8, 32)) == 2082
    assert complexity_cfim(SystemConfig(2, 4, 32, 32)) == 8226
    assert complexity_ds_fim(base) == 290
    assert complexity_ds_ofdm(base) == 4 * (95 + 2) == 388


def test_ofdm_im_count_is_formula_literal():
    # 2 * (6*2*63 + 64) + 2 + 2**2 * 2**2
    assert complexity_ofdm_im(SystemConfig(2, 4, 2, 32), 2) == 1658
    with pytest.raises(ValueError):
        complexity_ofdm_im(SystemConfig(2, 4, 2, 32), 5)


def test_table1_rows():
    rows = {r.system: r for r in table1()}
    assert [(rows[k].complexity, rows[k].spectral_efficiency, rows[k].energy_saving)
            for k in ("CFIM(4,2)", "CFIM(4,8)", "CFIM(4,32)", "DS-FIM", "DS-OFDM")] == [
        (546, 1, Fraction(3, 4)), (2082, Fraction(3, 2), Fraction(5, 6)),
        (8226, 2, Fraction(7, 8)), (290, Fraction(3, 4), Fraction(2, 3)), (388, 1, 0)]


@pytest.mark.parametrize("k, n, big_l, expected", [(1, 4, 32, (128, 32)), (13, 4, 1, (52, 13))])
def test_papr_bounds(k, n, big_l, expected):
    cfg = SystemConfig(2, n, 1, big_l, n_blocks=k)
    assert papr_bounds(cfg) == expected
    ofdm, cfim = papr_bounds(cfg)
    assert Fraction(cfim, ofdm) == Fraction(1, n)


def test_metrics_report():
    r = metrics_report(SystemConfig(2, 4, 2, 32))
    assert (r.se, r.energy_saving, r.ops_cfim, r.ops_ds_ofdm) == (1.0, 0.75, 546, 388)
    assert all(v > 0 for v in r.as_dict().values())
