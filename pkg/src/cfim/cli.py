"""Command-line front end.

Subcommands ``ber``, ``metrics``, ``papr`` and ``multiuser`` print a table
(CSV or JSON) to stdout, or write it to ``--out`` together with a
``<out>.manifest.json`` describing the run.

Exit codes: 0 success, 2 invalid arguments or configuration, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext

import numpy as np

from . import analysis, sim, waveform
from .config import SHORT_KEYS, SystemConfig, parse_config_text
from .errors import ConfigError
from .io import encode, manifest, write_manifest, write_text

SEED_ENV = "CFIM_SEED"

COLUMNS_EPILOG = """\
Table columns (stable, schema version 1):
  ber        K N Nc M L U scheme, then ebs_over_n0_db ber_total ber_mapped
             ber_modulated index_error_rate bits_simulated error_count
             mapped_bits mapped_errors modulated_bits modulated_errors blocks
             std_error analytic_p_ed analytic_p_map analytic_p_b
             analytic_p_mod analytic_p_cfim
  metrics    system K N Nc M L U bits_per_block complexity
             spectral_efficiency energy_saving energy_saving_pct
  papr       K N Nc M L U n_fft trials, threshold_db, then ccdf_<scheme>
  multiuser  K N Nc M L U direction user, then the ber columns
  --se-curve M N L U codes_per_user se_per_user ofdm_se
"""


class UsageError(Exception):
    pass


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (inclusive) or a comma-separated list of dB values."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0 or stop < start:
                raise UsageError(f"bad grid {text!r}: need start <= stop and step > 0")
            n = int(round((stop - start) / step)) + 1
            return [round(start + i * step, 10) for i in range(n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad grid {text!r}") from None


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def resolve_config(args, **overrides) -> tuple[SystemConfig, dict]:
    """Defaults < config file < flags."""
    values, extras = {}, {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            parsed = parse_config_text(fh.read())
        for k, v in parsed.items():
            (values if k in SHORT_KEYS else extras)[k] = v
    for key in SHORT_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SystemConfig.from_short(values), extras


def _executor(threads: int):
    return ThreadPoolExecutor(max_workers=threads) if threads > 1 else nullcontext(None)


def _emit(args, name: str, config: SystemConfig, rows: list[dict]) -> None:
    text = encode(rows, args.format)
    if not args.out:
        sys.stdout.write(text)
        return
    write_text(args.out, text)
    write_manifest(f"{args.out}.manifest.json",
                   manifest(name, config.to_short(), args.seed,
                            {os.path.basename(args.out): text}, _arg_record(args)))


def _arg_record(args) -> dict:
    skip = {"func", "threads", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# -- subcommands -----------------------------------------------------------------


def cmd_ber(args) -> int:
    config, extras = resolve_config(args)
    grid = parse_grid(args.grid) if args.grid else [extras.get("ebs_over_n0_db", 10.0)]
    if args.scheme == "cfim":
        results = sim.run_ber_sweep(config, grid, args.min_bits, args.max_errors, args.seed,
                                    workers=args.threads, analytic=not args.no_analytic,
                                    trials_for_pb=args.trials_pb)
    else:
        results = sim.run_baseline_ber(args.scheme, config, grid, args.min_bits, args.seed,
                                       max_errors=args.max_errors, workers=args.threads)
    prefix = dict(config.to_short(), scheme=args.scheme)
    _emit(args, "ber", config, [dict(prefix, **r.as_row()) for r in results])
    return 0


def cmd_metrics(args) -> int:
    config, _ = resolve_config(args)
    rows = analysis.table1() if args.table1 else analysis.comparison_table(config, args.active)
    _emit(args, "metrics", config, [r.as_row() for r in rows])
    return 0


def cmd_papr(args) -> int:
    if args.fig10:
        config, _ = resolve_config(args, K=13, N=4, Nc=2, M=2)
        n_fft = 64
    else:
        config, _ = resolve_config(args)
        n_fft = args.n_fft
    schemes = list(waveform.SCHEMES) if "all" in args.scheme else args.scheme
    thresholds = parse_grid(args.thresholds)
    columns = {}
    with _executor(args.threads) as ex:
        for scheme in schemes:
            res = waveform.papr_ccdf(scheme, config, thresholds, args.trials, args.seed,
                                     n_fft=n_fft, active=args.active,
                                     oversample=args.oversample, executor=ex)
            columns[f"ccdf_{scheme}"] = res.ccdf
    prefix = dict(config.to_short(), n_fft=n_fft, trials=args.trials)
    rows = []
    for i, t in enumerate(thresholds):
        row = dict(prefix, threshold_db=float(t))
        row.update({k: float(v[i]) for k, v in columns.items()})
        rows.append(row)
    _emit(args, "papr", config, rows)
    return 0


def cmd_multiuser(args) -> int:
    if args.se_curve:
        config, _ = resolve_config(args, U=1)
        m, n, big_l = config.mod_order, config.n_subcarriers, config.spreading_factor
        rows = [{"M": m, "N": n, "L": big_l, "U": u,
                 "codes_per_user": sim.max_codes_per_user(big_l, u),
                 "se_per_user": sim.max_se_per_user(m, n, big_l, u),
                 "ofdm_se": float(config.bits.mod_bits)}
                for u in range(1, big_l + 1)]
        _emit(args, "multiuser", config, rows)
        return 0
    config, extras = resolve_config(args, U=args.users)
    grid = parse_grid(args.grid) if args.grid else [extras.get("ebs_over_n0_db", 10.0)]
    scenario = sim.MultiuserScenario(config, args.direction)
    per_user = sim.run_multiuser(scenario, grid, args.min_bits, args.seed,
                                 max_errors=args.max_errors, workers=args.threads,
                                 analytic=not args.no_analytic, trials_for_pb=args.trials_pb)
    prefix = dict(config.to_short(), direction=args.direction)
    tables = [[dict(prefix, user=u, **r.as_row()) for r in results]
              for u, results in enumerate(per_user)]
    if not args.out:
        sys.stdout.write(encode([row for t in tables for row in t], args.format))
        return 0
    os.makedirs(args.out, exist_ok=True)
    outputs = {}
    for u, rows in enumerate(tables):
        name = f"user{u}.{args.format}"
        outputs[name] = encode(rows, args.format)
        write_text(os.path.join(args.out, name), outputs[name])
    write_manifest(os.path.join(args.out, "manifest.json"),
                   manifest("multiuser", config.to_short(), args.seed, outputs,
                            _arg_record(args)))
    return 0


# -- parser ----------------------------------------------------------------------


def _config_args(p):
    g = p.add_argument_group("system parameters (override --config)")
    g.add_argument("--config", metavar="FILE", help="flat key=value file (K N Nc M L U ebs_over_n0_db)")
    for key, help_ in (("K", "blocks"), ("N", "subcarriers per block"),
                       ("Nc", "spreading codes per user"), ("M", "PSK order"),
                       ("L", "spreading factor"), ("U", "users")):
        g.add_argument(f"--{key}", type=int, dest=key, help=help_)


def _common_args(p, seed_default):
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _sweep_args(p):
    p.add_argument("--grid", help="Ebs/N0 values in dB: start:stop:step or a,b,c")
    p.add_argument("--min-bits", type=int, default=100_000)
    p.add_argument("--max-errors", type=int, default=200)
    p.add_argument("--trials-pb", type=int, default=20_000,
                   help="samples for the conditional modulated-bit BER")
    p.add_argument("--no-analytic", action="store_true")


def build_parser(seed_default: int = 0) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfim", description="CFIM link simulation and analysis",
        epilog=COLUMNS_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    doc = dict(epilog=COLUMNS_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p = sub.add_parser("ber", help="Monte Carlo BER sweep with analytic overlay", **doc)
    _config_args(p)
    _common_args(p, seed_default)
    _sweep_args(p)
    p.add_argument("--scheme", choices=("cfim",) + sim.BASELINES, default="cfim")
    p.set_defaults(func=cmd_ber)

    p = sub.add_parser("metrics", help="SE, energy saving and operation counts", **doc)
    _config_args(p)
    _common_args(p, seed_default)
    p.add_argument("--table1", action="store_true",
                   help="reference comparison at M=2, N=4, L=32, K=1")
    p.add_argument("--active", type=int, default=2, help="active subcarriers for OFDM-IM")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("papr", help="PAPR CCDF of CFIM, OFDM and OFDM-IM", **doc)
    _config_args(p)
    _common_args(p, seed_default)
    p.add_argument("--scheme", nargs="+", choices=waveform.SCHEMES + ("all",), default=["all"])
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--thresholds", default="0:12:0.5", help="dB: start:stop:step or a,b,c")
    p.add_argument("--n-fft", type=int, default=64)
    p.add_argument("--active", type=int, default=2, help="active subcarriers for OFDM-IM")
    p.add_argument("--oversample", type=int, default=1)
    p.add_argument("--fig10", action="store_true",
                   help="K=13, N=4, Nc=2, M=2, 64-point FFT")
    p.set_defaults(func=cmd_papr)

    p = sub.add_parser("multiuser", help="synchronous multiuser BER or per-user SE curve", **doc)
    _config_args(p)
    _common_args(p, seed_default)
    _sweep_args(p)
    p.add_argument("--users", type=int)
    p.add_argument("--direction", choices=sim.DIRECTIONS, default="downlink")
    p.add_argument("--se-curve", action="store_true",
                   help="max per-user SE for U = 1..L (ignores --users)")
    p.set_defaults(func=cmd_multiuser)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser(_default_seed())
    except UsageError as exc:
        print(f"cfim: error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads < 1:
        print("cfim: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, UsageError, ValueError) as exc:
        print(f"cfim: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cfim: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
