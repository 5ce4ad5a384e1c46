"""Command-line front end.

Commands: ``simulate``, ``gain-table``, ``group`` and ``verify``.
Exit codes: 0 ok, 1 usage or input error, 2 runtime error, 3 verification
failure.
"""

from __future__ import annotations

import argparse
import cmath
import configparser
import datetime as dt
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .beamforming import BRANCHES, snr_gain_rho
from .channel import KmsSpec, correlated_channel, read_channel_csv, stream_rng
from .errors import ConfigError, QammdError
from .grouping import (
    exhaustive_grouping,
    gamma_threshold,
    greedy_from_gains,
    pair_gains,
    plan_is_feasible,
)
from .simulator import GROUPING_MODES, SimConfig, default_workers, run_sweep
from .verification import TABLE_PHI_DEG, TABLE_RHO, run_suites

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3

# keys accepted in a config file; flags with the same name override them
CONFIG_KEYS = (
    "m", "n", "scheme", "snr", "trials", "seed", "rho", "rho-phase",
    "grouping", "gamma-t", "rates", "workers", "out",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def parse_grid(text: str) -> tuple[float, ...]:
    """``start:step:stop`` (inclusive), a single value or a comma list.

    >>> parse_grid("0:10:30")
    (0.0, 10.0, 20.0, 30.0)
    """
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("snr", f"expected start:step:stop, got {text!r}")
        try:
            start, step, stop = map(float, parts)
        except ValueError:
            raise ConfigError("snr", f"non-numeric grid {text!r}") from None
        if step <= 0 or stop < start:
            raise ConfigError("snr", f"need step > 0 and stop >= start in {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 10) for i in range(n))
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError("snr", f"non-numeric grid {text!r}") from None


def _parse_rates(text: str) -> tuple[int, int]:
    try:
        kc, ks = (int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError("rates", f"expected K_c,K_s such as 1,1, got {text!r}") from None
    return kc, ks


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError("config", f"{path}: {exc}") from None
    out = dict(parser["run"])
    for key in out:
        if key.replace("_", "-") not in CONFIG_KEYS:
            raise ConfigError(key, f"unknown config key in {path}")
    return {k.replace("_", "-"): v for k, v in out.items()}


def _int(field: str, value) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(field, f"expected an integer, got {value!r}") from None


def _float(field: str, value) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(field, f"expected a number, got {value!r}") from None


def build_sim_config(args) -> tuple[SimConfig, Path]:
    values = read_config_file(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            values[key] = flag
    for key in ("m", "n"):
        if key not in values:
            raise ConfigError(key, f"required; pass --{key} or set '{key}' in the config file")
    rho = cmath.rect(_float("rho", values.get("rho", 0.0)), _float("rho-phase", values.get("rho-phase", 0.0)))
    gamma_t = values.get("gamma-t")
    config = SimConfig(
        M=_int("m", values["m"]),
        N=_int("n", values["n"]),
        schemes=tuple(s.strip() for s in str(values.get("scheme", "md,zf")).split(",") if s.strip()),
        rates=_parse_rates(str(values.get("rates", "1,1"))),
        snr_grid_db=parse_grid(str(values.get("snr", "0:2:40"))),
        trials=_int("trials", values.get("trials", 10_000)),
        rho_corr=rho,
        grouping=str(values.get("grouping", "greedy")),
        gamma_t=None if gamma_t is None else _float("gamma-t", gamma_t),
        seed=_int("seed", values.get("seed", 0)),
        workers=_int("workers", values.get("workers", default_workers())),
    )
    return config, Path(str(values.get("out", "ber.csv")))


def _build_id() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _config_echo(config: SimConfig) -> dict:
    return {
        "M": config.M,
        "N": config.N,
        "schemes": list(config.schemes),
        "rates": list(config.rates),
        "snr_grid_db": list(config.snr_grid_db),
        "trials": config.trials,
        "rho_corr": [config.rho_corr.real, config.rho_corr.imag],
        "grouping": config.grouping,
        "gamma_t_db": config.threshold_db,
        "seed": config.seed,
        "workers": config.workers,
        "rng": "numpy Philox, SeedSequence([seed, trial])",
    }


def cmd_simulate(args) -> int:
    config, out = build_sim_config(args)
    started = dt.datetime.now(dt.timezone.utc)
    report = run_sweep(config)
    finished = dt.datetime.now(dt.timezone.utc)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_csv())
    manifest_path = out.with_suffix(".manifest.json")
    manifest = {
        "config": _config_echo(config),
        "build": _build_id(),
        "seed": config.seed,
        "started": started.isoformat(),
        "finished": finished.isoformat(),
        "wall_clock_s": report.wall_clock,
        "outputs": {"csv": str(out), "manifest": str(manifest_path)},
        "argv": args.argv,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {out} ({len(report.points)} rows) and {manifest_path}")
    return EXIT_OK


def gain_table_lines() -> list[str]:
    header = "rho \\ phi  " + "".join(f"{d:>8}" for d in (f"{x}deg" for x in TABLE_PHI_DEG))
    lines = [header]
    labels = ("1/16", "1/8", "1/4", "1/2", "1")
    for label, rho in zip(labels, TABLE_RHO):
        cells = (snr_gain_rho(rho, math.cos(d * math.pi / 180)) for d in TABLE_PHI_DEG)
        # round the exact zero at 90 degrees away from -0.00
        lines.append(f"{label:<11}" + "".join(f"{v + 0.0:8.2f}" for v in cells))
    return lines


def cmd_gain_table(args) -> int:
    print("\n".join(gain_table_lines()))
    return EXIT_OK


def _group_channel(args) -> np.ndarray:
    if args.channel:
        try:
            with open(args.channel, newline="") as fh:
                return read_channel_csv(fh)
        except OSError as exc:
            raise ConfigError("channel", f"cannot read {args.channel}: {exc.strerror}") from None
    if args.m is None or args.n is None:
        raise ConfigError("channel", "give --channel FILE or both --m and --n to draw one")
    rho = cmath.rect(args.rho or 0.0, args.rho_phase or 0.0)
    spec = KmsSpec(rho, _int("m", args.m))
    return correlated_channel(spec, _int("n", args.n), stream_rng(args.seed or 0, 0))


def cmd_group(args) -> int:
    H = _group_channel(args)
    M, N = H.shape
    if N < 2:
        raise ConfigError("channel", "need at least two users")
    if N > M + 1:
        raise ConfigError("channel", f"N={N} users exceed M+1={M + 1}")
    kc, ks = _parse_rates(args.rates)
    gamma_t = args.gamma_t if args.gamma_t is not None else gamma_threshold(1 << (kc + ks))
    gains = pair_gains(H)
    print(f"M={M} N={N} threshold {gamma_t:.2f} dB")
    for (m, n), g in sorted(gains.items(), key=lambda kv: (-kv[1], kv[0])):
        mark = "*" if g > gamma_t else " "
        print(f"{mark} pair ({m + 1}, {n + 1}): {g:.2f} dB")
    if args.mode == "exhaustive":
        plan = exhaustive_grouping(H, 1.0, (kc, ks))
    else:
        plan = greedy_from_gains(gains, N, gamma_t)
    print("\n".join(plan.to_lines()))
    if not plan_is_feasible(plan, M):
        print("note: this plan leaves some group without a zero-forcing null space")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_suites(args.level, seed=args.seed, fault=args.inject_fault)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"verification failed: {', '.join(failed)}")
        return EXIT_VERIFY
    print(f"all {len(results)} suites passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qammd", description="Modulation-division downlink toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="BER sweep; writes CSV and a JSON manifest")
    s.add_argument("--config", help="flat key = value file; flags override it")
    s.add_argument("--m", help="transmit antennas")
    s.add_argument("--n", help="users")
    s.add_argument("--scheme", help="comma list of md, zf, td, mmse, slnr")
    s.add_argument("--snr", help="SNR grid in dB, start:step:stop")
    s.add_argument("--trials", help="channel draws per SNR point")
    s.add_argument("--seed", help="master seed")
    s.add_argument("--rho", help="antenna correlation magnitude")
    s.add_argument("--rho-phase", help="antenna correlation phase (rad)")
    s.add_argument("--grouping", help=f"MD grouping: {', '.join(GROUPING_MODES)}")
    s.add_argument("--gamma-t", help="pairing threshold in dB")
    s.add_argument("--rates", help="per-user bits K_c,K_s (default 1,1 = 4-QAM)")
    s.add_argument("--workers", help="worker processes (default $QAMMD_THREADS or 1)")
    s.add_argument("--out", help="CSV path (default ber.csv)")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("gain-table", help="MD-over-ZF SNR gain grid in dB")
    g.set_defaults(func=cmd_gain_table)

    gr = sub.add_parser("group", help="pair gains and grouping plan for one channel")
    gr.add_argument("--channel", help="CSV with one line per user of re,im values")
    gr.add_argument("--m", type=int, help="antennas when drawing a random channel")
    gr.add_argument("--n", type=int, help="users when drawing a random channel")
    gr.add_argument("--seed", type=int, default=0)
    gr.add_argument("--rho", type=float, default=0.0)
    gr.add_argument("--rho-phase", type=float, default=0.0)
    gr.add_argument("--gamma-t", type=float, help="threshold in dB (default from --rates)")
    gr.add_argument("--rates", default="1,1")
    gr.add_argument("--mode", choices=("greedy", "exhaustive"), default="greedy")
    gr.set_defaults(func=cmd_group)

    v = sub.add_parser("verify", help="run the oracle self-check suites")
    v.add_argument("--level", choices=("quick", "full"), default="quick")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--inject-fault", choices=BRANCHES[1:], help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        argv = sys.argv[1:] if argv is None else list(argv)
        args = parser.parse_args(argv)
        args.argv = argv
        if not getattr(args, "func", None):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        print(f"qammd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"qammd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QammdError as exc:
        print(f"qammd: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
