"""``cvqkd`` command-line entry point.

Subcommands
-----------
rates     Analytic rate table at the reference operating points.
sweep     Analytic curves (and optionally simulated estimates) over a parameter grid.
simulate  Write one simulated burst to CSV and print its channel estimate.
session   Run a full key exchange; the exit code reports the outcome.
pa-bench  Time privacy amplification in GF(2^110503).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .channel import ChannelParams, simulate_burst
from .classical import OneTimePad
from .config import ConfigError, load_config, session_config
from .estimation import EstimationError, estimate_channel
from .gf2 import PA_FIELD
from .privacy import draw_public_element, hash_extract
from .rates import PULSE_RATE_HZ, REFERENCE_ROWS, NoiseAssumption, compute_rates, ideal_rate
from .session import AbortReason, run_session

__all__ = ["EXIT_CODES", "RATES_COLUMNS", "SWEEP_COLUMNS", "main", "rates_rows", "sweep_rows"]

log = logging.getLogger("cvqkd")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CODES: Dict[str, int] = {
    AbortReason.INSECURE: 3,
    AbortReason.RECONCILIATION_FAILURE: 4,
    AbortReason.PAD_UNDERFLOW: 5,
    AbortReason.NO_KEY: 6,
    AbortReason.ESTIMATION_FAILURE: 7,
}

RATES_COLUMNS = ["v", "g_line", "losses_db", "i_ba", "i_be", "i_be_pct", "i_ae", "delta_i_rr", "delta_i_dr",
                 "ideal_rr_kbps", "ideal_dr_kbps", "error"]
SWEEP_COLUMNS = ["param", "value", "v", "g_line", "eps_line", "chi_vac", "chi_line", "i_ba", "i_be", "i_ae",
                 "delta_i_rr", "delta_i_dr", "g_hat", "chi_line_hat", "chi_line_stderr", "eps_hat"]
_SWEEPABLE = ("g_line", "eps_line", "v_a", "n_el", "n_hom")


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if np.isnan(v) else f"{v:.6g}"
    return "" if v is None else str(v)


def write_csv(rows: Sequence[Dict[str, object]], columns: Sequence[str], out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])


def aligned_table(rows: Sequence[Dict[str, object]], columns: Sequence[str]) -> str:
    cells = [list(columns)] + [[_fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)).rstrip() for row in cells)


def _emit(rows, columns, output: Optional[str], table: bool) -> None:
    if output and output != "-":
        with open(output, "w", newline="") as fh:
            write_csv(rows, columns, fh)
    if table:
        print(aligned_table(rows, columns))
    elif not output or output == "-":
        write_csv(rows, columns, sys.stdout)


def rates_rows(points: Iterable[tuple], base: ChannelParams, mode: NoiseAssumption,
               pulse_rate: float = PULSE_RATE_HZ, eta: Optional[float] = None) -> List[Dict[str, object]]:
    """One analytic row per ``(V, G_line)`` point; a bad point yields a row with ``error`` set."""
    rows = []
    for v, g in points:
        row: Dict[str, object] = {"v": v, "g_line": g}
        try:
            p = replace(base, v_a=float(v) - 1.0, g_line=float(g))
            r = compute_rates(p, mode, eta)
        except ValueError as exc:
            row["error"] = str(exc)
            rows.append(row)
            continue
        row.update(losses_db=round(p.losses_db, 2) + 0.0, i_ba=r.i_ba, i_be=r.i_be, i_be_pct=100 * r.i_be_fraction,
                   i_ae=r.i_ae, delta_i_rr=r.delta_rr, delta_i_dr=r.delta_dr,
                   ideal_rr_kbps=ideal_rate(r.delta_rr, pulse_rate) / 1e3,
                   ideal_dr_kbps=ideal_rate(r.delta_dr, pulse_rate) / 1e3, error="")
        rows.append(row)
    return rows


def sweep_rows(param: str, values: Sequence[float], base: ChannelParams, mode: NoiseAssumption,
               simulate: bool = False, burst_length: int = 60_000, seed: int = 0,
               disclosed_fraction: float = 0.2) -> List[Dict[str, object]]:
    """Analytic curves at each grid value, with the estimate from one simulated burst if asked."""
    rows = []
    for i, x in enumerate(values):
        p = replace(base, **{param: float(x)})
        r = compute_rates(p, mode)
        row: Dict[str, object] = {"param": param, "value": float(x), "v": p.v, "g_line": p.g_line,
                                  "eps_line": p.eps_line, "chi_vac": p.chi_vac, "chi_line": p.chi_line,
                                  "i_ba": r.i_ba, "i_be": r.i_be, "i_ae": r.i_ae,
                                  "delta_i_rr": r.delta_rr, "delta_i_dr": r.delta_dr}
        if simulate:
            a, b = simulate_burst(p, burst_length, seed + i).sifted()
            k = int(round(disclosed_fraction * a.size))
            try:
                e = estimate_channel(a[:k], b[:k], p.n_el, p.n_hom, p.v_a, n0=p.n0)
                row.update(g_hat=e.g_hat, chi_line_hat=e.chi_line_hat, chi_line_stderr=e.chi_line_stderr,
                           eps_hat=e.eps_hat)
            except EstimationError as exc:
                log.warning("estimate at %s = %s failed: %s", param, x, exc)
        rows.append(row)
    return rows


def _grid(args) -> np.ndarray:
    if args.values is not None:
        vals = np.array([float(v) for v in args.values.replace(",", " ").split()])
    else:
        if args.start is None or args.stop is None:
            raise UsageError("sweep needs --values or --start and --stop")
        vals = np.linspace(args.start, args.stop, args.steps)
    d = np.diff(vals)
    if vals.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise UsageError("sweep range must be strictly monotone")
    return vals


def _config(args):
    return session_config(load_config(args.config, args.set or ()))


def cmd_rates(args) -> int:
    cfg = _config(args)
    if args.row:
        points = [(v, g) for v, g in args.row]
    else:
        points = [(row.v, row.g_line) for row in REFERENCE_ROWS]
    rows = rates_rows(points, cfg.channel, cfg.mode, cfg.pulse_rate, cfg.eta)
    for row in rows:
        if row.get("error"):
            print(f"row V={row['v']} G={row['g_line']}: {row['error']}", file=sys.stderr)
    _emit(rows, RATES_COLUMNS, args.output, args.table)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.param not in _SWEEPABLE:
        raise UsageError(f"--param must be one of {', '.join(_SWEEPABLE)}")
    rows = sweep_rows(args.param, _grid(args), cfg.channel, cfg.mode, args.simulate, cfg.burst_length,
                      cfg.seed, cfg.disclosed_fraction)
    _emit(rows, SWEEP_COLUMNS, args.output, args.table)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    burst = simulate_burst(cfg.channel, cfg.burst_length, cfg.seed, cfg.attack)
    if args.output:
        (burst.to_npz if args.output.endswith(".npz") else burst.to_csv)(args.output)
    a, b = burst.sifted()
    try:
        est = estimate_channel(a, b, cfg.channel.n_el, cfg.channel.n_hom, cfg.channel.v_a, n0=cfg.channel.n0)
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_CODES[AbortReason.ESTIMATION_FAILURE]
    print(f"seed = {cfg.seed}")
    print(est.to_text())
    return EXIT_OK


def cmd_session(args) -> int:
    cfg = _config(args)
    pad = None
    if args.pad:
        pad = OneTimePad(np.load(args.pad))
    result = run_session(cfg, pad=pad)
    print(result.summary())
    if args.output:
        row = result.report_row()
        with open(args.output, "w", newline="") as fh:
            write_csv([row], list(row), fh)
    if args.transcript:
        Path(args.transcript).write_text(result.transcript.to_log())
    if args.key_out and result.ok:
        np.save(args.key_out, result.alice_key)
    if args.next_pad and result.ok:
        np.save(args.next_pad, result.next_pad)
    if result.abort_reason:
        return EXIT_CODES.get(result.abort_reason, 1)
    return EXIT_OK if result.ok else EXIT_CODES[AbortReason.NO_KEY]


def cmd_pa_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    rows = []
    for method in args.methods:
        for _ in range(args.repeat):
            x = rng.integers(0, 2, PA_FIELD.n, dtype=np.uint8)
            r = draw_public_element(PA_FIELD, rng)
            t0 = time.perf_counter()
            hash_extract(x, r, args.out_len, PA_FIELD, method=method)
            rows.append({"field_n": PA_FIELD.n, "out_len": args.out_len, "method": method,
                         "seconds": time.perf_counter() - t0})
    _emit(rows, ["field_n", "out_len", "method", "seconds"], args.output, args.table)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cvqkd", description="Coherent-state CV-QKD simulator with reverse reconciliation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, output=True):
        p.add_argument("-c", "--config", help="flat 'section.key = value' file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        if output:
            p.add_argument("-o", "--output", help="CSV output path ('-' for stdout)")
            p.add_argument("--table", action="store_true", help="print an aligned table instead of CSV")

    p = sub.add_parser("rates", help="analytic rate table")
    common(p)
    p.add_argument("--row", nargs=2, type=float, action="append", metavar=("V", "G"),
                   help="operating point (repeatable); defaults to the five reference rows")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("sweep", help="rates (and estimates) over a parameter grid")
    common(p)
    p.add_argument("--param", default="g_line", help=f"one of {', '.join(_SWEEPABLE)}")
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--steps", type=int, default=17)
    p.add_argument("--values", help="explicit grid, comma or space separated")
    p.add_argument("--simulate", action="store_true", help="add estimates from one simulated burst per point")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="simulate one burst")
    common(p, output=False)
    p.add_argument("-o", "--output", help="burst file (.csv or .npz)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("session", help="run a full key exchange")
    common(p, output=False)
    p.add_argument("-o", "--output", help="CSV report row")
    p.add_argument("--transcript", help="write the classical-channel log here")
    p.add_argument("--key-out", help="save Alice's final key (.npy)")
    p.add_argument("--pad", help="pad left by a previous session (.npy) instead of a fresh bootstrap key")
    p.add_argument("--next-pad", help="save the reserved pad for the next block (.npy)")
    p.set_defaults(func=cmd_session)

    p = sub.add_parser("pa-bench", help="time hash_extract in GF(2^110503)")
    p.add_argument("-o", "--output")
    p.add_argument("--table", action="store_true")
    p.add_argument("--methods", nargs="+", default=["fft", "shift"], choices=["fft", "shift", "auto"])
    p.add_argument("--out-len", type=int, default=50_000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_pa_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"cvqkd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
