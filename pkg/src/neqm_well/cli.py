"""Command-line front end: ``neqm-well <command> [options]``.

Commands write one CSV table (or JSON with ``--format json``) to stdout or
to ``--out PATH``; with ``--out`` a ``PATH.manifest.json`` sidecar records
the command, every parameter, precision, version and wall time.

Exit codes: 0 success, 2 invalid arguments, 3 numerical-domain error,
4 selfcheck failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .basis import DEFAULT_PRECISION_BITS, default_precision_bits
from .core import DomainError, Params
from .qm_oracle import qm_spectrum
from .selfcheck import CHECKS, run_selfcheck
from .solver import ScanConfig, beta_sweep, convergence_sweep, log_beta_grid, spectrum
from .wavefunction import (
    AmbiguousNullspaceError,
    coefficient_table,
    coefficients_for_state,
    eval_psi,
    matching_residuals,
)

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_SELFCHECK = 0, 2, 3, 4

# column name -> type, shared by every table so parsing needs no schema argument
COLUMN_TYPES = {
    "beta": float, "v0": float, "L": int, "samples": int, "state_index": int, "parity": str,
    "mu": float, "energy": float, "marginal_flag": int, "k": float, "kappa": float,
    "upper_bound": float, "x": float, "psi": float, "name": str, "value": float, "n": int,
    "residual": float, "variant": str, "check": str, "passed": int, "detail": str, "seconds": float,
}

SIG_DIGITS = 6


def format_number(x, full_precision: bool = False) -> str:
    """6 significant digits with a bare exponent (5.15333e-1); repr-exact with ``full_precision``."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    if isinstance(x, str):
        return x
    x = float(x)
    if not math.isfinite(x):
        return repr(x)
    if full_precision:
        return repr(x)
    mant, exp = f"{x:.{SIG_DIGITS - 1}e}".split("e")
    return f"{mant}e{int(exp)}"


def _parse_cell(col: str, text: str):
    if text == "":
        return None
    kind = COLUMN_TYPES.get(col, str)
    return kind(text)


@dataclass
class Table:
    columns: List[str]
    rows: List[tuple] = field(default_factory=list)

    def emit_csv(self, full_precision: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([format_number(v, full_precision) for v in row])
        return buf.getvalue()

    def to_json(self) -> Dict[str, Any]:
        return {"columns": self.columns, "rows": [list(r) for r in self.rows]}


def parse_csv(text: str) -> Table:
    """Inverse of :meth:`Table.emit_csv` (exact for full-precision output)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    rows = [tuple(_parse_cell(c, v) for c, v in zip(header, r)) for r in reader if r]
    return Table(header, rows)


# ---- table builders (library results -> tables) --------------------------------

def qm_table(v0: float) -> Table:
    t = Table(["v0", "state_index", "parity", "k", "kappa", "energy"])
    for i, s in enumerate(qm_spectrum(v0)):
        t.rows.append((v0, i, s.parity, s.k, s.kappa, s.energy))
    return t


def spectrum_table(table) -> Table:
    t = Table(["beta", "v0", "L", "samples", "state_index", "parity", "mu", "energy", "marginal_flag"])
    p, cfg = table.params, table.config
    for i, s in enumerate(table.states):
        t.rows.append((p.beta, p.v0, cfg.L, cfg.samples, i, s.parity, s.mu, s.energy, int(s.marginal)))
    return t


def converge_table(rows) -> Table:
    t = Table(["L", "beta", "state_index", "energy"])
    for r in rows:
        t.rows.append((r.L, r.beta, r.state_index, r.energy))
    return t


def sweep_table(sweep, include_qm: bool = True) -> Table:
    t = Table(["beta", "state_index", "parity", "energy", "upper_bound"])
    if include_qm:
        # beta = 0 rows carry the ordinary QM levels (bound v0)
        for i, s in enumerate(qm_spectrum(sweep.v0)):
            t.rows.append((0.0, i, s.parity, s.energy, float(sweep.v0)))
    for r in sweep.rows:
        t.rows.append((r.beta, r.state_index, r.parity, r.energy, float(r.upper_bound)))
    return t


def wavefunction_tables(c, xs: Sequence[float], variant: str, arithmetic: str):
    psi = Table(["x", "psi"], [(float(x), float(v)) for x, v in zip(xs, eval_psi(xs, c))])
    coeffs = Table(["name", "value"], coefficient_table(c))
    res = Table(["n", "residual", "variant"],
                [(n, r, variant) for n, r in matching_residuals(c, variant=variant, arithmetic=arithmetic)])
    return psi, coeffs, res


# ---- argument handling ---------------------------------------------------------

def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}")
        if not v > 0 or (kind is float and not math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def _non_negative(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}")
        if not v >= 0 or (kind is float and not math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
        return v
    return conv


def _float_list(text):
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals or any(not (v > 0 and math.isfinite(v)) for v in vals):
        raise argparse.ArgumentTypeError("betas must be positive")
    return vals


def _int_list(text):
    try:
        vals = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 0:
        raise argparse.ArgumentTypeError("indices must be non-negative")
    return vals


def _precision(text):
    v = _positive(int)(text)
    if v < 24:
        raise argparse.ArgumentTypeError("precision must be at least 24 bits")
    return v


def _samples(text):
    v = _positive(int)(text)
    if v < 2:
        raise argparse.ArgumentTypeError("need at least 2 samples")
    return v


def _refine_tol(text):
    v = _positive(float)(text)
    if not v < 1:
        raise argparse.ArgumentTypeError("refine tolerance must lie in (0, 1)")
    return v


def _add_output(sp):
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--out", type=Path, default=None, help="write here (plus PATH.manifest.json) instead of stdout")
    sp.add_argument("--full-precision", action="store_true", help="round-trip exact numbers instead of 6 digits")


def _add_scan(sp, need_L=True):
    if need_L:
        sp.add_argument("--L", type=_non_negative(int), required=True, help="truncation order (no default)")
    sp.add_argument("--samples", type=_samples, default=500)
    sp.add_argument("--precision-bits", type=_precision, default=None,
                    help=f"mantissa bits (default {DEFAULT_PRECISION_BITS} or $NEQM_PRECISION_BITS)")
    sp.add_argument("--refine-tol", type=_refine_tol, default=1e-10)
    sp.add_argument("--full-pivoting", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="neqm-well", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("qm", help="ordinary QM finite-well spectrum")
    sp.add_argument("--v0", type=_non_negative(float), required=True)
    _add_output(sp)

    sp = sub.add_parser("spectrum", help="bound states at one (beta, v0, L)")
    sp.add_argument("--beta", type=_positive(float), required=True)
    sp.add_argument("--v0", type=_non_negative(float), required=True)
    _add_scan(sp)
    _add_output(sp)

    sp = sub.add_parser("converge", help="energies versus truncation order, one block per beta")
    sp.add_argument("--beta", type=_float_list, required=True, help="comma-separated list")
    sp.add_argument("--v0", type=_non_negative(float), required=True)
    sp.add_argument("--L-max", type=_non_negative(int), required=True)
    sp.add_argument("--L-min", type=_non_negative(int), default=0)
    sp.add_argument("--states", type=_int_list, default=[0, 1], help="state indices, default 0,1")
    sp.add_argument("--jobs", type=_positive(int), default=1)
    _add_scan(sp, need_L=False)
    _add_output(sp)

    sp = sub.add_parser("sweep-beta", help="spectrum on a log-spaced beta grid (long format)")
    sp.add_argument("--v0", type=_non_negative(float), required=True)
    sp.add_argument("--beta-min", type=_positive(float), required=True)
    sp.add_argument("--beta-max", type=_positive(float), required=True)
    sp.add_argument("--steps", type=_positive(int), required=True)
    sp.add_argument("--max-states", type=_positive(int), default=None)
    sp.add_argument("--jobs", type=_positive(int), default=1)
    _add_scan(sp)
    _add_output(sp)

    sp = sub.add_parser("wavefunction", help="psi(x) on a grid, coefficients and matching residuals")
    sp.add_argument("--beta", type=_positive(float), required=True)
    sp.add_argument("--v0", type=_non_negative(float), required=True)
    sp.add_argument("--state", type=_non_negative(int), default=0, help="state index (0 = ground)")
    sp.add_argument("--grid", type=_samples, default=201, help="number of x points")
    sp.add_argument("--x-max", type=_positive(float), default=3.0)
    sp.add_argument("--residual-variant", choices=("psi_II", "psi_III"), default="psi_II")
    sp.add_argument("--residual-arithmetic", choices=("working", "float64"), default="working")
    _add_scan(sp)
    _add_output(sp)

    sp = sub.add_parser("selfcheck", help="run the invariant suite")
    sp.add_argument("--precision-bits", type=_precision, default=None)
    sp.add_argument("--check", action="append", choices=sorted(CHECKS), default=None)
    _add_output(sp)
    return ap


def _config(args) -> ScanConfig:
    bits = args.precision_bits or default_precision_bits()
    return ScanConfig(L=getattr(args, "L", 0), samples=args.samples, refine_tol=args.refine_tol,
                      mantissa_bits=bits, full_pivoting=args.full_pivoting)


# ---- command bodies ------------------------------------------------------------

def cmd_qm(args):
    return {"": qm_table(args.v0)}


def cmd_spectrum(args):
    table = spectrum(Params(args.beta, args.v0), _config(args))
    for w in table.warnings:
        logging.getLogger(__name__).warning(w)
    return {"": spectrum_table(table)}


def cmd_converge(args):
    if args.L_min > args.L_max:
        raise _Usage("--L-min exceeds --L-max")
    cfg = _config(args)
    rows = []
    for b in args.beta:
        rows += convergence_sweep(Params(b, args.v0), range(args.L_min, args.L_max + 1), cfg,
                                  state_indices=args.states, workers=args.jobs)
    return {"": converge_table(rows)}


def cmd_sweep_beta(args):
    if args.beta_min > args.beta_max:
        raise _Usage("--beta-min exceeds --beta-max")
    grid = log_beta_grid(args.beta_min, args.beta_max, args.steps)
    sweep = beta_sweep(args.v0, grid, _config(args), max_states=args.max_states, workers=args.jobs)
    return {"": sweep_table(sweep)}


def cmd_wavefunction(args):
    cfg = _config(args)
    p = Params(args.beta, args.v0)
    table = spectrum(p, cfg, max_states=args.state + 1)
    if args.state >= len(table.states):
        raise DomainError(f"only {len(table.states)} bound state(s) at beta={args.beta}, v0={args.v0}, L={args.L}")
    c = coefficients_for_state(table.states[args.state], cfg)
    n = args.grid
    xs = [-args.x_max + 2 * args.x_max * i / (n - 1) for i in range(n)]
    psi, coeffs, res = wavefunction_tables(c, xs, args.residual_variant, args.residual_arithmetic)
    return {"": psi, "coefficients": coeffs, "residuals": res}


def cmd_selfcheck(args):
    results = run_selfcheck(args.precision_bits, args.check)
    for r in results:
        print(r.line(), file=sys.stderr)
    t = Table(["check", "passed", "detail", "seconds"],
              [(r.name, int(r.passed), r.detail, round(r.seconds, 3)) for r in results])
    return {"": t}, all(r.passed for r in results)


COMMANDS = {
    "qm": cmd_qm,
    "spectrum": cmd_spectrum,
    "converge": cmd_converge,
    "sweep-beta": cmd_sweep_beta,
    "wavefunction": cmd_wavefunction,
    "selfcheck": cmd_selfcheck,
}


class _Usage(Exception):
    pass


def _manifest(args, wall: float, files: List[str]) -> Dict[str, Any]:
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
              if k not in ("command", "out", "verbose")}
    bits = getattr(args, "precision_bits", None) or default_precision_bits()
    return {
        "command": args.command,
        "params": params,
        "mantissa_bits": bits,
        "samples": getattr(args, "samples", None),
        "L": getattr(args, "L", None),
        "version": __version__,
        "wall_time_s": round(wall, 3),
        "files": files,
    }


def _write_outputs(tables: Dict[str, Table], args, wall: float):
    full = args.full_precision
    if args.format == "json":
        payload = {name or "table": t.to_json() for name, t in tables.items()}
        texts = {"": json.dumps(payload, indent=1) + "\n"}
    else:
        texts = {name: t.emit_csv(full) for name, t in tables.items()}
    if args.out is None:
        sys.stdout.write("\n".join(texts.values()))
        return
    out: Path = args.out
    written = []
    for name, text in texts.items():
        path = out if not name else out.with_name(f"{out.stem}.{name}{out.suffix or '.csv'}")
        path.write_bytes(text.encode("utf-8"))
        written.append(path.name)
    man = out.with_name(out.name + ".manifest.json")
    man.write_bytes((json.dumps(_manifest(args, wall, written), indent=1, sort_keys=True) + "\n").encode("utf-8"))


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    t0 = time.perf_counter()
    try:
        result = COMMANDS[args.command](args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, AmbiguousNullspaceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    ok = True
    if isinstance(result, tuple):
        result, ok = result
    _write_outputs(result, args, time.perf_counter() - t0)
    return EXIT_OK if ok else EXIT_SELFCHECK


if __name__ == "__main__":
    sys.exit(main())
