"""``mqwidth`` command line: figure data tables as CSV or JSON.

Every subcommand builds a list of rows (dicts with a fixed key order) and
hands it to :func:`write_table`. Values come from, in decreasing priority,
command-line flags, a ``--config`` file of ``key = value`` lines, and the
built-in defaults.

Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import exactspin, phenomodel
from .numerics import NumericalError, fit_line
from .phenomodel import ModelParams

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

DEFAULTS = {
    "a0": phenomodel.A0_PER_US,
    "A2_ms2": phenomodel.A2_PER_MS2,
    "b2_ms2": phenomodel.B2_PER_MS2,
    "lambda": "2",
    "p": "0.05,0.1,0.2,0.3,0.5",
    "y_grid": "0.25:30:120",
    "y_values": "10,30",
    "T_grid": "0:1000:21",
    "M_max": 30,
    "K": phenomodel.RATE_LINE_K,
    "n": 4,
    "topology": "all",
    "coupling": 1.0,
    "couplings": None,
    "times": "0:2:21",
    "reverse_time": None,
    "compare": False,
    "format": "csv",
    "out": None,
    "jobs": 1,
    "input": None,
    "column": None,
}

# per-subcommand overrides of DEFAULTS
COMMAND_DEFAULTS = {
    "fig3": {"A2_ms2": phenomodel.RATE_LINE_A2_PER_MS2},
    "fig4": {"lambda": "1,2"},
    "fig5": {"p": "0.05,0.075,0.1,0.15,0.2,0.3"},
    "exact": {"p": "0"},
}

FIG_COLUMNS = {
    "fig2": ["T_us", "K", "log10_K"],
    "fig3": ["M", "rate_sq_per_ms2"],
    "fig4": ["lambda", "p", "y", "K_eff", "status"],
    "fig5": ["p", "K_eff_at_y10_gauss", "K_eff_at_y10_exp", "K_eff_at_y30", "K_st_eq19"],
    "exact": ["t_us", "M", "g_M", "second_moment_K"],
    "fit": ["fit", "x", "y", "n_points", "slope", "intercept", "r_squared"],
}


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------- parsing

def parse_grid(text, name: str, strictly_increasing: bool = True) -> list[float]:
    """``"a,b,c"`` list or ``"start:stop:num"`` inclusive linear grid."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ConfigError(f"{name}: range must be start:stop:num, got {text!r}")
            start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
            if num < 1:
                raise ConfigError(f"{name}: need at least one point, got {num}")
            values = [float(v) for v in np.linspace(start, stop, num)]
        else:
            values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{name}: cannot parse {text!r}") from None
    if not values:
        raise ConfigError(f"{name}: grid is empty")
    if any(not math.isfinite(v) for v in values):
        raise ConfigError(f"{name}: non-finite value in {text!r}")
    if strictly_increasing and any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"{name}: values must be strictly increasing, got {text!r}")
    return values


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve(command: str, flags: dict, config_path=None) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update(COMMAND_DEFAULTS.get(command, {}))
    if config_path is not None:
        cfg.update(read_config_file(config_path))
    cfg.update({k: v for k, v in flags.items() if v is not None})
    return cfg


def _float(cfg, key, unit, *, positive=False, nonneg=False):
    try:
        value = float(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{key} expected a number in {unit}, got {cfg[key]!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{key} expected a finite number in {unit}, got {value}")
    if positive and not value > 0:
        raise ConfigError(f"{key} expected > 0 in {unit}, got {value}")
    if nonneg and not value >= 0:
        raise ConfigError(f"{key} expected >= 0 in {unit}, got {value}")
    return value


def _int(cfg, key, *, lo=None):
    try:
        value = int(str(cfg[key]))
    except ValueError:
        raise ConfigError(f"{key} expected an integer, got {cfg[key]!r}") from None
    if lo is not None and value < lo:
        raise ConfigError(f"{key} expected >= {lo}, got {value}")
    return value


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


def model_params(cfg, p=0.0, lam=2.0) -> ModelParams:
    a0 = _float(cfg, "a0", "1/us", positive=True)
    A2 = _float(cfg, "A2_ms2", "(1/ms)^2", nonneg=True)
    b2 = _float(cfg, "b2_ms2", "(1/ms)^2", nonneg=True)
    return ModelParams.from_ms_units(a0=a0, A2_ms2=A2, b2_ms2=b2, p=p, lam=lam)


def _p_values(cfg, *, allow_zero=False, allow_one=False):
    ps = parse_grid(cfg["p"], "p (dimensionless)")
    lo_ok = (lambda v: v >= 0) if allow_zero else (lambda v: v > 0)
    hi_ok = (lambda v: v <= 1) if allow_one else (lambda v: v < 1)
    for v in ps:
        if not (lo_ok(v) and hi_ok(v)):
            raise ConfigError(f"p expected in {'[' if allow_zero else '('}0, 1{']' if allow_one else ')'}, got {v}")
    return ps


def _lambdas(cfg):
    lams = parse_grid(cfg["lambda"], "lambda (dimensionless)", strictly_increasing=False)
    if any(v <= 0 for v in lams):
        raise ConfigError(f"lambda expected > 0, got {cfg['lambda']!r}")
    return lams


def _map(fn, items, jobs):
    """Ordered map; results come back in input order whatever ``jobs`` is."""
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------- subcommands

def cmd_fig2(cfg) -> list[dict]:
    a0 = _float(cfg, "a0", "1/us", positive=True)
    grid = parse_grid(cfg["T_grid"], "T_grid (us)")
    if grid[0] < 0:
        raise ConfigError(f"T_grid expected times >= 0 us, got {grid[0]}")
    rows = []
    for T in grid:
        K = phenomodel.cluster_size(a0, T)
        rows.append({"T_us": T, "K": K, "log10_K": a0 * T / math.log(10.0)})
    return rows


def cmd_fig3(cfg) -> list[dict]:
    params = model_params(cfg)
    K = _float(cfg, "K", "spins", positive=True)
    if K < 1:
        raise ConfigError(f"K expected >= 1 spin, got {K}")
    m_max = _int(cfg, "M_max", lo=0)
    rows = []
    for M in range(m_max + 1):
        rate = phenomodel.decoherence_rate_sq(M, K, params) / phenomodel.MS2_TO_US2
        rows.append({"M": M, "rate_sq_per_ms2": rate})
    return rows


def _k_eff_or_none(params, y):
    try:
        return phenomodel.k_eff_at(params, y), "ok"
    except (NumericalError, ArithmeticError) as exc:
        return None, f"error: {exc}"


def cmd_fig4(cfg) -> list[dict]:
    lams = _lambdas(cfg)
    ps = _p_values(cfg)
    ys = parse_grid(cfg["y_grid"], "y_grid (units of 1/a_p)")
    if ys[0] <= 0:
        raise ConfigError(f"y_grid expected values > 0, got {ys[0]}")
    jobs = _int(cfg, "jobs", lo=1)
    base = model_params(cfg)
    tasks = [(lam, p, y) for lam in lams for p in ps for y in ys]

    def run(task):
        lam, p, y = task
        k, status = _k_eff_or_none(base.with_(p=p, lam=lam), y)
        return {"lambda": lam, "p": p, "y": y, "K_eff": k, "status": status}

    return _map(run, tasks, jobs)


def cmd_fig5(cfg) -> list[dict]:
    ps = _p_values(cfg)
    ys = parse_grid(cfg["y_values"], "y_values (units of 1/a_p)")
    if len(ys) != 2 or ys[0] <= 0:
        raise ConfigError(f"y_values expected two positive values (short, long), got {cfg['y_values']!r}")
    y_short, y_long = ys
    jobs = _int(cfg, "jobs", lo=1)
    base = model_params(cfg)
    if base.A2 == 0:
        raise ConfigError("A2_ms2 expected > 0 (1/ms)^2 for a steady state")

    def run(p):
        gauss = base.with_(p=p, lam=2.0)
        expo = base.with_(p=p, lam=1.0)
        return {
            "p": p,
            "K_eff_at_y10_gauss": _k_eff_or_none(gauss, y_short)[0],
            "K_eff_at_y10_exp": _k_eff_or_none(expo, y_short)[0],
            "K_eff_at_y30": _k_eff_or_none(gauss, y_long)[0],
            "K_st_eq19": phenomodel.steady_state_size(gauss),
        }

    return _map(run, ps, jobs)


def _spin_system(cfg) -> exactspin.SpinSystem:
    if cfg.get("couplings"):
        path = Path(cfg["couplings"])
        if not path.is_file():
            raise ConfigError(f"couplings file not found: {path}")
        return exactspin.SpinSystem.from_file(path)
    n = _int(cfg, "n", lo=2)
    if n > exactspin.MAX_SPINS:
        raise ConfigError(f"n={n} exceeds the exact-diagonalization cap of {exactspin.MAX_SPINS} spins")
    b = _float(cfg, "coupling", "1/us")
    topology = str(cfg["topology"]).strip().lower()
    if topology in ("all", "all-to-all"):
        return exactspin.SpinSystem.all_to_all(n, b)
    if topology == "chain":
        return exactspin.SpinSystem.chain(n, b)
    raise ConfigError(f"topology expected 'all' or 'chain' (or a couplings file), got {topology!r}")


def cmd_exact(cfg) -> list[dict]:
    system = _spin_system(cfg)
    ps = _p_values(cfg, allow_zero=True, allow_one=True)
    if len(ps) != 1:
        raise ConfigError(f"exact expects a single p value, got {cfg['p']!r}")
    p = ps[0]
    times = parse_grid(cfg["times"], "times (us)")
    if times[0] < 0:
        raise ConfigError(f"times expected >= 0 us, got {times[0]}")
    compare = _bool(cfg["compare"])
    reverse = cfg.get("reverse_time")
    reverse = None if reverse in (None, "") else _float(cfg, "reverse_time", "us", nonneg=True)

    H = exactspin.build_effective(system, p)
    rho0 = exactspin.total_sz(system)
    rows = []
    for t, rho in zip(times, exactspin.evolve_series(rho0, H, times)):
        spec = exactspin.coherence_decompose(rho, system)
        k2 = exactspin.second_moment(spec)
        if compare:
            protocol = exactspin.ProtocolSpec(p=p, prep_time=t, reverse_time=reverse)
            fft = exactspin.phase_cycle_signal(protocol, system)
            block = exactspin.reversal_reference(protocol, system)
        for M, g in zip(spec.orders, spec.intensities):
            row = {"t_us": t, "M": int(M), "g_M": float(g), "second_moment_K": k2}
            if compare:
                row["signal_fft"] = fft[int(M)]
                row["signal_block"] = block[int(M)]
                row["abs_diff"] = abs(fft[int(M)] - block[int(M)])
            rows.append(row)
    return rows


def read_table(path) -> tuple[list[str], list[dict]]:
    """Read a CSV table written by this tool (or any CSV with a header row)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input table not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}:1: empty table") from None
        rows = []
        for lineno, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(header):
                raise ConfigError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(fields)}"
                )
            row = {}
            for key, text in zip(header, fields):
                if text == "":
                    row[key] = None
                    continue
                try:
                    row[key] = float(text)
                except ValueError:
                    row[key] = text
            rows.append((lineno, row))
    return header, rows


def _numeric_pairs(path, rows, xkey, ykey, transform_x, transform_y):
    pts = []
    for lineno, row in rows:
        x, y = row.get(xkey), row.get(ykey)
        if x is None or y is None:
            continue
        if not isinstance(x, float) or not isinstance(y, float):
            raise ConfigError(f"{path}:{lineno}: non-numeric {xkey}/{ykey} value")
        try:
            pts.append((transform_x(x), transform_y(y)))
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: cannot take log of {xkey}={x}, {ykey}={y}") from None
    return pts


def cmd_fit(cfg) -> list[dict]:
    if not cfg.get("input"):
        raise ConfigError("fit needs --input PATH (a CSV table)")
    path = cfg["input"]
    header, rows = read_table(path)
    ident = float
    out = []

    def add(name, xname, yname, pts):
        if len(pts) < 2:
            raise ConfigError(f"{path}: need >= 2 usable rows for {yname}, got {len(pts)}")
        fit = fit_line(pts)
        out.append({"fit": name, "x": xname, "y": yname, "n_points": len(pts),
                    "slope": fit.slope, "intercept": fit.intercept,
                    "r_squared": fit.r_squared})

    if "T_us" in header and "K" in header:
        pts = _numeric_pairs(path, rows, "T_us", "K", ident, math.log)
        add("exponential_growth", "T_us", "ln K", pts)
    elif "p" in header:
        columns = [c for c in header if c.startswith("K")]
        if cfg.get("column"):
            if cfg["column"] not in header:
                raise ConfigError(f"{path}: no column {cfg['column']!r} in header {header}")
            columns = [cfg["column"]]
        if not columns:
            raise ConfigError(f"{path}: no K columns to fit in header {header}")
        for col in columns:
            pts = _numeric_pairs(path, rows, "p", col, math.log, math.log)
            add("power_law", "ln p", f"ln {col}", pts)
    else:
        raise ConfigError(f"{path}:1: unrecognized header {header}; expected T_us,K or p,K_...")
    return out


COMMANDS = {
    "fig2": cmd_fig2,
    "fig3": cmd_fig3,
    "fig4": cmd_fig4,
    "fig5": cmd_fig5,
    "exact": cmd_exact,
    "fit": cmd_fit,
}


# -------------------------------------------------------------- output

def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def format_table(rows: list[dict], fmt: str, columns: list[str] | None = None) -> str:
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    if fmt == "json":
        data = [{c: row.get(c) for c in columns} for row in rows]
        return json.dumps(data, indent=1, allow_nan=False) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def write_table(rows, fmt, out=None, columns=None):
    text = format_table(rows, fmt, columns)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -------------------------------------------------------------- entry

class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors (exit 1), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="mqwidth",
        description="Multiple-quantum NMR width model: figure data as CSV/JSON.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value file; flags override it")
        sp.add_argument("--format", choices=["csv", "json"])
        sp.add_argument("--out", help="write to this file instead of stdout")

    def model(sp):
        sp.add_argument("--a0", help="growth rate a0 in 1/us (default 0.0083)")
        sp.add_argument("--A2-ms2", dest="A2_ms2", help="A^2 in (1/ms)^2")
        sp.add_argument("--b2-ms2", dest="b2_ms2", help="b^2 in (1/ms)^2")

    sp = sub.add_parser("fig2", help="cluster size K(T) = exp(a0 T)")
    common(sp)
    sp.add_argument("--a0", help="growth rate a0 in 1/us (default 0.0083)")
    sp.add_argument("--T-grid", dest="T_grid", help="times in us: list or start:stop:num")

    sp = sub.add_parser("fig3", help="squared decoherence rate vs coherence order")
    common(sp)
    model(sp)
    sp.add_argument("--K", help="cluster size (default 650)")
    sp.add_argument("--M-max", dest="M_max", help="largest order M (default 30)")

    sp = sub.add_parser("fig4", help="effective cluster size vs y for several p")
    common(sp)
    model(sp)
    sp.add_argument("--p", help="perturbation strengths, comma list")
    sp.add_argument("--lambda", dest="lambda", help="profile exponents, comma list (default 1,2)")
    sp.add_argument("--y-grid", dest="y_grid", help="reduced times: list or start:stop:num")
    sp.add_argument("--jobs", help="worker threads")

    sp = sub.add_parser("fig5", help="stabilized cluster size vs p")
    common(sp)
    model(sp)
    sp.add_argument("--p", help="perturbation strengths, comma list")
    sp.add_argument("--y-values", dest="y_values", help="short and long y (default 10,30)")
    sp.add_argument("--jobs", help="worker threads")

    sp = sub.add_parser("exact", help="exact small-cluster coherence spectra")
    common(sp)
    sp.add_argument("--n", help="number of spins (2..12)")
    sp.add_argument("--topology", help="all | chain")
    sp.add_argument("--coupling", help="coupling constant b in 1/us")
    sp.add_argument("--couplings", help="file of 'i j b_ij' lines (overrides n/topology)")
    sp.add_argument("--p", help="perturbation strength in [0, 1]")
    sp.add_argument("--times", help="times in us: list or start:stop:num")
    sp.add_argument("--reverse-time", dest="reverse_time",
                    help="reversal duration in us (default (1-p)*t)")
    sp.add_argument("--compare", action="store_const", const=True,
                    help="add phase-cycling (FFT) vs block-decomposition columns")

    sp = sub.add_parser("fit", help="line fits of fig2/fig5 tables")
    common(sp)
    sp.add_argument("--input", help="CSV table to fit")
    sp.add_argument("--column", help="fit only this K column")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = resolve(args.command, flags, args.config)
        fmt = str(cfg["format"]).strip().lower()
        if fmt not in ("csv", "json"):
            raise ConfigError(f"format expected csv or json, got {fmt!r}")
        rows = COMMANDS[args.command](cfg)
        columns = list(FIG_COLUMNS[args.command])
        if args.command == "exact" and rows and "signal_fft" in rows[0]:
            columns += ["signal_fft", "signal_block", "abs_diff"]
        write_table(rows, fmt, cfg.get("out"), columns)
    except (ValueError, OSError) as exc:
        print(f"mqwidth {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ArithmeticError as exc:
        print(f"mqwidth {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if args.command == "fig4" and any(r["status"] != "ok" for r in rows):
        print("mqwidth fig4: some rows failed; see the status column", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
