"""Command line front end.

Subcommands: coeffs, borel, poles, fock, scan, delta, fit, extract, pipeline.
Exit status is 0 on success, 1 on a usage error and 2 when a numerical
procedure fails; in the last case the error payload is written to stderr as
JSON.  Outputs go to ``--out`` (or stdout) and always record the digits at
which each number was computed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from . import __version__
from .analysis import (
    compute_delta,
    deltas_to_csv,
    estimates_to_csv,
    extract_coefficients,
    fit_loglog_slope,
    borel_improved_delta,
    imaginary_scale,
    log_grid,
    DeltaRecord,
)
from .borel import ContourSpec, borel_transform, inverse_borel, pade_diagonal, pade_poles
from .fock import (
    FockProblem,
    build_hamiltonian,
    converged_fock_energy,
    convergence_scan,
    count_below,
    fock_energy,
    scan_to_csv,
)
from .instanton import known_coefficients, n4_leading_bound, two_instanton_truncated
from .numerics import (
    DomainError,
    NumericalFailure,
    format_big,
    format_rational,
    parse_big,
    rational_to_big,
    required_digits,
)
from .pade import PadeApproximant, load_pade, save_pade
from .perturbation import PerturbationSeries, compute_rs_coefficients, load_series, save_series

CACHE_ENV = "RESURGENCE_CACHE_DIR"
DEFAULT_CACHE = ".resurgence-cache"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- caches -------------------------------------------------------------------

def cache_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(CACHE_ENV) or DEFAULT_CACHE)


def get_series(order: int, cache: Path) -> tuple[PerturbationSeries, bool]:
    """Series of at least ``order``, from the cache when possible."""
    path = cache / "coefficients.txt"
    if path.exists():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            s = load_series(path)
        if s.order >= order:
            return s.truncated(order), True
    s = compute_rs_coefficients(order)
    save_series(s, path)
    return s, False


def get_pade(K: int, cache: Path) -> PadeApproximant:
    path = cache / f"pade_K{K}.txt"
    if path.exists():
        return load_pade(path)
    series, _ = get_series(K, cache)
    p = pade_diagonal(borel_transform(series), K)
    save_pade(p, path)
    return p


# -- config -------------------------------------------------------------------

def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{no}: expected key = value")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


@dataclass
class RunConfig:
    order: int = 200
    digits: int = 80
    fock_digits: int = 64
    g_min: Fraction = Fraction(5, 1000)
    g_max: Fraction = Fraction(5, 100)
    points: int = 12
    K_list: tuple = (0, 1, 2, 4, 7, 10)
    theta: float = math.pi / 4
    t_cut: float = 1.4
    extract_g_max: Fraction = Fraction(1, 100)
    extract_points: int = 24
    extract_k_max: int = 10
    extract_window_max: Fraction = Fraction(1, 100)
    pole_digits: int = 30
    seed: int = 0
    target_digits: int = 30

    @classmethod
    def from_mapping(cls, m: dict) -> "RunConfig":
        cfg = cls()
        conv = {
            "order": int, "digits": int, "fock_digits": int, "points": int,
            "extract_points": int, "extract_k_max": int, "pole_digits": int, "seed": int,
            "target_digits": int,
            "g_min": Fraction, "g_max": Fraction, "extract_g_max": Fraction,
            "extract_window_max": Fraction,
            "theta": _angle, "t_cut": float,
            "K_list": lambda s: tuple(int(x) for x in s.split(",")),
        }
        for k, v in m.items():
            if k not in conv:
                raise UsageError(f"unknown config key {k!r}")
            try:
                setattr(cfg, k, conv[k](v))
            except (ValueError, ZeroDivisionError) as exc:
                raise UsageError(f"bad value for {k}: {exc}") from None
        cfg.validate()
        return cfg

    def validate(self):
        if not 0 < self.g_min < self.g_max:
            raise UsageError("grid must be strictly positive and increasing")
        need = required_digits(self.g_min, self.target_digits)
        if self.digits < need:
            raise UsageError(f"digits={self.digits} below the required {need} for g_min={self.g_min}")


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _angle(text: str) -> float:
    text = text.strip()
    if text.startswith("pi/"):
        return math.pi / float(text[3:])
    return float(text)


# -- output helpers -----------------------------------------------------------------

def _emit(text: str, out: str | None):
    if out:
        p = Path(out)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _contour(args, branch=None) -> ContourSpec:
    return ContourSpec.for_branch(branch or args.branch, _angle(args.theta), args.t_cut)


# -- subcommands --------------------------------------------------------------

def cmd_coeffs(args):
    cache = cache_dir(args.cache_dir)
    series, hit = get_series(args.order, cache)
    buf = io.StringIO()
    for k, c in enumerate(series.coeffs):
        buf.write(f"{k}\t{format_rational(c)}\n")
    _emit(buf.getvalue(), args.out)
    print(f"order {args.order}: {'cache hit' if hit else 'computed'} ({cache})", file=sys.stderr)


def cmd_borel(args):
    cache = cache_dir(args.cache_dir)
    p = get_pade(args.K, cache)
    res = inverse_borel(p, args.g, _contour(args), args.digits)
    _emit(res.to_json() + "\n", args.out)


def cmd_poles(args):
    p = get_pade(args.K, cache_dir(args.cache_dir))
    rep = pade_poles(p, args.digits, seed=args.seed)
    _emit(rep.to_csv(), args.out)


def cmd_fock(args):
    if args.M:
        res = fock_energy(args.g, args.M, args.digits, args.omega)
    else:
        res = converged_fock_energy(args.g, args.digits, omega=args.omega)
    _emit(res.to_json() + "\n", args.out)


def cmd_scan(args):
    Ms = [int(x) for x in args.M_list.split(",")]
    rows = convergence_scan(args.g, Ms, args.digits, args.count)
    text = scan_to_csv(rows, args.digits, 2 * args.count)
    if args.barrier:
        g = args.g
        lines = ["M,below_barrier,barrier,digits"]
        for M in Ms:
            mat = build_hamiltonian(FockProblem(g, M), args.digits)
            level = FockProblem(g, M).barrier_height()
            lines.append(f"{M},{count_below(mat, level)},{format_big(rational_to_big(level, 20), 12)},{args.digits}")
        text += "\n" + "\n".join(lines) + "\n"
    _emit(text, args.out)


def _grid_records(cfg: RunConfig, grid, Ks, cache: Path, with_fock=True):
    """Lateral sums and Fock energies on ``grid``; returns per-K record lists."""
    p = get_pade(cfg.order, cache)
    kc = known_coefficients()
    k0max, k1max = kc.max_k(2, 0), kc.max_k(2, 1)
    borel, fock = {}, {}
    for g in grid:
        borel[g] = inverse_borel(p, g, ContourSpec.for_branch("upper", cfg.theta, cfg.t_cut), cfg.digits)
        if with_fock:
            fock[g] = converged_fock_energy(g, cfg.fock_digits, M_start=100)
    out = {}
    for K in Ks:
        if K > k1max:
            raise DomainError(f"K={K} exceeds the tabulated instanton coefficients ({k1max})")
        Kr = min(K, k0max)
        recs = []
        for g in grid:
            e2 = two_instanton_truncated(g, K, "upper", kc, cfg.digits - 10, K_real=Kr)
            f = fock.get(g) if K <= k0max else None
            recs.append(compute_delta(g, K, borel[g], e2, f))
        out[K] = recs
    return out, borel, fock


def _records_from_csv(path) -> list[DeltaRecord]:
    recs = []
    with open(path, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            dr = row.get("delta_R") or None
            recs.append(DeltaRecord(
                g=Fraction(row["g"]), K=int(row["K"]), delta_I=parse_big(row["delta_I"]),
                delta_R=parse_big(dr) if dr else None,
                borel_digits=int(row.get("borel_digits") or 0)))
    return recs


def cmd_delta(args):
    cfg = _cfg_from_args(args)
    grid = log_grid(cfg.g_min, cfg.g_max, cfg.points)
    recs, _, _ = _grid_records(cfg, grid, cfg.K_list, cache_dir(args.cache_dir), not args.no_fock)
    allrecs = [r for K in cfg.K_list for r in recs[K]]
    _emit(deltas_to_csv(allrecs), args.out)


def cmd_fit(args):
    recs = [r for r in _records_from_csv(args.input) if r.K == args.K]
    vals = [(r.g, r.delta_I if args.channel == "imaginary" else r.delta_R) for r in recs]
    window = tuple(Fraction(x) for x in args.window.split(",")) if args.window else None
    fit = fit_loglog_slope(vals, window)
    digits = min((r.borel_digits for r in recs), default=0)
    _emit(fit.to_json(K=args.K, channel=args.channel, digits=digits) + "\n", args.out)


def cmd_extract(args):
    cfg = _cfg_from_args(args)
    grid = log_grid(cfg.g_min, cfg.g_max, cfg.points)
    with_fock = args.channel == "real"
    recs, _, _ = _grid_records(cfg, grid, [args.K], cache_dir(args.cache_dir), with_fock)
    est = extract_coefficients(recs[args.K], args.channel, known_coefficients(), args.k_max)
    _emit(estimates_to_csv(est), args.out)


def cmd_pipeline(args):
    cfg = RunConfig.from_mapping(read_config(args.config))
    report = Path(args.out or "report")
    report.mkdir(parents=True, exist_ok=True)
    cache = cache_dir(args.cache_dir)

    series, _ = get_series(cfg.order, cache)
    p = get_pade(cfg.order, cache)
    (report / "poles.csv").write_text(pade_poles(p, cfg.pole_digits, seed=cfg.seed).to_csv(),
                                      encoding="utf-8")

    grid = log_grid(cfg.g_min, cfg.g_max, cfg.points)
    Ks = sorted(set(cfg.K_list) | {-1})
    recs, borel, fock = _grid_records(cfg, grid, Ks, cache)

    lines = ["g,re,im,quad_tol,fock_M,fock_mean,digits,fock_digits"]
    for g in grid:
        b, f = borel[g], fock[g]
        lines.append(",".join([str(g), format_big(b.re, cfg.digits), format_big(b.im, cfg.digits),
                               format_big(b.quad_tol, 3) if b.quad_tol else "0", str(f.M),
                               format_big(f.mean, cfg.fock_digits), str(cfg.digits),
                               str(cfg.fock_digits)]))
    (report / "energies.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (report / "deltas.csv").write_text(
        deltas_to_csv([r for K in cfg.K_list for r in recs[K]]), encoding="utf-8")

    fits = []
    for K in cfg.K_list:
        for channel in ("imaginary", "real"):
            if channel == "real" and K > 2:
                continue
            pts = [(r.g, r.delta_I if channel == "imaginary" else r.delta_R) for r in recs[K]]
            try:
                f = fit_loglog_slope(pts)
                fits.append({"K": K, "channel": channel, "slope": f.slope, "stderr": f.stderr,
                             "window": [str(f.window[0]), str(f.window[1])], "points": f.count,
                             "digits": cfg.digits})
            except NumericalFailure as exc:
                fits.append({"K": K, "channel": channel, "error": str(exc), "detail": exc.payload})
    (report / "fits.json").write_text(_json({"fits": fits}), encoding="utf-8")

    kc = known_coefficients()
    xgrid = log_grid(cfg.g_min, cfg.extract_g_max, cfg.extract_points)
    xrecs, _, _ = _grid_records(cfg, xgrid, [-1, 2], cache, with_fock=False)
    win = (cfg.g_min, cfg.extract_window_max)
    est = extract_coefficients(xrecs[-1], "imaginary", kc, cfg.extract_k_max, window=win)[:2]
    est += extract_coefficients(xrecs[2], "imaginary", kc, cfg.extract_k_max, window=win)[:1]
    (report / "estimates.csv").write_text(estimates_to_csv(est), encoding="utf-8")

    lines = ["g,delta_I_K10,delta_I_borel,n4_floor_scaled,digits"]
    if 10 in recs:
        for r in recs[10]:
            imp = borel_improved_delta(r, kc, cfg.digits - 20)
            floor = n4_leading_bound(r.g, 30) / imaginary_scale(r.g, 30)
            lines.append(",".join([str(r.g), format_big(r.delta_I, 20), format_big(imp, 20),
                                   format_big(floor, 20), str(cfg.digits - 20)]))
        (report / "improved.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    summary = {"version": __version__, "order": cfg.order, "digits": cfg.digits,
               "fock_digits": cfg.fock_digits, "grid": [str(g) for g in grid],
               "seed": cfg.seed, "files": sorted(x.name for x in report.iterdir())}
    (report / "summary.json").write_text(_json(summary), encoding="utf-8")
    print(f"report written to {report}", file=sys.stderr)


def _cfg_from_args(args) -> RunConfig:
    m = {}
    if getattr(args, "config", None):
        m.update(read_config(args.config))
    for key in ("order", "digits", "fock_digits", "g_min", "g_max", "points"):
        v = getattr(args, key, None)
        if v is not None:
            m[key] = str(v)
    if getattr(args, "K_list", None):
        m["K_list"] = args.K_list
    return RunConfig.from_mapping(m)


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="resurgence", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--cache-dir", help=f"cache directory (env {CACHE_ENV})")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, out=True):
        p.add_argument("--cache-dir", default=argparse.SUPPRESS)
        if out:
            p.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("coeffs", help="perturbative coefficients eps_k")
    p.add_argument("--order", type=int, required=True)
    common(p)
    p.set_defaults(func=cmd_coeffs)

    p = sub.add_parser("borel", help="lateral Borel-Pade sum")
    p.add_argument("--g", type=_rational, required=True)
    p.add_argument("--K", type=int, default=200)
    p.add_argument("--branch", choices=["upper", "lower"], default="upper")
    p.add_argument("--theta", default="pi/4")
    p.add_argument("--t-cut", type=float, default=1.4)
    p.add_argument("--digits", type=int, default=80)
    common(p)
    p.set_defaults(func=cmd_borel)

    p = sub.add_parser("poles", help="Pade pole report")
    p.add_argument("--K", type=int, default=200)
    p.add_argument("--digits", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_poles)

    p = sub.add_parser("fock", help="cut Fock space energies")
    p.add_argument("--g", type=_rational, required=True)
    p.add_argument("--M", type=int, help="cut-off (default: double until converged)")
    p.add_argument("--digits", type=int, default=60)
    p.add_argument("--omega", type=_rational, default=Fraction(1))
    common(p)
    p.set_defaults(func=cmd_fock)

    p = sub.add_parser("scan", help="eigenvalue convergence table")
    p.add_argument("--g", type=_rational, required=True)
    p.add_argument("--M-list", required=True, help="comma separated, ascending")
    p.add_argument("--digits", type=int, default=30)
    p.add_argument("--count", type=int, default=10, help="eigenvalues per parity block")
    p.add_argument("--barrier", action="store_true", help="append below-barrier counts")
    common(p)
    p.set_defaults(func=cmd_scan)

    def grid_opts(p):
        p.add_argument("--config")
        p.add_argument("--order", type=int)
        p.add_argument("--digits", type=int)
        p.add_argument("--fock-digits", type=int, dest="fock_digits")
        p.add_argument("--g-min", type=_rational)
        p.add_argument("--g-max", type=_rational)
        p.add_argument("--points", type=int)

    p = sub.add_parser("delta", help="residual table on a coupling grid")
    grid_opts(p)
    p.add_argument("--K-list", dest="K_list", help="comma separated orders")
    p.add_argument("--no-fock", action="store_true")
    common(p)
    p.set_defaults(func=cmd_delta)

    p = sub.add_parser("fit", help="log-log slope of a residual column")
    p.add_argument("--input", required=True, help="CSV written by 'delta'")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--channel", choices=["imaginary", "real"], default="imaginary")
    p.add_argument("--window", help="g_lo,g_hi")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("extract", help="fit higher instanton coefficients")
    grid_opts(p)
    p.add_argument("--channel", choices=["imaginary", "real"], default="imaginary")
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--k-max", type=int, default=10)
    common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("pipeline", help="full desk-scale run into a report directory")
    p.add_argument("--config", required=True)
    common(p)
    p.set_defaults(func=cmd_pipeline)
    return ap


def run(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("a subcommand is required")
        if not hasattr(args, "cache_dir"):
            args.cache_dir = None
        args.func(args)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (NumericalFailure, DomainError, ValueError, OSError) as exc:
        payload = {"error": type(exc).__name__, "message": str(exc),
                   "payload": getattr(exc, "payload", {})}
        print(json.dumps(payload, default=str), file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
