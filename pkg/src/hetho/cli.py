"""Command-line interface.

Subcommands: ``analytic``, ``simulate``, ``compare``, ``sweep``, ``figure``
and ``oracle``.  Exit codes: 0 success, 1 tolerance or numerical failure,
2 usage or configuration error.  ``HETHO_THREADS`` caps the number of
worker processes used for replications.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import experiments as ex
from .analytic import pairwise_rate_per_speed_result, tier_association_probability
from .geometry import ServingGeometry, boundary_polylines
from .io import (
    RATE_COLUMNS,
    Scenario,
    dump_scenario,
    load_scenario,
    rate_matrix_rows,
    write_csv,
)
from .mobility import run_replications, estimate_rate_matrix, validate_sim
from .model import ConfigError, macro_pico_config
from .quadrature import QuadratureError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _report("usage", message)
        raise SystemExit(EXIT_USAGE)


def _report(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def _emit(header, rows, out: Optional[str]) -> None:
    text = write_csv(rows, header)
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _sibling(out: Optional[str], suffix: str) -> Optional[str]:
    if out in (None, "-"):
        return None
    p = Path(out)
    return str(p.with_name(f"{p.stem}_{suffix}{p.suffix or '.csv'}"))


def _scenario(args) -> Scenario:
    if getattr(args, "config", None):
        sc = load_scenario(args.config)
    else:
        sc = Scenario(macro_pico_config())
    if getattr(args, "dump_config", None):
        dump_scenario(sc, args.dump_config)
    return sc


def _sim(args):
    sim = ex.profile_sim(
        args.profile,
        duration=args.duration,
        replications=args.replications,
        walking_model=args.model,
        time_step=args.dt,
        disk_radius=args.disk_radius,
    )
    sim = replace(sim, base_seed=args.seed)
    return validate_sim(sim)


def _add_config(p, required=True):
    p.add_argument("config", nargs=None if required else "?", help="JSON config file")
    p.add_argument("--dump-config", metavar="PATH", help="write the normalized config to PATH")


def _add_sim(p):
    p.add_argument("--profile", choices=sorted(ex.PROFILES), default="desk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replications", type=int)
    p.add_argument("--duration", type=float, help="seconds")
    p.add_argument("--model", choices=("straight", "rwp"), default="straight")
    p.add_argument("--dt", type=float, help="time step in seconds (default: automatic)")
    p.add_argument("--disk-radius", type=float, help="deployment disk radius in meters")


def cmd_analytic(args) -> int:
    sc = _scenario(args)
    rm = ex.analytic_rates(sc)
    _emit(RATE_COLUMNS, rate_matrix_rows(rm), args.out)
    cfg = sc.network
    gam = [[m + 1, tier_association_probability(cfg, m)] for m in range(cfg.n_tiers)]
    per = []
    for m in range(cfg.n_tiers):
        for n in range(cfg.n_tiers):
            r = pairwise_rate_per_speed_result(cfg, m, n)
            per.append([m + 1, n + 1, r.value, r.error])
    if args.out not in (None, "-"):
        _emit(["m", "association_probability"], gam, _sibling(args.out, "association"))
        _emit(["m", "n", "rate_per_speed_per_m", "abs_error"], per, _sibling(args.out, "per_speed"))
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    sim = _sim(args)
    if sc.users is not None:
        raise ConfigError("the simulator supports a uniform UE density only")
    stats = run_replications(sc.network, sim, sc.speed)
    if args.jsonl:
        Path(args.jsonl).write_text("".join(s.to_json() + "\n" for s in stats))
    _emit(RATE_COLUMNS, rate_matrix_rows(estimate_rate_matrix(stats, sc.network)), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    if not (args.tolerance >= 0 and math.isfinite(args.tolerance)):
        raise ConfigError("tolerance must be a non-negative number")
    sc = _scenario(args)
    sim = _sim(args)
    an = ex.analytic_rates(sc)
    si = ex.simulated_rates(sc, sim)
    rows, ok = ex.compare_rates(an, si, args.tolerance, ci_aware=not args.strict)
    _emit(ex.COMPARE_COLUMNS, rows, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def _parse_values(text: str) -> tuple[float, ...]:
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            n = int(n)
            if n < 1:
                raise ValueError
            return tuple(float(lo) + (float(hi) - float(lo)) * i / max(n - 1, 1) for i in range(n))
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad value list {text!r}; use a,b,c or lo:hi:count") from None


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    spec = ex.SweepSpec(args.param, _parse_values(args.values), tuple(args.outputs.split(",")))
    sim = _sim(args) if args.simulate else None
    _emit(ex.SWEEP_COLUMNS, ex.run_sweep(sc, spec, sim), args.out)
    return EXIT_OK


def cmd_figure(args) -> int:
    sc = _scenario(args)
    sim = _sim(args) if (args.simulate or args.id == 8) else None
    header, rows = ex.figure_dataset(args.id, sc, sim)
    out = None if args.out_dir in (None, "-") else str(Path(args.out_dir) / f"figure{args.id}.csv")
    _emit(header, rows, out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    sc = _scenario(args)
    cfg = sc.network
    for t in (args.m, args.n):
        if not 1 <= t <= cfg.n_tiers:
            raise ConfigError(f"tier index {t} out of range")
    if args.distance <= 0 or args.displacement < 0:
        raise ConfigError("distance must be positive and displacement non-negative")
    g = ServingGeometry(args.distance, args.angle, args.displacement, args.m - 1, args.n - 1)
    lines = boundary_polylines(g, cfg, args.points)
    rows = [[name, i, float(x), float(y)] for name, pts in lines.items() for i, (x, y) in enumerate(pts)]
    _emit(["curve", "index", "x_m", "y_m"], rows, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hetho", description="Handover rates in multi-tier cellular networks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analytic", help="analytic rate matrix")
    _add_config(a)
    a.add_argument("-o", "--out", help="CSV path (default stdout)")
    a.set_defaults(func=cmd_analytic)

    s = sub.add_parser("simulate", help="Monte-Carlo rate matrix")
    _add_config(s)
    _add_sim(s)
    s.add_argument("-o", "--out", help="aggregate CSV path (default stdout)")
    s.add_argument("--jsonl", help="per-replication statistics as JSON lines")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="analytic against simulated rates")
    _add_config(c)
    _add_sim(c)
    c.add_argument("--tolerance", type=float, default=0.03, help="relative tolerance (default 0.03)")
    c.add_argument("--strict", action="store_true", help="ignore confidence intervals")
    c.add_argument("-o", "--out")
    c.set_defaults(func=cmd_compare)

    w = sub.add_parser("sweep", help="sweep one parameter")
    _add_config(w)
    _add_sim(w)
    w.add_argument("--param", required=True, help="e.g. tiers[2].bias, speed.mean")
    w.add_argument("--values", required=True, help="a,b,c or lo:hi:count")
    w.add_argument("--outputs", default="pairwise,total")
    w.add_argument("--simulate", action="store_true")
    w.add_argument("-o", "--out")
    w.set_defaults(func=cmd_sweep)

    f = sub.add_parser("figure", help="dataset behind one of the figures 4-9")
    f.add_argument("id", type=int)
    _add_config(f, required=False)
    _add_sim(f)
    f.add_argument("--simulate", action="store_true", help="add simulated columns (figures 4-7)")
    f.add_argument("--out-dir", default="-")
    f.set_defaults(func=cmd_figure)

    o = sub.add_parser("oracle", help="bad-region boundary polylines")
    _add_config(o, required=False)
    o.add_argument("--m", type=int, default=1, help="serving tier (1-based)")
    o.add_argument("--n", type=int, default=1, help="candidate tier (1-based)")
    o.add_argument("--distance", type=float, default=100.0, help="serving distance (m)")
    o.add_argument("--angle", type=float, default=math.pi, help="serving angle (rad)")
    o.add_argument("--displacement", type=float, default=10.0, help="UE displacement (m)")
    o.add_argument("--points", type=int, default=256)
    o.add_argument("-o", "--out")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except ConfigError as e:
        _report("config", str(e))
        return EXIT_USAGE
    except QuadratureError as e:
        _report("quadrature", str(e))
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
