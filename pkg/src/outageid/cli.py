"""Command-line entry point.

Exit status is 0 on success, 1 on domain errors (bad case data, a power
flow that does not converge, mismatched inputs) and 2 on usage errors.
Diagnostics go to stderr; data goes to stdout or to the named files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from typing import Sequence

import numpy as np

from . import bench
from .lars import lars_path, select_outages, standardize
from .mdc import TABLE_THRESHOLDS, build_mdc, diagnosability_sweep
from .netmodel import CaseFormatError, NetworkModel, load_case
from .powerflow import DEFAULT_MAX_ITER, DEFAULT_TOL, PowerFlowError, solve_power_flow
from .sigmap import PmuPlacement, build_signature_map, dc_signature_map

DEFAULT_SEED = 42
DEFAULT_CASE = "case39"

log = logging.getLogger("outageid")


class DomainError(Exception):
    """Raised for failures that are not usage errors (exit status 1)."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# argument types


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {v}")
    return v


def _float_in(lo: float, hi: float, lo_open: bool = True):
    def parse(text: str) -> float:
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
        ok = (lo < v if lo_open else lo <= v) and v <= hi and math.isfinite(v)
        if not ok:
            left = "(" if lo_open else "["
            raise argparse.ArgumentTypeError(f"{v} outside {left}{lo}, {hi}]")
        return v

    return parse


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonneg_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def _list_of(item):
    def parse(text: str):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts:
            raise argparse.ArgumentTypeError("empty list")
        return tuple(item(p) for p in parts)

    return parse


def _choice(options: Sequence[str]):
    def parse(text: str) -> str:
        if text not in options:
            raise argparse.ArgumentTypeError(f"{text!r} not one of {', '.join(options)}")
        return text

    return parse


_unit = _float_in(0.0, 1.0)


# ---------------------------------------------------------------------------
# file helpers


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    try:
        return open(path, "w", newline=""), True
    except OSError as exc:
        raise DomainError(f"cannot write {path}: {exc.strerror}") from exc


def _write_text(path: str | None, text: str) -> None:
    fh, close = _open_out(path)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()


def _read_rows(path: str) -> list[list[str]]:
    try:
        with open(path, newline="") as fh:
            return [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    except OSError as exc:
        raise DomainError(f"cannot read {path}: {exc.strerror}") from exc


def _number(text: str, path: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DomainError(f"{path}: {text!r} is not a number") from None


def read_map_csv(path: str):
    """Read a map written by ``map``: header ``bus,<line ids>``, one row per PMU."""
    rows = _read_rows(path)
    if len(rows) < 2:
        raise DomainError(f"{path}: expected a header and at least one data row")
    header = rows[0]
    try:
        line_ids = tuple(int(h) for h in header[1:])
    except ValueError:
        raise DomainError(f"{path}: header must be 'bus' followed by line ids") from None
    buses, data = [], []
    for r in rows[1:]:
        if len(r) != len(header):
            raise DomainError(f"{path}: row for bus {r[0]} has {len(r) - 1} values, "
                              f"header lists {len(line_ids)} lines")
        buses.append(r[0])
        data.append([_number(c, path) for c in r[1:]])
    f = np.array(data, dtype=float)
    if not np.all(np.isfinite(f)):
        raise DomainError(f"{path}: map contains NaN or Inf")
    return f, line_ids, buses


def read_vector_csv(path: str) -> np.ndarray:
    """One value per row; a two-column ``bus,value`` layout (with an optional
    header) is also accepted."""
    rows = _read_rows(path)
    vals = []
    for i, r in enumerate(rows):
        cell = r[-1].strip()
        try:
            vals.append(float(cell))
        except ValueError:
            if i == 0:
                continue  # header
            raise DomainError(f"{path}: {cell!r} is not a number") from None
    if not vals:
        raise DomainError(f"{path}: no values")
    return np.array(vals)


def _load(case: str) -> NetworkModel:
    try:
        return load_case(case)
    except FileNotFoundError as exc:
        raise DomainError(str(exc)) from exc
    except CaseFormatError as exc:
        raise DomainError(f"{case}: {exc}") from exc


def _solve(model: NetworkModel, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    state = solve_power_flow(model, tol=tol, max_iter=max_iter)
    if not state.converged:
        raise DomainError(
            f"power flow did not converge in {state.iterations} iterations "
            f"(mismatch {state.residual:.3g})"
        )
    return state


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    model = _load(args.case)
    state = _solve(model, args.tol, args.max_iter)
    deg = np.degrees(state.theta)
    if args.json:
        doc = {
            "case": model.name,
            "bus": [int(b) for b in model.bus_ids],
            "theta_deg": [float(t) for t in deg],
            "vmag": [float(v) for v in state.vmag],
            "p": [float(v) for v in state.p],
            "q": [float(v) for v in state.q],
            "iterations": state.iterations,
            "residual": state.residual,
            "converged": state.converged,
        }
        _write_text(args.out, json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return 0
    buf = io.StringIO()
    buf.write(f"{'bus':>5} {'type':<9} {'theta_deg':>12} {'vmag':>9}\n")
    for b, t, v in zip(model.buses, deg, state.vmag):
        buf.write(f"{int(model.bus_ids[b.id - 1]):>5} {b.kind.value:<9} {t:>12.6f} {v:>9.6f}\n")
    buf.write(f"iterations {state.iterations}\nresidual {state.residual:.3e}\n")
    _write_text(args.out, buf.getvalue())
    return 0


def _placement(args, model: NetworkModel) -> PmuPlacement:
    if args.pmu:
        try:
            return PmuPlacement(tuple(model.bus_index(b) + 1 for b in args.pmu))
        except ValueError as exc:
            raise DomainError(str(exc)) from exc
    print(f"placement seed: {args.seed}", file=sys.stderr)
    rng = np.random.default_rng(args.seed)
    try:
        return bench.sample_placement(model, args.coverage, rng, args.pmu_count)
    except ValueError as exc:
        raise DomainError(str(exc)) from exc


def cmd_map(args) -> int:
    model = _load(args.case)
    placement = _placement(args, model)
    if args.dc:
        sig = dc_signature_map(model, placement)
    else:
        sig = build_signature_map(model, _solve(model), placement)
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bus", *sig.line_ids])
        for b, row in zip(placement.buses, sig.f):
            w.writerow([int(model.bus_ids[b - 1]), *(_fmt(v) for v in row)])
    finally:
        if close:
            fh.close()
    return 0


def cmd_identify(args) -> int:
    f, line_ids, _ = read_map_csv(args.map)
    dtheta = read_vector_csv(args.dtheta)
    if dtheta.size != f.shape[0]:
        raise DomainError(
            f"measurement has {dtheta.size} entries but the map has {f.shape[0]} rows "
            f"({f.shape[0]} x {f.shape[1]})"
        )
    if f.shape[0] < 2:
        raise DomainError("the map needs at least two PMU rows")
    design = standardize(f, line_ids)
    steps = args.max_steps
    if steps is not None:
        steps = min(steps, max(1, f.shape[0] - 1))
    path = lars_path(design, dtheta, steps)
    res = select_outages(path, gamma=args.gamma, top_k=args.top_k)
    if args.path_csv:
        fh, close = _open_out(args.path_csv)
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "lambda", "event", "line", *line_ids])
            for q in range(len(path)):
                kind, line = path.events[q] if q < len(path.events) else ("none", 0)
                w.writerow([q, _fmt(path.lambdas[q]), kind, line,
                            *(_fmt(v) for v in path.betas[q])])
        finally:
            if close:
                fh.close()
    if args.json:
        doc = {
            "selected_lines": list(res.selected_lines),
            "coefficients": list(res.coefficients),
            "lambdas": [float(v) for v in path.lambdas],
            "rule": res.selection_rule,
            "degenerate": path.degenerate,
            "dropped_columns": list(design.dropped_columns),
        }
        print(json.dumps(doc, indent=1, sort_keys=True))
        return 0
    print("line,coefficient")
    for l, c in zip(res.selected_lines, res.coefficients):
        print(f"{l},{_fmt(c)}")
    print("lambdas " + " ".join(_fmt(v) for v in path.lambdas))
    if path.degenerate:
        print("note: rank-deficient active set met; minimum-norm directions used",
              file=sys.stderr)
    return 0


def cmd_mdc(args) -> int:
    f, line_ids, _ = read_map_csv(args.map)
    if f.shape[0] < 2:
        raise DomainError("correlations need at least two PMU rows")
    if args.sweep:
        rows = diagnosability_sweep(f, args.thresholds)
        buf = io.StringIO()
        buf.write("rho,diagnosability\n")
        for rho, v in rows:
            buf.write(f"{rho:g},{_fmt(v)}\n")
        _write_text(args.out, buf.getvalue())
        return 0
    import warnings

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cat = build_mdc(f, args.rho, line_ids)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    buf = io.StringIO()
    buf.write("line,cluster\n")
    for l, g in zip(cat.line_ids, cat.clusters):
        buf.write(f"{l},{' '.join(str(x) for x in sorted(g))}\n")
    buf.write(f"# diagnosability {_fmt(cat.diagnosability)} at rho {args.rho:g}\n")
    _write_text(args.out, buf.getvalue())
    return 0


def _bench_config(args) -> bench.BenchConfig:
    return bench.BenchConfig(
        case=args.case,
        coverages=tuple(args.coverage),
        runs=args.runs,
        kinds=tuple(args.kind),
        methods=tuple(args.method),
        rho=args.rho,
        gamma=args.gamma,
        max_steps=args.max_steps,
        sigma_fraction=args.noise,
        noise_floor=args.noise_floor,
        double_count=args.double_count,
        pmu_count=args.pmu_count,
        seed=args.seed,
        jobs=args.jobs,
    )


def _summary_lines(report: dict) -> list[str]:
    out = []
    for kind, by_cov in report["accuracy"].items():
        for cov, by_method in by_cov.items():
            for method, by_var in by_method.items():
                for variant, by_a in by_var.items():
                    meds = " ".join(f"{a}={st['median']:.3f}" for a, st in by_a.items())
                    out.append(f"{kind:<6} cov={cov:<5} {method:<5} {variant:<3} median {meds}")
    return out


def cmd_bench(args) -> int:
    cfg = _bench_config(args)
    print(f"seed: {cfg.seed}", file=sys.stderr)
    model = _load(cfg.case)
    report = bench.run_benchmark(cfg, model, keep_records=bool(args.per_scenario))
    records = report.pop("records", None)
    _write_text(args.out, bench.report_json(report) + "\n")
    if args.per_scenario:
        fh, close = _open_out(args.per_scenario)
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run", "kind", "coverage", "method", "lines", "feasible",
                        "selected", "augmented"])
            for r in records:
                w.writerow([
                    r["run"], r["kind"], f"{r.get('coverage', ''):g}" if "coverage" in r else "",
                    r.get("method", ""), " ".join(map(str, r["lines"])), int(r["feasible"]),
                    " ".join(map(str, r.get("selected", []))),
                    " ".join(map(str, r.get("augmented", []))),
                ])
        finally:
            if close:
                fh.close()
    if args.out not in (None, "-"):
        for line in _summary_lines(report):
            print(line, file=sys.stderr)
    return 0


def cmd_sweep_noise(args) -> int:
    cfg = _bench_config(args)
    print(f"seed: {cfg.seed}", file=sys.stderr)
    rows = bench.noise_sweep(cfg, args.levels, _load(cfg.case))
    buf = io.StringIO()
    buf.write("noise,kind,coverage,variant,a,median,q1,q3,mean\n")
    for r in rows:
        buf.write(
            f"{r['noise']:g},{r['kind']},{r['coverage']:g},{r['variant']},{r['a']},"
            f"{_fmt(r['median'])},{_fmt(r['q1'])},{_fmt(r['q3'])},{_fmt(r['mean'])}\n"
        )
    _write_text(args.out, buf.getvalue())
    return 0


def cmd_sweep_rho(args) -> int:
    cfg = _bench_config(args)
    print(f"seed: {cfg.seed}", file=sys.stderr)
    rows = bench.rho_sweep(cfg, args.thresholds, _load(cfg.case), with_accuracy=not args.no_accuracy)
    cols = list(rows[0].keys())
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for r in rows:
        buf.write(",".join(f"{r[c]:g}" if c in ("rho", "coverage") else _fmt(r[c]) for c in cols) + "\n")
    _write_text(args.out, buf.getvalue())
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_case(p) -> None:
    p.add_argument("--case", default=DEFAULT_CASE,
                   help="MATPOWER-style case file, canonical .json, or a bundled case name "
                        f"(default: {DEFAULT_CASE})")


def _add_out(p, what: str) -> None:
    p.add_argument("--out", "-o", default=None, help=f"write {what} here instead of stdout")


def _add_bench_options(
    p, runs: int, coverage=(0.25, 0.5), kinds=("single", "double"), skip=()
) -> None:
    """Shared benchmark flags; options named in ``skip`` keep their defaults
    but are not offered because the subcommand sets them itself."""
    _add_case(p)
    options = [
        ("--coverage", dict(type=_list_of(_unit), default=coverage,
                            help="comma-separated PMU coverage fractions (default: "
                                 + ",".join(f"{c:g}" for c in coverage) + ")")),
        ("--runs", dict(type=_positive_int, default=runs,
                        help=f"Monte-Carlo runs, each with fresh placements and draws "
                             f"(default: {runs})")),
        ("--kind", dict(type=_list_of(_choice(("single", "double"))), default=kinds,
                        help="comma-separated scenario kinds: single, double (default: "
                             + ",".join(kinds) + ")")),
        ("--method", dict(type=_list_of(_choice(bench.METHODS)), default=bench.METHODS,
                          help="comma-separated methods: lasso, corr, dc (default: all)")),
        ("--rho", dict(type=_unit, default=0.95,
                       help="MDC correlation threshold in (0, 1] (default: 0.95)")),
        ("--gamma", dict(type=_unit, default=bench.BenchConfig.gamma,
                         help="relative coefficient threshold for lasso selection "
                              f"(default: {bench.BenchConfig.gamma})")),
        ("--max-steps", dict(type=_positive_int, default=None,
                             help="cap on LARS steps (default: K-1)")),
        ("--noise", dict(type=_nonneg_float, default=0.05,
                         help="noise std as a fraction of the clean angle change "
                              "(default: 0.05)")),
        ("--noise-floor", dict(type=_nonneg_float, default=1e-6,
                               help="minimum noise std in radians (default: 1e-6)")),
        ("--double-count", dict(type=_positive_int, default=100,
                                help="number of random line pairs (default: 100)")),
        ("--pmu-count", dict(type=_positive_int, default=None,
                             help="fixed PMU count overriding round(coverage * N)")),
        ("--seed", dict(type=_nonneg_int, default=DEFAULT_SEED,
                        help=f"master seed for all randomness (default: {DEFAULT_SEED})")),
        ("--jobs", dict(type=_positive_int, default=1,
                        help="worker processes; results do not depend on it (default: 1)")),
    ]
    for flag, kw in options:
        if flag in skip:
            p.set_defaults(**{flag[2:].replace("-", "_"): kw["default"]})
        else:
            p.add_argument(flag, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        allow_abbrev=False,
        prog="outageid",
        description="Identify transmission-line outages from PMU angle changes.",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("solve", allow_abbrev=False, help="AC power flow of a case",
                       description="Solve the AC power flow from a flat start.")
    _add_case(p)
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    p.add_argument("--tol", type=_positive_float, default=DEFAULT_TOL,
                   help=f"mismatch tolerance in p.u. (default: {DEFAULT_TOL:g})")
    p.add_argument("--max-iter", type=_positive_int, default=DEFAULT_MAX_ITER,
                   help=f"Newton iteration cap (default: {DEFAULT_MAX_ITER})")
    _add_out(p, "the result")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("map", allow_abbrev=False, help="signature map as CSV",
                       description="Write the K x L outage signature map as CSV "
                                   "(rows = PMU buses, columns = line ids).")
    _add_case(p)
    p.add_argument("--pmu", type=_list_of(int), default=None,
                   help="comma-separated PMU bus numbers as in the case file")
    p.add_argument("--coverage", type=_unit, default=0.5,
                   help="PMU coverage for a random placement when --pmu is absent (default: 0.5)")
    p.add_argument("--pmu-count", type=_positive_int, default=None,
                   help="fixed PMU count overriding round(coverage * N)")
    p.add_argument("--seed", type=_nonneg_int, default=DEFAULT_SEED,
                   help=f"seed for the random placement (default: {DEFAULT_SEED})")
    p.add_argument("--dc", action="store_true", help="use the DC susceptance matrix instead of J")
    _add_out(p, "the CSV")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("identify", allow_abbrev=False, help="lasso path and selected lines",
                       description="Run the LARS lasso path on a measurement and select lines.")
    p.add_argument("--map", required=True, help="map CSV as written by 'map'")
    p.add_argument("--dtheta", required=True,
                   help="angle-change CSV in radians, one value per PMU row (map order)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--gamma", type=_unit, default=0.3,
                   help="keep lines with |b| >= gamma * max|b| (default: 0.3)")
    g.add_argument("--top-k", type=_positive_int, default=None,
                   help="keep the k largest coefficients instead")
    p.add_argument("--max-steps", type=_positive_int, default=None,
                   help="cap on LARS steps (default: K-1)")
    p.add_argument("--path-csv", default=None, help="dump every transition point to this CSV")
    p.add_argument("--json", action="store_true", help="emit JSON instead of text")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("mdc", allow_abbrev=False, help="minimal diagnosable clusters",
                       description="Cluster lines whose signatures correlate above a threshold.")
    p.add_argument("--map", required=True, help="map CSV as written by 'map'")
    p.add_argument("--rho", type=_unit, default=0.95,
                   help="absolute correlation threshold in (0, 1] (default: 0.95)")
    p.add_argument("--sweep", action="store_true",
                   help="emit diagnosability for each threshold in --thresholds instead")
    p.add_argument("--thresholds", type=_list_of(_unit), default=TABLE_THRESHOLDS,
                   help="thresholds for --sweep (default: "
                        + ",".join(f"{t:g}" for t in TABLE_THRESHOLDS) + ")")
    _add_out(p, "the CSV")
    p.set_defaults(func=cmd_mdc)

    p = sub.add_parser("bench", allow_abbrev=False, help="Monte-Carlo benchmark",
                       description="Run the seeded benchmark and write a JSON report.")
    _add_bench_options(p, runs=200)
    _add_out(p, "the JSON report")
    p.add_argument("--per-scenario", default=None, help="also write per-scenario records as CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep-noise", allow_abbrev=False, help="lasso accuracy versus noise level",
                       description="Lasso accuracy statistics for each noise level, "
                                   "on common random draws.")
    _add_bench_options(p, runs=200, kinds=("single",), skip=("--method", "--noise"))
    p.add_argument("--levels", type=_list_of(_nonneg_float), default=bench.NOISE_LEVELS,
                   help="comma-separated noise fractions (default: "
                        + ",".join(f"{v:g}" for v in bench.NOISE_LEVELS) + ")")
    _add_out(p, "the CSV")
    p.set_defaults(func=cmd_sweep_noise)

    p = sub.add_parser("sweep-rho", allow_abbrev=False, help="diagnosability and accuracy versus MDC threshold",
                       description="Table of V(rho) and Lasso+MDC accuracy per threshold, "
                                   "at the last listed coverage.")
    _add_bench_options(p, runs=200, coverage=(0.5,), skip=("--method", "--rho"))
    p.add_argument("--thresholds", type=_list_of(_unit), default=TABLE_THRESHOLDS,
                   help="comma-separated thresholds (default: "
                        + ",".join(f"{t:g}" for t in TABLE_THRESHOLDS) + ")")
    p.add_argument("--no-accuracy", action="store_true",
                   help="only compute diagnosability (fast)")
    _add_out(p, "the CSV")
    p.set_defaults(func=cmd_sweep_rho)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CaseFormatError, PowerFlowError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
