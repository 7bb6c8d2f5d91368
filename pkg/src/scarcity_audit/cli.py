"""Command-line front end.

    scarcity-audit allocate --population pop.csv --policy pol.json --budget 7
    scarcity-audit sweep    --population pop.csv --policy pol.json --pair s1,s2 --grid 0:10:101 --out series.csv
    scarcity-audit diagnose --population pop.csv --policy pol.json --pair s1,s2 --budget 7
    scarcity-audit oracle   --population pop.csv --policy pol.json --budget 7 --trials 100000 --seed 42

Exit codes: 0 success, 1 validation or usage error, 2 I/O error,
3 domain error (including a failed oracle comparison).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

from . import metrics, oracle
from .errors import DomainError, SignUndefined, UndefinedAtBreakpoint, UsageError, ValidationError
from .policy import (
    HierarchicalPolicy,
    Policy,
    WeightedPolicy,
    allocate,
    breakpoints,
    policy_to_dict,
    read_policy,
    saturation_thresholds,
    tension_report,
)
from .population import PopulationTable, read_population

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_DOMAIN = 3

UNDEFINED_BREAKPOINT = "undefined_at_breakpoint"
UNDEFINED_EQUAL = "undefined_equal_rates"
UNDEFINED_LIMIT = "undefined_zero_denominator"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _pair(text: str) -> tuple[str, str]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError("expected two subgroup labels, e.g. s1,s2")
    return parts[0], parts[1]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scarcity-audit", description="Receipt-rate disparities when a scarce budget is prioritized.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, fmt_default="json"):
        p.add_argument("--population", required=True, help="category,subgroup,count CSV")
        p.add_argument("--policy", required=True, help="policy JSON")
        p.add_argument("--epsilon", type=float, default=metrics.DEFAULT_EPS)
        p.add_argument("--format", choices=("csv", "json"), default=fmt_default)
        p.add_argument("--out", help="write here instead of stdout")

    p = sub.add_parser("allocate", help="probabilities and receipt rates at one budget")
    common(p)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--pair", type=_pair, help="only report these two subgroups")

    p = sub.add_parser("sweep", help="metrics over a budget grid")
    common(p, fmt_default="csv")
    p.add_argument("--pair", type=_pair, required=True)
    p.add_argument("--grid", help="lo:hi:points (default 0:N:201)")

    p = sub.add_parser("diagnose", help="derivatives, limits and finite-difference checks")
    common(p)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--pair", type=_pair, required=True)
    p.add_argument("--scan", help="lo:hi:points range for the lnRD slope scan")

    p = sub.add_parser("oracle", help="compare analytic rates to a Monte Carlo lottery")
    common(p)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--pair", type=_pair, help="only report these two subgroups")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


def _fmt(x: float) -> str:
    return f"{x:.9f}"


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _write_csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _subgroups(table: PopulationTable, pair) -> list[str]:
    if pair:
        return list(pair)
    return [s for s, n in zip(table.subgroups, table.subgroup_sizes) if n > 0]


def cmd_allocate(args, table: PopulationTable, policy: Policy) -> tuple[str, int, str | None]:
    outcome = allocate(table, policy, args.budget)
    rates = {s: metrics.receipt_rate(table, outcome, s) for s in _subgroups(table, args.pair)}
    if args.format == "csv":
        rows = [("type", "label", "size", "probability", "expected_resources", "status")]
        for r in outcome.records():
            rows.append(("category", r["category"], r["size"], _fmt(r["probability"]),
                         _fmt(r["expected_resources"]), r["status"]))
        for s, g in rates.items():
            n = int(table.subgroup_column(s).sum())
            rows.append(("subgroup", s, n, _fmt(g), _fmt(g * n), ""))
        return _write_csv(rows), EXIT_OK, None
    report = {
        "policy": policy_to_dict(policy),
        "budget": outcome.budget,
        "P": [float(p) for p in outcome.probabilities],
        "categories": outcome.records(),
        "cutoff": outcome.cutoff,
        "unspent": outcome.unspent,
        "receipt_rates": rates,
    }
    if isinstance(policy, WeightedPolicy):
        report["saturation_thresholds"] = saturation_thresholds(table, policy)
    return _dumps(report), EXIT_OK, None


def cmd_sweep(args, table: PopulationTable, policy: Policy) -> tuple[str, int, str | None]:
    grid = metrics.parse_grid(args.grid) if args.grid else None
    series = metrics.sweep(table, policy, args.pair, grid, args.epsilon)
    summary = "breakpoints: " + " ".join(repr(float(b)) for b in series.breakpoints)
    if series.thresholds:
        summary += "\nsaturation thresholds: " + " ".join(
            f"{c}={v!r}" for c, v in series.thresholds.items()
        )
    body = series.to_csv() if args.format == "csv" else series.to_json() + "\n"
    return body, EXIT_OK, summary


def _guard(fn, *a):
    try:
        return fn(*a)
    except SignUndefined:
        return UNDEFINED_EQUAL
    except UndefinedAtBreakpoint:
        return UNDEFINED_BREAKPOINT


def _with_fd(analytic, metric, budget, segment):
    if isinstance(analytic, str):
        return analytic
    if segment is None:
        return {"analytic": analytic, "finite_difference": UNDEFINED_BREAKPOINT}
    fd = _guard(oracle.finite_difference, metric, budget, None, segment)
    return {"analytic": analytic, "finite_difference": fd}


def cmd_diagnose(args, table: PopulationTable, policy: Policy) -> tuple[str, int, str | None]:
    if args.format != "json":
        raise UsageError("diagnose only writes JSON")
    s1, s2 = args.pair
    eps = args.epsilon
    budget = args.budget
    point = metrics.disparity_point(table, policy, budget, s1, s2, eps)
    hier = isinstance(policy, HierarchicalPolicy)
    try:
        segment = oracle.segment_around(table, policy, budget)
    except UndefinedAtBreakpoint:
        segment = None

    def g(s):
        return lambda b: metrics.disparity_point(table, policy, b, s1, s2, eps).rates[s]

    def ad(b):
        return metrics.disparity_point(table, policy, b, s1, s2, eps).ad

    def lnrd(b):
        return metrics.disparity_point(table, policy, b, s1, s2, eps).lnrd

    dG = {
        s: _with_fd(_guard(metrics.dG_dB, table, policy, budget, s), g(s), budget, segment)
        for s in (s1, s2)
    }
    dAD = _with_fd(_guard(metrics.dAD_dB, table, policy, budget, s1, s2), ad, budget, segment)
    dln = _guard(metrics.dlnRD_dB, table, policy, budget, s1, s2, eps)
    dln_report = _with_fd(dln, lnrd, budget, segment)
    if isinstance(dln_report, dict):
        dln_report["magnitude"] = abs(dln)

    tension = {}
    for cat, t in tension_report(table, policy, budget).items():
        tension[cat] = {
            "first": t.first,
            "second": t.second,
            "inter": t.inter,
            "fd_first": oracle.population_partial_fd(table, policy, budget, cat),
            "fd_second": oracle.population_partial_fd(table, policy, budget, cat, order=2),
        }

    report = {
        "policy": policy_to_dict(policy),
        "budget": point.budget,
        "pair": [s1, s2],
        "epsilon": eps,
        "breakpoint": segment is None,
        "rates": point.rates,
        "AD": point.ad,
        "RD": point.rd,
        "lnRD": point.lnrd,
        "eps_dominated": point.eps_dominated,
        "tension": tension,
        "derivatives": {"dG_dB": dG, "dAD_dB": dAD, "dlnRD_dB": dln_report},
        "breakpoints": [float(b) for b in breakpoints(table, policy)],
    }
    if hier:
        try:
            rd_low, rd_full = metrics.hier_lowbudget_limits(table, policy, s1, s2)
            report["limits"] = {"RD_low": rd_low, "lnRD_low": math.log(rd_low), "RD_full": rd_full}
        except DomainError:
            report["limits"] = UNDEFINED_LIMIT
    else:
        report["saturation_thresholds"] = saturation_thresholds(table, policy)
    if args.scan:
        lo, hi, pts = metrics.parse_grid(args.scan)
        scan = metrics.scan_log_ratio(table, policy, s1, s2, lo, hi, pts, eps)
        report["scan"] = {
            "lo": scan.lo,
            "hi": scan.hi,
            "points": scan.points,
            "max_abs_dlnRD_dB": None if math.isnan(scan.max_slope) else scan.max_slope,
            "argmax": None if math.isnan(scan.argmax) else scan.argmax,
            "lnRD_min": scan.lnrd_min,
            "lnRD_max": scan.lnrd_max,
            "lnRD_spread": scan.spread,
        }
    return _dumps(report), EXIT_OK, None


def cmd_oracle(args, table: PopulationTable, policy: Policy) -> tuple[str, int, str | None]:
    config = oracle.TrialConfig(args.trials, args.seed)
    outcome = allocate(table, policy, args.budget)
    emp = oracle.simulate(table, policy, args.budget, config)
    rows = []
    for s in _subgroups(table, args.pair):
        analytic = metrics.receipt_rate(table, outcome, s) + args.perturb
        mean, se = emp.rate(s), emp.se(s)
        if se > 0:
            z = (mean - analytic) / se
            ok = abs(z) <= 3.0
        else:
            z = 0.0 if mean == analytic else None
            ok = mean == analytic
        rows.append({
            "subgroup": s,
            "analytic": analytic,
            "mean": mean,
            "stderr": se,
            "z": z,
            "pass": ok,
            "trials": emp.trials,
            "seed": emp.seed,
        })
    all_pass = all(r["pass"] for r in rows)
    code = EXIT_OK if all_pass else EXIT_DOMAIN
    if args.format == "csv":
        out = [("subgroup", "analytic", "mean", "stderr", "z", "pass")]
        for r in rows:
            z = "" if r["z"] is None else _fmt(r["z"])
            out.append((r["subgroup"], _fmt(r["analytic"]), _fmt(r["mean"]),
                        _fmt(r["stderr"]), z, "pass" if r["pass"] else "fail"))
        return _write_csv(out), code, None
    report = {
        "policy": policy_to_dict(policy),
        "budget": outcome.budget,
        "trials": config.trials,
        "seed": config.seed,
        "results": rows,
        "all_pass": all_pass,
    }
    return _dumps(report), code, None


COMMANDS = {
    "allocate": cmd_allocate,
    "sweep": cmd_sweep,
    "diagnose": cmd_diagnose,
    "oracle": cmd_oracle,
}


def _load(path, reader, what):
    try:
        return reader(path)
    except FileNotFoundError:
        raise OSError(f"{what} file not found: {path}") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        table = _load(args.population, read_population, "population")
        policy = _load(args.policy, read_policy, "policy")
        body, code, summary = COMMANDS[args.command](args, table, policy)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(body)
            if summary:
                print(summary)
        else:
            sys.stdout.write(body)
            if summary:
                print(summary, file=sys.stderr)
        if code == EXIT_DOMAIN:
            print("scarcity-audit: oracle comparison failed", file=sys.stderr)
        return code
    except (ValidationError, UsageError, KeyError, UnicodeDecodeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"scarcity-audit: error: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    except DomainError as exc:
        print(f"scarcity-audit: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"scarcity-audit: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
