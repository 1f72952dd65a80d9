"""Command-line entry point and benchmark harness.

Subcommands: ``solve`` (exact mixed-integer solve), ``certified`` (lower bound
plus near-optimality certificate), ``oracle`` (enumeration ground truth),
``frontier`` (risk-reward curves and duality report), ``bench`` (sweep a daily
returns file over asset/sample sizes and a return-floor grid).

Exit codes: 0 solved/proven, 2 certificate not verified, 3 infeasible,
4 resource limits hit.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import io as vio
from .certify import DEFAULT_BETA, certify
from .core import (
    InfeasibleProblemError,
    ProblemSpec,
    ScenarioSet,
    exceedance_set,
    portfolio_quantile,
    validate_instance,
)
from .frontier import (
    duality_check,
    max_reward_curve,
    min_risk_curve,
    min_risk_fn,
    plateau_demo_instance,
    reward_cap_fn,
)
from .lowerbound import lower_bound
from .model import build_cvar_lp, build_full_milp
from .solve import (
    SolverLimits,
    extract_weights,
    oracle_max_return,
    oracle_var,
    solve_lp,
    solve_milp,
)

EXIT_OK = 0
EXIT_NOT_VERIFIED = 2
EXIT_INFEASIBLE = 3
EXIT_LIMITS = 4

ENV_TIME_LIMIT = "VARFOLIO_TIME_LIMIT"
ENV_MIP_GAP = "VARFOLIO_MIP_GAP"
ENV_DUAL_TOL = "VARFOLIO_DUAL_TOL"


def _limits_from(args) -> SolverLimits:
    time_limit = args.time_limit
    if time_limit is None and ENV_TIME_LIMIT in os.environ:
        time_limit = float(os.environ[ENV_TIME_LIMIT])
    gap = args.mip_gap
    if gap is None:
        gap = float(os.environ.get(ENV_MIP_GAP, 1e-6))
    dual_tol = getattr(args, "dual_tol", None)
    if dual_tol is None:
        dual_tol = float(os.environ.get(ENV_DUAL_TOL, 1e-7))
    return SolverLimits(time_limit=time_limit, mip_rel_gap=gap, dual_positive_tol=dual_tol)


def _load_instance(args) -> tuple[ScenarioSet, ProblemSpec]:
    inst = vio.InstanceFile.read(args.instance)
    scenarios, spec = inst.load(base_dir=os.path.dirname(os.path.abspath(args.instance)))
    if args.alpha is not None:
        spec = ProblemSpec(alpha=args.alpha, mu0=spec.mu0, bounds=spec.bounds, extra_rows=spec.extra_rows)
    if args.mu0 is not None:
        spec = spec.with_mu0(args.mu0)
    return scenarios, spec


def _write_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> int:
    scenarios, spec = _load_instance(args)
    limits = _limits_from(args)
    outcome = solve_milp(build_full_milp(scenarios, spec), limits)
    payload = {"status": outcome.status, "wall_time": outcome.wall_time}
    if outcome.primal is not None:
        weights = extract_weights(outcome, scenarios.n_assets)
        quantile = portfolio_quantile(weights, scenarios, spec.alpha)
        payload.update(
            {
                "weights": [float(w) for w in weights],
                "objective": outcome.objective,
                "quantile": quantile,
                "loss_var": -quantile,
                "best_bound": outcome.best_bound,
                "exceedances": list(exceedance_set(weights, scenarios, spec.alpha)),
            }
        )
    _write_json(payload, args.out)
    if outcome.status == "optimal":
        return EXIT_OK
    if outcome.status == "infeasible":
        return EXIT_INFEASIBLE
    return EXIT_LIMITS


def _lower_trace_csv(result, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "size", "objective", "quantile", "best_quantile", "seconds"])
        for i, rec in enumerate(result.trace, start=1):
            writer.writerow([i, rec.size, repr(rec.objective), repr(rec.quantile), repr(rec.best_quantile), repr(rec.wall_time)])


def _certify_trace_csv(cert, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "size", "relaxation_value", "added"])
        for i, rec in enumerate(cert.trace, start=1):
            writer.writerow([i, rec.size, repr(rec.relaxation_value), " ".join(map(str, rec.added))])


def cmd_certified(args) -> int:
    scenarios, spec = _load_instance(args)
    limits = _limits_from(args)
    initial = None
    if args.initial_set:
        initial = tuple(int(v) for v in args.initial_set.split(","))
    t0 = time.perf_counter()
    try:
        result = lower_bound(
            scenarios, spec, initial,
            max_iter=args.max_iter, time_limit=args.time_limit, limits=limits,
        )
    except InfeasibleProblemError as exc:
        _write_json({"status": "infeasible", "detail": str(exc)}, args.out)
        return EXIT_INFEASIBLE
    t_lower = time.perf_counter() - t0

    t0 = time.perf_counter()
    cert = certify(
        scenarios,
        spec,
        result,
        beta=args.beta,
        delta=args.delta,
        iter_max=args.certify_max_iter,
        time_limit=args.time_limit,
        limits=limits,
    )
    t_certify = time.perf_counter() - t0

    payload = {
        "bound": result.bound,
        "loss_var": -result.bound,
        "weights": [float(w) for w in result.portfolio.weights],
        "warm_start": list(result.warm_start),
        "termination": result.termination,
        "lower_iterations": result.iterations,
        "time_lower": t_lower,
        "time_certify": t_certify,
        "certificate": json.loads(cert.to_json()),
    }
    _write_json(payload, args.out)
    if args.lower_trace:
        _lower_trace_csv(result, args.lower_trace)
    if args.certify_trace:
        _certify_trace_csv(cert, args.certify_trace)
    return EXIT_OK if cert.proven else EXIT_NOT_VERIFIED


def cmd_oracle(args) -> int:
    scenarios, spec = _load_instance(args)
    result = oracle_var(scenarios, spec, max_subsets=args.max_subsets)
    payload = {
        "status": result.status,
        "value": None if result.value == float("-inf") else result.value,
        "weights": None if result.portfolio is None else [float(w) for w in result.portfolio.weights],
        "subset": None if result.subset is None else list(result.subset),
    }
    if args.threshold is not None:
        alt = oracle_max_return(scenarios, spec, args.threshold, max_subsets=args.max_subsets)
        payload["max_return"] = {
            "status": alt.status,
            "value": None if alt.value == float("-inf") else alt.value,
            "weights": None if alt.portfolio is None else [float(w) for w in alt.portfolio.weights],
        }
    _write_json(payload, args.out)
    return EXIT_OK if result.is_optimal else EXIT_INFEASIBLE


def _parse_grid(text: str) -> np.ndarray:
    try:
        start, stop, count = text.split(":")
        return np.linspace(float(start), float(stop), int(count))
    except ValueError:
        raise SystemExit(f"bad grid {text!r}, expected start:stop:count") from None


def cmd_frontier(args) -> int:
    if args.kind == "huber":
        scenarios, spec = None, None
    elif args.demo == "plateau":
        scenarios, spec = plateau_demo_instance()
    else:
        if args.instance is None:
            raise SystemExit("--instance (or --demo plateau / --kind huber) required")
        scenarios, spec = _load_instance(args)
    limits = _limits_from(args)
    grid = _parse_grid(args.grid)

    if args.axis == "reward":
        curve = min_risk_curve(scenarios, spec, grid, args.kind, kappa=args.kappa, limits=limits)
    else:
        curve = max_reward_curve(scenarios, spec, grid, args.kind, kappa=args.kappa, limits=limits)

    out = args.out or "-"
    rows = [["level", "value", "plateau_id", "status"]]
    for idx, point in enumerate(curve.points):
        rows.append([repr(point.level), repr(point.value), curve.plateau_id(idx), point.status])
    text = "\n".join(",".join(str(c) for c in row) for row in rows) + "\n"
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)

    if args.check:
        if args.axis != "reward":
            raise SystemExit("--check requires --axis reward")
        report = duality_check(
            curve,
            reward_cap_fn(scenarios, spec, args.kind, kappa=args.kappa, limits=limits),
            risk_fn=min_risk_fn(scenarios, spec, args.kind, kappa=args.kappa, limits=limits),
        )
        payload = {
            "consistent": report.consistent,
            "failures_on_plateaus": report.failures_on_plateaus,
            "interiors_fail": report.interiors_fail,
            "rows": [
                {
                    "level": r.level,
                    "risk": r.risk,
                    "reward_at_risk": r.reward_at_risk,
                    "equal": r.equal,
                    "in_plateau": r.in_plateau,
                }
                for r in report.rows
            ],
        }
        _write_json(payload, args.report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Benchmark sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Cell:
    n: int
    m: int
    mu0: float
    alpha: float
    returns: tuple  # row-major tuple of tuples, kept picklable for workers
    time_limit: float | None
    mip_gap: float
    max_iter: int
    certify_max_iter: int
    beta: float


def _bench_cell(cell: _Cell) -> dict:
    scenarios = ScenarioSet.from_returns(np.array(cell.returns))
    spec = ProblemSpec(alpha=cell.alpha, mu0=cell.mu0)
    limits = SolverLimits(time_limit=cell.time_limit, mip_rel_gap=cell.mip_gap)
    out: dict = {"n": cell.n, "m": cell.m, "mu0": cell.mu0}

    t0 = time.perf_counter()
    exact = solve_milp(build_full_milp(scenarios, spec), limits)
    out["t_exact"] = time.perf_counter() - t0
    out["exact_status"] = exact.status
    out["var_exact"] = exact.objective if exact.is_optimal else None

    t0 = time.perf_counter()
    try:
        lb = lower_bound(scenarios, spec, max_iter=cell.max_iter, time_limit=cell.time_limit, limits=limits)
        out["t_lower"] = time.perf_counter() - t0
        out["bound"] = lb.bound
        t0 = time.perf_counter()
        cert = certify(
            scenarios, spec, lb,
            beta=cell.beta, iter_max=cell.certify_max_iter,
            time_limit=cell.time_limit, limits=limits,
        )
        out["t_certify"] = time.perf_counter() - t0
        out["proven"] = cert.proven
        out["delta"] = cert.delta
    except InfeasibleProblemError:
        out["t_lower"] = time.perf_counter() - t0
        out["bound"] = None
        out["t_certify"] = 0.0
        out["proven"] = False
        out["delta"] = None

    t0 = time.perf_counter()
    cvar = solve_lp(build_cvar_lp(scenarios, spec), limits)
    out["t_cvar"] = time.perf_counter() - t0
    if cvar.is_optimal:
        w = extract_weights(cvar, scenarios.n_assets)
        out["cvar_bound"] = portfolio_quantile(w, scenarios, spec.alpha)
    else:
        out["cvar_bound"] = None
    return out


def _gap_pct(optimum: float | None, bound: float | None) -> float | None:
    if optimum is None or bound is None:
        return None
    scale = max(abs(optimum), 1e-12)
    return (optimum - bound) / scale * 100.0


def cmd_bench(args) -> int:
    limits = _limits_from(args)
    data = vio.parse_ff_daily(args.data)
    base = data.scenarios
    n_list = [int(v) for v in args.n_list.split(",")]
    m_list = [int(v) for v in args.m_list.split(",")]

    cells: list[_Cell] = []
    for n in n_list:
        for m in m_list:
            if n > base.n_assets or m > base.n_scenarios:
                raise SystemExit(
                    f"cell (n={n}, m={m}) exceeds data of shape "
                    f"({base.n_scenarios}, {base.n_assets})"
                )
            sub = ScenarioSet.from_returns(
                base.returns[:m, :n], asset_labels=base.asset_labels[:n]
            )
            for mu0 in vio.mu0_grid(sub, args.grid_k):
                cells.append(
                    _Cell(
                        n=n, m=m, mu0=mu0, alpha=args.alpha,
                        returns=tuple(map(tuple, sub.returns)),
                        time_limit=limits.time_limit, mip_gap=limits.mip_rel_gap,
                        max_iter=args.max_iter, certify_max_iter=args.certify_max_iter,
                        beta=args.beta,
                    )
                )

    workers = args.workers or max(1, (os.cpu_count() or 2) // 2)
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_bench_cell, cells))
    else:
        results = [_bench_cell(c) for c in cells]

    comparison = []
    for r in results:
        proven = r.get("proven")
        t_cert_total = r["t_lower"] + r["t_certify"]
        comparison.append(
            vio.ComparisonRecord(
                n=r["n"], m=r["m"], mu0=r["mu0"],
                var_exact=r["var_exact"],
                t_exact=r["t_exact"] if r["var_exact"] is not None else None,
                var_certified=r["bound"] if proven else None,
                t_certified=t_cert_total if proven else None,
            )
        )

    summaries = []
    for n in n_list:
        for m in m_list:
            group = [r for r in results if r["n"] == n and r["m"] == m]
            if not group:
                continue
            cert_gaps = [_gap_pct(r["var_exact"], r["bound"]) for r in group]
            cvar_gaps = [_gap_pct(r["var_exact"], r["cvar_bound"]) for r in group]
            ratios_cert, ratios_cvar = [], []
            for r in group:
                fastest = min(r["t_lower"], r["t_cvar"])
                if fastest > 0:
                    ratios_cert.append(r["t_lower"] / fastest)
                    ratios_cvar.append(r["t_cvar"] / fastest)
            mu0s = [r["mu0"] for r in group]
            summaries.append(
                vio.GapSummaryRecord(
                    n=n, m=m, mu0_min=min(mu0s), mu0_max=max(mu0s),
                    cert_gap_pct=_mean([g for g in cert_gaps if g is not None]),
                    cert_time_ratio=_mean(ratios_cert),
                    cvar_gap_pct=_mean([g for g in cvar_gaps if g is not None]),
                    cvar_time_ratio=_mean(ratios_cvar),
                )
            )

    vio.emit_results(comparison, format=args.format, path=f"{args.out_prefix}_comparison.{args.format}")
    vio.emit_results(summaries, format=args.format, path=f"{args.out_prefix}_gaps.{args.format}", shape="gap")

    hit_limits = any(r["var_exact"] is None or not r.get("proven") for r in results)
    return EXIT_LIMITS if hit_limits else EXIT_OK


def _mean(values) -> float | None:
    values = list(values)
    return sum(values) / len(values) if values else None


def cmd_validate(args) -> int:
    scenarios, spec = _load_instance(args)
    report = validate_instance(scenarios, spec)
    _write_json(
        {
            "ok": report.ok,
            "issues": list(report.issues),
            "k": report.k,
            "degenerate_lp": report.degenerate_lp,
            "mu0_attainable": report.mu0_attainable,
            "max_expected_return": report.max_expected_return,
            "mu_matches_sample_mean": report.mu_matches_sample_mean,
        },
        args.out,
    )
    return EXIT_OK if report.ok else EXIT_INFEASIBLE


def _add_instance_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", help="instance JSON file")
    p.add_argument("--alpha", type=float, default=None, help="override quantile level")
    p.add_argument("--mu0", type=float, default=None, help="override return floor")
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--mip-gap", type=float, default=None)
    p.add_argument("--dual-tol", type=float, default=None,
                   help="threshold above which a shadow price counts as positive")
    p.add_argument("--out", default=None, help="write JSON result here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varfolio", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="exact quantile-optimal portfolio")
    _add_instance_args(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("certified", help="lower bound plus near-optimality certificate")
    _add_instance_args(p)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--delta", type=float, default=None, help="certificate width (default 1%% of the bound)")
    p.add_argument("--initial-set", default=None,
                   help="comma-separated scenario indices seeding the search "
                        "(default: the leading ceil(2*alpha*m))")
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--certify-max-iter", type=int, default=50)
    p.add_argument("--lower-trace", default=None, help="CSV path for the lower-bound trace")
    p.add_argument("--certify-trace", default=None, help="CSV path for the certificate trace")
    p.set_defaults(func=cmd_certified)

    p = sub.add_parser("oracle", help="enumeration ground truth (small instances)")
    _add_instance_args(p)
    p.add_argument("--threshold", type=float, default=None, help="also run the max-return oracle at this quantile floor")
    p.add_argument("--max-subsets", type=int, default=10**6)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("frontier", help="risk-reward curves")
    _add_instance_args(p)
    p.add_argument("--kind", choices=["var", "cvar", "huber"], default="var")
    p.add_argument("--axis", choices=["reward", "risk"], default="reward")
    p.add_argument("--grid", required=True, help="start:stop:count")
    p.add_argument("--kappa", type=float, default=2.0)
    p.add_argument("--demo", choices=["plateau"], default=None)
    p.add_argument("--check", action="store_true", help="run the duality composition report")
    p.add_argument("--report", default=None, help="JSON path for the duality report")
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("bench", help="sweep a daily returns file")
    p.add_argument("--data", required=True, help="daily returns text file")
    p.add_argument("--n-list", required=True, help="comma-separated asset counts")
    p.add_argument("--m-list", required=True, help="comma-separated sample counts")
    p.add_argument("--grid-k", type=int, default=6)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--certify-max-iter", type=int, default=50)
    p.add_argument("--time-limit", type=float, default=3600.0)
    p.add_argument("--mip-gap", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="instance diagnostics")
    _add_instance_args(p)
    p.set_defaults(func=cmd_validate)

    return parser


def _apply_config(argv: list[str]) -> list[str]:
    """Expand ``--config FILE`` into flag tokens placed right after the
    subcommand, so flags given explicitly on the command line still win."""
    if "--config" not in argv:
        return argv
    argv = list(argv)
    pos = argv.index("--config")
    try:
        path = argv[pos + 1]
    except IndexError:
        raise SystemExit("--config requires a file path") from None
    with open(path) as fh:
        config = json.load(fh)
    del argv[pos : pos + 2]
    tokens: list[str] = []
    for key, value in config.items():
        flag = "--" + str(key).replace("_", "-")
        if value is True:
            tokens.append(flag)
        elif value is False or value is None:
            continue
        else:
            tokens.extend([flag, str(value)])
    argv[1:1] = tokens
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    args = build_parser().parse_args(_apply_config(argv))
    try:
        return args.func(args)
    except InfeasibleProblemError as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
