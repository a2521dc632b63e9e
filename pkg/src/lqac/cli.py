"""Command-line entry point: batch experiments, standalone DARE solves, and
region membership checks.

Exit codes: 0 success, 1 config/schema error, 2 acceptance-check failure
(with --check), 3 numeric infeasibility.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments, inference
from .controller import AlgoConfig, Logarithmic, Stepwise
from .errors import LqacError, NoConvergence, NotStabilizable
from .experiments import ExperimentPlan, preset_plan
from .lqr import SystemParams, solve_dare, spectral_radius

PRESET_NAMES = ("stable-paper", "unstable-bad-k0", "unstable-good-k0")

_ALGO_KEYS = {
    "beta",
    "alpha",
    "tau",
    "C_x",
    "C_K",
    "K0",
    "horizon",
    "schedule",
    "conjectural_updates",
}
_PLAN_KEYS = {
    "system",
    "variants",
    "n_runs",
    "base_seed",
    "checkpoints",
    "level",
    "output_dir",
    "x0",
    "algo",
}
_SYSTEM_KEYS = {"A", "B", "Q", "R", "sigma"}


class PlanError(ValueError):
    pass


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise PlanError(f"unknown key(s) {sorted(unknown)} in {where}")


def parse_plan(doc: dict) -> ExperimentPlan:
    """Validate a plan document (unknown keys rejected) into an ExperimentPlan."""
    if not isinstance(doc, dict):
        raise PlanError("plan must be a JSON object")
    _reject_unknown(doc, _PLAN_KEYS, "plan")
    system = doc.get("system", "stable-paper")
    if isinstance(system, dict):
        _reject_unknown(system, _SYSTEM_KEYS, "system")
        for key in ("A", "B", "Q", "R"):
            if key not in system:
                raise PlanError(f"system is missing {key!r}")
        system = SystemParams(
            A=system["A"],
            B=system["B"],
            Q=system["Q"],
            R=system["R"],
            sigma=float(system.get("sigma", 1.0)),
        )
    elif system not in PRESET_NAMES:
        raise PlanError(f"system must be a preset name {PRESET_NAMES} or an object")

    if "algo" not in doc:
        if not isinstance(system, str):
            raise PlanError("custom systems need an explicit algo section")
        base = preset_plan(system)
        algo_doc: dict = {}
        algo_default = base.algo
    else:
        algo_doc = doc["algo"]
        if not isinstance(algo_doc, dict):
            raise PlanError("algo must be an object")
        _reject_unknown(algo_doc, _ALGO_KEYS, "algo")
        algo_default = preset_plan(system).algo if isinstance(system, str) else None

    def algo_field(key, fallback=None):
        if key in algo_doc:
            return algo_doc[key]
        if algo_default is not None:
            return getattr(algo_default, key)
        if fallback is not None:
            return fallback
        raise PlanError(f"algo is missing {key!r}")

    schedule = algo_field("schedule", fallback=Stepwise())
    if isinstance(schedule, str):
        if schedule == "stepwise":
            schedule = Stepwise()
        else:
            raise PlanError("schedule must be \"stepwise\" or {\"log\": ratio}")
    elif isinstance(schedule, dict):
        if set(schedule) != {"log"}:
            raise PlanError("schedule object must have the single key \"log\"")
        schedule = Logarithmic(float(schedule["log"]))
    elif not isinstance(schedule, (Stepwise, Logarithmic)):
        raise PlanError("schedule must be \"stepwise\" or {\"log\": ratio}")

    try:
        algo = AlgoConfig(
            beta=float(algo_field("beta")),
            alpha=float(algo_field("alpha")),
            tau=float(algo_field("tau")),
            C_x=float(algo_field("C_x")),
            C_K=float(algo_field("C_K")),
            K0=np.asarray(algo_field("K0"), dtype=float),
            horizon=int(algo_field("horizon")),
            seed=int(doc.get("base_seed", 0)),
            schedule=schedule,
            conjectural_updates=bool(algo_field("conjectural_updates", fallback=False)),
        )
        plan = ExperimentPlan(
            system=system,
            algo=algo,
            variants=tuple(doc.get("variants", ["stepwise"])),
            n_runs=int(doc.get("n_runs", 200)),
            checkpoints=tuple(doc.get("checkpoints", ())),
            output_dir=doc.get("output_dir"),
            base_seed=int(doc.get("base_seed", 0)),
            level=float(doc.get("level", 0.95)),
            x0=None if doc.get("x0") is None else np.asarray(doc["x0"], dtype=float),
        )
    except (ValueError, TypeError) as exc:
        raise PlanError(str(exc)) from exc
    return plan


def _load_plan_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise PlanError(f"cannot read plan {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def cmd_run(args) -> int:
    try:
        if args.plan:
            doc = _load_plan_file(args.plan)
        elif args.preset:
            doc = {"system": args.preset}
        else:
            raise PlanError("either --preset or --plan is required")
        if args.runs is not None:
            doc["n_runs"] = args.runs
        if args.seed is not None:
            doc["base_seed"] = args.seed
        if args.out is not None:
            doc["output_dir"] = args.out
        if args.level is not None:
            doc["level"] = args.level
        if args.variant:
            doc["variants"] = args.variant
        algo_over = {
            k: v
            for k, v in (
                ("beta", args.beta),
                ("alpha", args.alpha),
                ("tau", args.tau),
                ("horizon", args.horizon),
            )
            if v is not None
        }
        if algo_over:
            doc["algo"] = {**doc.get("algo", {}), **algo_over}
        plan = parse_plan(doc)
    except PlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        result = experiments.run_batch(plan, jobs=args.jobs)
    except (NotStabilizable, NoConvergence) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except LqacError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    _print_summary(result)
    if plan.output_dir:
        print(f"wrote {Path(plan.output_dir) / 'raw.csv'} and summary.json")
    if args.check:
        checks = result.summary.acceptance
        failed = [c for c in checks if not c["passed"]]
        for c in checks:
            mark = "PASS" if c["passed"] else "FAIL"
            print(f"[{mark}] {c['name']} (value={c['value']:.4g})")
        if failed:
            return 2
    return 0


def _print_summary(result) -> None:
    summary = result.summary
    cps = summary.checkpoints
    print(f"checkpoints: {cps}")
    for variant, agg in summary.variants.items():
        last = len(cps) - 1
        med = agg["regret_ratio"]["parametric"]["median"][last]
        print(f"-- {variant}")
        print(f"   regret ratio (parametric) at t={cps[last]}: {med:.3f}")
        cov = agg["coverage"]["coverage"]
        line = ", ".join(f"{kind}={cov[kind][last]:.3f}" for kind in cov)
        print(f"   coverage at t={cps[last]}: {line}")
        if agg["slopes"]:
            line = ", ".join(f"{k}={v:.3f}" for k, v in agg["slopes"].items())
            print(f"   slopes: {line}")
        resets = agg["reset"]
        print(
            f"   resets: mean total {resets['mean_total']:.2f}, "
            f"late fraction {resets['late_fraction_mean']:.2e}"
        )
    if summary.paired_diff is not None:
        print(f"   paired regret diff (stepwise - log): {summary.paired_diff['mean'][-1]:.3f}")
    if summary.run_failures:
        print(f"   run failures: {len(summary.run_failures)}")


def _load_system_arg(args) -> SystemParams:
    if args.preset:
        params, _ = ExperimentPlan(
            system=args.preset, algo=preset_plan(args.preset).algo
        ).resolve_system()
        return params
    if args.file:
        doc = json.loads(Path(args.file).read_text())
    else:
        doc = json.loads(args.system)
    _reject_unknown(doc, _SYSTEM_KEYS, "system")
    return SystemParams(
        A=doc["A"], B=doc["B"], Q=doc["Q"], R=doc["R"], sigma=float(doc.get("sigma", 1.0))
    )


def cmd_dare(args) -> int:
    try:
        params = _load_system_arg(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError, LqacError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        sol = solve_dare(params)
    except NotStabilizable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    np.set_printoptions(precision=6, suppress=True)
    print("P =")
    print(sol.P)
    print("K =")
    print(sol.K)
    print(f"residual = {sol.residual:.3e}")
    print(f"rho(A+BK) = {spectral_radius(params.A + params.B @ sol.K):.6f}")
    return 0


_REGION_DOF = {
    "ab": lambda n, d: n * (n + d),
    "k": lambda n, d: n * d,
    "pred-full": lambda n, d: n,
    "pred-naive": lambda n, d: n,
    "pred-mean": lambda n, d: n,
}

_REGION_COLUMN = {
    "ab": "stat_ab",
    "k": "stat_k",
    "pred-full": "stat_pred_full",
    "pred-naive": "stat_pred_naive",
    "pred-mean": "stat_pred_mean",
}


def cmd_region(args) -> int:
    try:
        if args.stat is not None:
            stat = float(args.stat)
        elif args.csv is not None:
            lines = Path(args.csv).read_text().strip().splitlines()
            header = lines[0].split(",")
            col = _REGION_COLUMN[args.kind]
            if col not in header:
                raise ValueError(f"column {col} not in {args.csv}")
            row = lines[1 + args.row].split(",")
            stat = float(row[header.index(col)])
        else:
            raise ValueError("either --stat or --csv/--row is required")
        dof = _REGION_DOF[args.kind](args.n, args.d)
        threshold = inference.chi2_quantile(dof, args.level)
    except (ValueError, KeyError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if math.isnan(stat):
        print(f"statistic=nan threshold={threshold:.4f} covered=unknown")
        return 0
    covered = stat <= threshold
    print(f"statistic={stat:.4f} threshold={threshold:.4f} covered={str(covered).lower()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lqac",
        description="Adaptive LQ control experiments with exact asymptotic diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a Monte-Carlo batch plan")
    p_run.add_argument("--preset", choices=PRESET_NAMES, help="built-in experiment preset")
    p_run.add_argument("--plan", help="JSON plan file")
    p_run.add_argument("--runs", type=int, help="number of independent runs")
    p_run.add_argument("--horizon", type=int, help="steps per run")
    p_run.add_argument("--beta", type=float, help="exploration decay exponent")
    p_run.add_argument("--alpha", type=float, help="exploration log exponent")
    p_run.add_argument("--tau", type=float, help="exploration scale")
    p_run.add_argument("--seed", type=int, help="base seed (run i uses seed+i)")
    p_run.add_argument("--jobs", type=int, default=None, help="worker processes")
    p_run.add_argument("--out", help="output directory for raw.csv and summary.json")
    p_run.add_argument("--check", action="store_true", help="exit 2 unless built-in checks pass")
    p_run.add_argument(
        "--variant",
        action="append",
        choices=experiments.VARIANTS,
        help="controller variant (repeatable)",
    )
    p_run.add_argument("--level", type=float, help="confidence level for regions")
    p_run.set_defaults(func=cmd_run)

    p_dare = sub.add_parser("dare", help="solve the DARE for a system")
    p_dare.add_argument("--preset", choices=PRESET_NAMES)
    p_dare.add_argument("--system", help="inline JSON with A, B, Q, R[, sigma]")
    p_dare.add_argument("--file", help="JSON file with A, B, Q, R[, sigma]")
    p_dare.set_defaults(func=cmd_dare)

    p_region = sub.add_parser("region", help="evaluate a region membership verdict")
    p_region.add_argument("--kind", required=True, choices=sorted(_REGION_DOF))
    p_region.add_argument("--level", type=float, default=0.95)
    p_region.add_argument("--stat", type=float, help="statistic value")
    p_region.add_argument("--csv", help="raw.csv produced by `lqac run`")
    p_region.add_argument("--row", type=int, default=0, help="data row index in --csv")
    p_region.add_argument("--n", type=int, default=2, help="state dimension")
    p_region.add_argument("--d", type=int, default=1, help="input dimension")
    p_region.set_defaults(func=cmd_region)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
