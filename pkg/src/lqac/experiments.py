"""Monte-Carlo harness: batched seeded runs, coverage curves, regret ratios,
log-log slope fits, and stepwise-vs-logarithmic comparisons, persisted as
CSV (one row per run and checkpoint) plus a JSON summary."""
from __future__ import annotations

import dataclasses
import json
import math
import os
import subprocess
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import asymptotics, inference
from .controller import AlgoConfig, Logarithmic, Stepwise, run_adaptive, run_thompson
from .dynamics import CheckpointSnapshot
from .errors import InsufficientPoints, IoError, LqacError
from .lqr import SystemParams, solve_dare

CSV_COLUMNS = (
    "run",
    "variant",
    "t",
    "cost_cum",
    "cost_cum_oracle",
    "stat_ab",
    "stat_k",
    "stat_pred_full",
    "stat_pred_naive",
    "stat_pred_mean",
    "err_A",
    "err_B",
    "err_K",
    "err_fast",
    "reset_count",
    "seed",
)

VARIANTS = ("stepwise", "log", "thompson")


def stable_paper_system() -> tuple[SystemParams, np.ndarray]:
    params = SystemParams(
        A=[[0.8, 0.1], [0.0, 0.8]], B=[[0.0], [1.0]], Q=np.eye(2), R=[[1.0]], sigma=1.0
    )
    return params, np.zeros(2)


def unstable_paper_system() -> tuple[SystemParams, np.ndarray]:
    params = SystemParams(
        A=[[2.0, 0, 0], [4.0, 2.0, 0], [0, 4.0, 2.0]],
        B=np.eye(3),
        Q=10.0 * np.eye(3),
        R=np.eye(3),
        sigma=1.0,
    )
    return params, np.zeros(3)


UNSTABLE_K0_BAD = -1.5 * np.eye(3)
UNSTABLE_K0_GOOD = -np.array([[1.5, 0, 0], [3.5, 1.5, 0], [0, 3.5, 1.5]])


def default_checkpoints(horizon: int) -> tuple[int, ...]:
    """Geometric grid 32, 64, ... plus the horizon itself."""
    pts = []
    t = 32
    while t < horizon:
        pts.append(t)
        t *= 2
    pts.append(horizon)
    return tuple(pts)


@dataclass(frozen=True)
class ExperimentPlan:
    """A batch of seeded runs for one system and controller configuration.

    ``system`` is a preset name ("stable-paper", "unstable-bad-k0",
    "unstable-good-k0") or a custom SystemParams (then ``x0`` applies).
    Paired variants share per-run noise streams through the common seeds.
    """

    system: str | SystemParams
    algo: AlgoConfig
    variants: tuple[str, ...] = ("stepwise",)
    n_runs: int = 200
    checkpoints: tuple[int, ...] = ()
    output_dir: str | None = None
    base_seed: int = 0
    level: float = 0.95
    x0: np.ndarray | None = None

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r}")
        cps = tuple(sorted(set(int(t) for t in self.checkpoints))) or default_checkpoints(
            self.algo.horizon
        )
        for t in cps:
            if not 2 <= t <= self.algo.horizon:
                raise ValueError(f"checkpoint {t} outside [2, horizon]")
        object.__setattr__(self, "checkpoints", cps)
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must be in (0, 1)")

    def resolve_system(self) -> tuple[SystemParams, np.ndarray]:
        if isinstance(self.system, SystemParams):
            x0 = np.zeros(self.system.n) if self.x0 is None else np.asarray(self.x0, float)
            return self.system, x0
        if self.system == "stable-paper":
            return stable_paper_system()
        if self.system in ("unstable-bad-k0", "unstable-good-k0"):
            return unstable_paper_system()
        raise ValueError(f"unknown system preset {self.system!r}")


def preset_plan(
    name: str,
    n_runs: int = 200,
    base_seed: int = 0,
    variants: tuple[str, ...] = ("stepwise",),
    beta: float = 0.5,
    alpha: float = 2.0,
    tau: float = 1.0,
    horizon: int | None = None,
    checkpoints: tuple[int, ...] = (),
    output_dir: str | None = None,
    level: float = 0.95,
) -> ExperimentPlan:
    """Plans bound to the published experiment settings."""
    if name == "stable-paper":
        algo = AlgoConfig(
            beta=beta,
            alpha=alpha,
            tau=tau,
            C_x=1.0,
            C_K=5.0,
            K0=np.zeros((1, 2)),
            horizon=horizon or 10_000,
            seed=base_seed,
        )
    elif name in ("unstable-bad-k0", "unstable-good-k0"):
        K0 = UNSTABLE_K0_BAD if name == "unstable-bad-k0" else UNSTABLE_K0_GOOD
        algo = AlgoConfig(
            beta=beta,
            alpha=alpha,
            tau=tau,
            C_x=1.0,
            C_K=1000.0,
            K0=K0,
            horizon=horizon or 5_000,
            seed=base_seed,
        )
    else:
        raise ValueError(f"unknown preset {name!r}")
    return ExperimentPlan(
        system=name,
        algo=algo,
        variants=variants,
        n_runs=n_runs,
        checkpoints=checkpoints,
        output_dir=output_dir,
        base_seed=base_seed,
        level=level,
    )


@dataclass
class PerRun:
    """Compact per-run result kept in memory after the trajectory is dropped."""

    seed: int
    snapshots: list[CheckpointSnapshot]
    reset_half: int
    reset_final: int
    failure: str | None = None


@dataclass
class BatchSummary:
    """Aggregates per variant and checkpoint, plus cross-variant diagnostics."""

    checkpoints: list[int]
    level: float
    variants: dict[str, dict]
    paired_diff: dict | None
    tradeoff: dict | None
    acceptance: list[dict]
    run_failures: list[dict]

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class BatchResult:
    plan: ExperimentPlan
    params: SystemParams
    x0: np.ndarray
    sol: object
    runs: dict[str, list[PerRun]]
    rows: list[dict]
    summary: BatchSummary


def _variant_config(plan: ExperimentPlan, variant: str, seed: int) -> AlgoConfig:
    schedule = plan.algo.schedule
    if variant == "stepwise" or variant == "thompson":
        schedule = Stepwise()
    elif variant == "log":
        if not isinstance(schedule, Logarithmic):
            schedule = Logarithmic(2.0)
    return replace(plan.algo, seed=seed, schedule=schedule)


def _simulate_one(plan: ExperimentPlan, variant: str, run: int, engine: str) -> PerRun:
    params, x0 = plan.resolve_system()
    seed = plan.base_seed + run
    config = _variant_config(plan, variant, seed)
    runner = run_thompson if variant == "thompson" else run_adaptive
    try:
        record = runner(params, config, x0=x0, checkpoints=list(plan.checkpoints), engine=engine)
    except LqacError as exc:
        return PerRun(seed=seed, snapshots=[], reset_half=0, reset_final=0, failure=str(exc))
    half = config.horizon // 2
    return PerRun(
        seed=seed,
        snapshots=record.checkpoints,
        reset_half=int(record.reset_counts[half]),
        reset_final=int(record.reset_counts[config.horizon]),
    )


def run_batch(
    plan: ExperimentPlan, jobs: int | None = None, engine: str = "auto"
) -> BatchResult:
    """Execute the plan: n_runs independent seeded runs per variant.

    Paired variants share noise streams (seed = base_seed + run index).
    Writes raw CSV and a JSON summary to plan.output_dir when set. Per-run
    failures are recorded in the summary, never abort the batch.
    """
    params, x0 = plan.resolve_system()
    sol = solve_dare(params)
    runs: dict[str, list[PerRun]] = {}
    tasks = [(variant, run) for variant in plan.variants for run in range(plan.n_runs)]
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(
                    _simulate_one,
                    [plan] * len(tasks),
                    [v for v, _ in tasks],
                    [r for _, r in tasks],
                    [engine] * len(tasks),
                    chunksize=8,
                )
            )
    else:
        results = [_simulate_one(plan, v, r, engine) for v, r in tasks]
    for (variant, _), res in zip(tasks, results):
        runs.setdefault(variant, []).append(res)

    rows = _build_rows(plan, params, sol, runs)
    summary = summarize(plan, params, sol, runs, rows)
    result = BatchResult(
        plan=plan, params=params, x0=x0, sol=sol, runs=runs, rows=rows, summary=summary
    )
    if plan.output_dir is not None:
        write_outputs(result, plan.output_dir)
    return result


def _build_rows(plan, params, sol, runs) -> list[dict]:
    """One dict per (variant, run, checkpoint); region failures become NaN."""
    A, B, K = params.A, params.B, sol.K
    Q, R = params.Q, params.R
    sigma = params.sigma
    level = plan.level
    rows = []
    for variant in plan.variants:
        for run_idx, per_run in enumerate(runs[variant]):
            if per_run.failure is not None:
                continue
            for snap in per_run.snapshots:
                stat_ab = inference.ab_region_statistic(
                    snap, snap.gram, A, B, sigma, level, snap.t
                ).statistic
                try:
                    stat_k = inference.k_region_statistic(
                        snap, snap.gram, K, sigma, Q, R, level, snap.t
                    ).statistic
                except LqacError:
                    stat_k = math.nan
                try:
                    stat_full = inference.prediction_region_statistic(
                        snap, snap.gram, snap.x, snap.u, snap.x_next, sigma,
                        naive=False, level=level, t=snap.t,
                    ).statistic
                    stat_naive = inference.prediction_region_statistic(
                        snap, snap.gram, snap.x, snap.u, snap.x_next, sigma,
                        naive=True, level=level, t=snap.t,
                    ).statistic
                    stat_mean = inference.mean_prediction_statistic(
                        snap, snap.gram, snap.x, snap.u, A, B, sigma, level, snap.t
                    ).statistic
                except LqacError:
                    stat_full = stat_naive = stat_mean = math.nan
                try:
                    obs = asymptotics.observable_regret(snap, plan.algo, Q, R, snap.t)
                except LqacError:
                    obs = math.nan
                E_fast = snap.A_hat - A + (snap.B_hat - B) @ K
                rows.append(
                    {
                        "run": run_idx,
                        "variant": variant,
                        "t": snap.t,
                        "cost_cum": snap.cost_cum,
                        "cost_cum_oracle": snap.cost_cum_oracle,
                        "stat_ab": stat_ab,
                        "stat_k": stat_k,
                        "stat_pred_full": stat_full,
                        "stat_pred_naive": stat_naive,
                        "stat_pred_mean": stat_mean,
                        "err_A": float(np.linalg.norm(snap.A_hat - A)),
                        "err_B": float(np.linalg.norm(snap.B_hat - B)),
                        "err_K": float(np.linalg.norm(snap.K_hat - K)),
                        "err_fast": float(np.linalg.norm(E_fast)),
                        "reset_count": snap.reset_count,
                        "seed": per_run.seed,
                        "_obs_regret": obs,
                    }
                )
    return rows


def fit_loglog_slope(
    values, window: tuple[float, float], log_exponent: float = 0.0
) -> float:
    """OLS slope of log y on log t over the window (t_lo <= t <= t_hi).

    ``log_exponent`` divides y by log^e(t) first, used to remove the alpha
    effect from the slow-direction error curves.
    """
    t_lo, t_hi = window
    pts = [(t, y) for t, y in values if t_lo <= t <= t_hi]
    if len(pts) < 3:
        raise InsufficientPoints(f"need >= 3 points in window, got {len(pts)}")
    xs, ys = [], []
    for t, y in pts:
        y = y / math.log(t) ** log_exponent
        if not y > 0:
            raise ValueError("log-log fit needs positive values")
        xs.append(math.log(t))
        ys.append(math.log(y))
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    xc = xs - xs.mean()
    return float(xc @ (ys - ys.mean()) / (xc @ xc))


def regret_ratio_series(plan, params, sol, rows, variant: str = "stepwise") -> dict:
    """Per-checkpoint 5%/50%/95% quantiles of (empirical regret)/(expression)
    for both the parametric and the plug-in observable expressions."""
    out = {"checkpoints": list(plan.checkpoints)}
    for key in ("parametric", "observable"):
        out[key] = {"q05": [], "median": [], "q95": []}
    for t in plan.checkpoints:
        denom = asymptotics.parametric_regret(params, sol, plan.algo, t)
        ratios_p, ratios_o = [], []
        for row in rows:
            if row["variant"] != variant or row["t"] != t:
                continue
            regret = (row["cost_cum"] - row["cost_cum_oracle"]) / t
            ratios_p.append(regret / denom if denom else math.nan)
            obs = row["_obs_regret"]
            ratios_o.append(regret / obs if obs and not math.isnan(obs) else math.nan)
        for key, vals in (("parametric", ratios_p), ("observable", ratios_o)):
            vals = [v for v in vals if not math.isnan(v)]
            if vals:
                q05, med, q95 = np.percentile(vals, [5, 50, 95])
            else:
                q05 = med = q95 = math.nan
            out[key]["q05"].append(float(q05))
            out[key]["median"].append(float(med))
            out[key]["q95"].append(float(q95))
    return out


_STAT_KINDS = {
    "AB": "stat_ab",
    "K": "stat_k",
    "PredictFull": "stat_pred_full",
    "PredictNaive": "stat_pred_naive",
    "PredictMean": "stat_pred_mean",
}

_KIND_DOF = {
    "AB": lambda n, d: n * (n + d),
    "K": lambda n, d: n * d,
    "PredictFull": lambda n, d: n,
    "PredictNaive": lambda n, d: n,
    "PredictMean": lambda n, d: n,
}


def coverage_series(plan, params, rows, variant: str = "stepwise", level: float | None = None) -> dict:
    """Per-checkpoint empirical coverage by region kind with binomial SEs.

    Rows whose statistic is NaN (region not computable at that time) are
    excluded from that kind's denominator only.
    """
    level = plan.level if level is None else level
    n, d = params.n, params.d
    out = {"checkpoints": list(plan.checkpoints), "coverage": {}, "se": {}, "n_valid": {}}
    for kind, col in _STAT_KINDS.items():
        thr = inference.chi2_quantile(_KIND_DOF[kind](n, d), level)
        cov_list, se_list, n_list = [], [], []
        for t in plan.checkpoints:
            stats = [
                row[col]
                for row in rows
                if row["variant"] == variant and row["t"] == t and not math.isnan(row[col])
            ]
            m = len(stats)
            if m == 0:
                cov_list.append(math.nan)
                se_list.append(math.nan)
                n_list.append(0)
                continue
            p = sum(1 for s in stats if s <= thr) / m
            cov_list.append(p)
            se_list.append(math.sqrt(p * (1 - p) / m))
            n_list.append(m)
        out["coverage"][kind] = cov_list
        out["se"][kind] = se_list
        out["n_valid"][kind] = n_list
    return out


def _error_curves(plan, rows, variant: str) -> dict:
    curves = {"err_A": [], "err_B": [], "err_K": [], "err_fast": []}
    for t in plan.checkpoints:
        for key in curves:
            vals = [
                row[key]
                for row in rows
                if row["variant"] == variant and row["t"] == t
            ]
            curves[key].append(float(np.mean(vals)) if vals else math.nan)
    return curves


def summarize(plan, params, sol, runs, rows) -> BatchSummary:
    variants_out = {}
    alpha = plan.algo.alpha
    horizon = plan.algo.horizon
    window = (horizon // 10, horizon)
    for variant in plan.variants:
        ratio = regret_ratio_series(plan, params, sol, rows, variant)
        cov = coverage_series(plan, params, rows, variant)
        errs = _error_curves(plan, rows, variant)
        slopes = {}
        if sum(1 for t in plan.checkpoints if window[0] <= t <= window[1]) >= 3:
            def pairs(key):
                return list(zip(plan.checkpoints, errs[key]))

            # slow-direction errors decay as t^{-beta/2} log^{-alpha/2}(t);
            # removing the alpha effect means multiplying by log^{alpha/2}(t)
            try:
                slopes = {
                    "err_fast": fit_loglog_slope(pairs("err_fast"), window),
                    "err_A": fit_loglog_slope(pairs("err_A"), window, -alpha / 2),
                    "err_B": fit_loglog_slope(pairs("err_B"), window, -alpha / 2),
                    "err_K": fit_loglog_slope(pairs("err_K"), window, -alpha / 2),
                }
            except (InsufficientPoints, ValueError):
                slopes = {}
        regret_mean, regret_median = [], []
        for t in plan.checkpoints:
            regs = [
                row["cost_cum"] - row["cost_cum_oracle"]
                for row in rows
                if row["variant"] == variant and row["t"] == t
            ]
            regret_mean.append(float(np.mean(regs)) if regs else math.nan)
            regret_median.append(float(np.median(regs)) if regs else math.nan)
        reset_stats = _reset_stats(plan, runs[variant])
        variants_out[variant] = {
            "regret_ratio": ratio,
            "coverage": cov,
            "error_curves": errs,
            "slopes": slopes,
            "cum_regret_mean": regret_mean,
            "cum_regret_median": regret_median,
            "reset": reset_stats,
        }

    paired = None
    if "stepwise" in plan.variants and "log" in plan.variants:
        paired = _paired_diff(plan, rows)

    tradeoff = _tradeoff(plan, params, sol, runs, rows)

    failures = [
        {"variant": v, "run": i, "error": per.failure}
        for v in plan.variants
        for i, per in enumerate(runs[v])
        if per.failure is not None
    ]

    summary = BatchSummary(
        checkpoints=list(plan.checkpoints),
        level=plan.level,
        variants=variants_out,
        paired_diff=paired,
        tradeoff=tradeoff,
        acceptance=[],
        run_failures=failures,
    )
    summary.acceptance = _acceptance_checks(plan, summary)
    return summary


def _reset_stats(plan, per_runs) -> dict:
    half = plan.algo.horizon - plan.algo.horizon // 2
    fracs = [
        (p.reset_final - p.reset_half) / half for p in per_runs if p.failure is None
    ]
    finals = [p.reset_final for p in per_runs if p.failure is None]
    if not finals:
        return {"mean_total": math.nan, "late_fraction_mean": math.nan}
    return {
        "mean_total": float(np.mean(finals)),
        "late_fraction_mean": float(np.mean(fracs)),
    }


def _paired_diff(plan, rows) -> dict:
    """Per-checkpoint mean of (stepwise - log) cumulative regret over shared seeds."""
    out = {"checkpoints": list(plan.checkpoints), "mean": [], "se": [], "n": []}
    by_key = {}
    for row in rows:
        by_key[(row["variant"], row["run"], row["t"])] = (
            row["cost_cum"] - row["cost_cum_oracle"]
        )
    for t in plan.checkpoints:
        diffs = []
        for run in range(plan.n_runs):
            a = by_key.get(("stepwise", run, t))
            b = by_key.get(("log", run, t))
            if a is not None and b is not None:
                diffs.append(a - b)
        if diffs:
            arr = np.asarray(diffs)
            out["mean"].append(float(arr.mean()))
            out["se"].append(float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else math.nan)
            out["n"].append(len(arr))
        else:
            out["mean"].append(math.nan)
            out["se"].append(math.nan)
            out["n"].append(0)
    return out


def _tradeoff(plan, params, sol, runs, rows) -> dict | None:
    variant = "stepwise" if "stepwise" in plan.variants else plan.variants[0]
    t = plan.checkpoints[-1]
    regrets, errsB = [], []
    for run_idx, per in enumerate(runs[variant]):
        if per.failure is not None:
            continue
        for snap in per.snapshots:
            if snap.t == t:
                errsB.append(snap.B_hat - params.B)
        row_reg = [
            (row["cost_cum"] - row["cost_cum_oracle"]) / t
            for row in rows
            if row["variant"] == variant and row["t"] == t and row["run"] == run_idx
        ]
        regrets.extend(row_reg)
    if len(errsB) < 3:
        return None
    product = asymptotics.tradeoff_product(np.asarray(regrets), np.stack(errsB), t)
    reference = float(
        np.trace(params.B.T @ sol.P @ params.B + params.R) * params.sigma**2
    )
    return {
        "t": t,
        "matrix": product.tolist(),
        "reference": reference,
        "n_runs": len(errsB),
    }


def _acceptance_checks(plan, summary) -> list[dict]:
    """Verdicts computable from this batch alone (used by the CLI --check)."""
    checks = []
    horizon = plan.algo.horizon
    is_stable_paper = plan.system == "stable-paper"
    final_idx = summary.checkpoints.index(horizon) if horizon in summary.checkpoints else None
    for variant, agg in summary.variants.items():
        if variant == "thompson":
            continue
        if is_stable_paper and final_idx is not None and plan.n_runs >= 50:
            med = agg["regret_ratio"]["parametric"]["median"][final_idx]
            checks.append(
                {
                    "name": f"{variant}: parametric regret ratio in [0.7, 1.3] at T={horizon}",
                    "passed": bool(0.7 <= med <= 1.3),
                    "value": med,
                }
            )
            if plan.level == 0.95:
                for kind in ("AB", "K", "PredictMean", "PredictFull"):
                    c = agg["coverage"]["coverage"][kind][final_idx]
                    checks.append(
                        {
                            "name": f"{variant}: {kind} coverage in [0.90, 0.98] at t={horizon}",
                            "passed": bool(0.90 <= c <= 0.98),
                            "value": c,
                        }
                    )
            if agg["slopes"]:
                s = agg["slopes"]["err_fast"]
                checks.append(
                    {
                        "name": f"{variant}: fast-direction slope -0.5 +/- 0.1",
                        "passed": bool(abs(s + 0.5) <= 0.1),
                        "value": s,
                    }
                )
                s = agg["slopes"]["err_B"]
                checks.append(
                    {
                        "name": f"{variant}: input-matrix slope -beta/2 +/- 0.1",
                        "passed": bool(abs(s + plan.algo.beta / 2) <= 0.1),
                        "value": s,
                    }
                )
    if plan.system in ("unstable-bad-k0", "unstable-good-k0") and summary.variants:
        variant = "stepwise" if "stepwise" in summary.variants else plan.variants[0]
        agg = summary.variants[variant]
        cps = summary.checkpoints
        if 200 in cps and final_idx is not None:
            early = agg["cum_regret_median"][cps.index(200)]
            total = agg["cum_regret_median"][final_idx]
            dominant = bool(total > 0 and early / total >= 0.5)
            checks.append(
                {
                    "name": f"{variant}: first-200-step regret dominates the horizon total",
                    "passed": dominant,
                    "value": early / total if total else math.nan,
                }
            )
    return checks


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except Exception:
        pass
    return "unknown"


def _plan_echo(plan: ExperimentPlan) -> dict:
    algo = plan.algo
    echo = {
        "system": plan.system if isinstance(plan.system, str) else "custom",
        "variants": list(plan.variants),
        "n_runs": plan.n_runs,
        "checkpoints": list(plan.checkpoints),
        "base_seed": plan.base_seed,
        "level": plan.level,
        "algo": {
            "beta": algo.beta,
            "alpha": algo.alpha,
            "tau": algo.tau,
            "C_x": algo.C_x,
            "C_K": algo.C_K,
            "K0": np.asarray(algo.K0).tolist(),
            "horizon": algo.horizon,
            "schedule": (
                "stepwise"
                if isinstance(algo.schedule, Stepwise)
                else f"logarithmic({algo.schedule.ratio})"
            ),
        },
    }
    if isinstance(plan.system, SystemParams):
        p = plan.system
        echo["system_params"] = {
            "A": p.A.tolist(),
            "B": p.B.tolist(),
            "Q": p.Q.tolist(),
            "R": p.R.tolist(),
            "sigma": p.sigma,
        }
    return echo


def _json_safe(obj):
    """Replace NaN/inf floats by None so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _atomic_write(path: Path, text: str) -> None:
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_outputs(result: BatchResult, output_dir: str) -> tuple[Path, Path]:
    """Write raw.csv (documented schema) and summary.json atomically."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    lines = [",".join(CSV_COLUMNS)]
    ordered = sorted(
        result.rows,
        key=lambda r: (result.plan.variants.index(r["variant"]), r["run"], r["t"]),
    )
    for row in ordered:
        lines.append(",".join(_fmt(row[c]) for c in CSV_COLUMNS))
    csv_path = out / "raw.csv"
    _atomic_write(csv_path, "\n".join(lines) + "\n")

    doc = {
        "plan": _plan_echo(result.plan),
        "build": _git_describe(),
        "summary": _json_safe(result.summary.to_json()),
    }
    json_path = out / "summary.json"
    _atomic_write(
        json_path, json.dumps(doc, indent=1, allow_nan=False, sort_keys=True) + "\n"
    )
    return csv_path, json_path
