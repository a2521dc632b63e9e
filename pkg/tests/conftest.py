"""Shared fixtures: paper systems, controller configs, and the session-scoped
Monte-Carlo batches that the statistical and acceptance tests consume.

Run with --mc-scale=quick to shrink the batches during development; the
acceptance tests then skip rather than assert at reduced power.
"""
from __future__ import annotations

import numpy as np
import pytest

from lqac import AlgoConfig, SystemParams, solve_dare
from lqac.experiments import preset_plan, run_batch

STABLE_CHECKPOINTS = (32, 64, 100, 128, 256, 512, 1024, 2048, 4096, 8192, 10_000)
UNSTABLE_CHECKPOINTS = (32, 64, 128, 200, 256, 512, 1024, 2048, 4096, 5_000)


def pytest_addoption(parser):
    parser.addoption(
        "--mc-scale",
        choices=("full", "quick"),
        default="full",
        help="Monte-Carlo scale: 'full' runs the acceptance-grade batches",
    )


@pytest.fixture(scope="session")
def mc_full(request) -> bool:
    return request.config.getoption("--mc-scale") == "full"


class AcceptanceReport:
    def __init__(self):
        self.lines = []

    def record(self, name: str, passed: bool, detail: str = ""):
        mark = "PASS" if passed else "FAIL"
        self.lines.append(f"[{mark}] {name}" + (f" -- {detail}" if detail else ""))


@pytest.fixture(scope="session")
def acceptance_report(request):
    report = AcceptanceReport()
    request.config._acceptance_report = report
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    report = getattr(config, "_acceptance_report", None)
    if report and report.lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in report.lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def stable_params() -> SystemParams:
    return SystemParams(
        A=[[0.8, 0.1], [0.0, 0.8]], B=[[0.0], [1.0]], Q=np.eye(2), R=[[1.0]], sigma=1.0
    )


@pytest.fixture(scope="session")
def stable_sol(stable_params):
    return solve_dare(stable_params)


@pytest.fixture(scope="session")
def unstable_params() -> SystemParams:
    return SystemParams(
        A=[[2.0, 0, 0], [4.0, 2.0, 0], [0, 4.0, 2.0]],
        B=np.eye(3),
        Q=10.0 * np.eye(3),
        R=np.eye(3),
        sigma=1.0,
    )


@pytest.fixture()
def stable_config() -> AlgoConfig:
    return AlgoConfig(
        beta=0.5,
        alpha=2.0,
        tau=1.0,
        C_x=1.0,
        C_K=5.0,
        K0=np.zeros((1, 2)),
        horizon=400,
        seed=42,
    )


# -- session-scoped Monte-Carlo batches ------------------------------------


@pytest.fixture(scope="session")
def stable_batch(mc_full):
    """Stable-paper system, stepwise variant, beta=1/2, alpha=2."""
    n_runs = 500 if mc_full else 40
    plan = preset_plan(
        "stable-paper",
        n_runs=n_runs,
        base_seed=0,
        variants=("stepwise",),
        checkpoints=STABLE_CHECKPOINTS,
    )
    return run_batch(plan, jobs=1)


@pytest.fixture(scope="session")
def paired_batch(mc_full):
    """Stable-paper system, stepwise and logarithmic variants on shared seeds."""
    n_runs = 200 if mc_full else 30
    plan = preset_plan(
        "stable-paper",
        n_runs=n_runs,
        base_seed=10_000,
        variants=("stepwise", "log"),
        checkpoints=STABLE_CHECKPOINTS,
    )
    return run_batch(plan, jobs=1)


@pytest.fixture(scope="session")
def beta09_batch(mc_full):
    """Stable-paper system with beta=0.9, alpha=0 for the slope criterion."""
    n_runs = 200 if mc_full else 30
    plan = preset_plan(
        "stable-paper",
        n_runs=n_runs,
        base_seed=20_000,
        variants=("stepwise",),
        beta=0.9,
        alpha=0.0,
        checkpoints=STABLE_CHECKPOINTS,
    )
    return run_batch(plan, jobs=1)


@pytest.fixture(scope="session")
def unstable_bad_batch(mc_full):
    n_runs = 100 if mc_full else 15
    plan = preset_plan(
        "unstable-bad-k0",
        n_runs=n_runs,
        base_seed=30_000,
        variants=("stepwise",),
        checkpoints=UNSTABLE_CHECKPOINTS,
    )
    return run_batch(plan, jobs=1)


@pytest.fixture(scope="session")
def unstable_good_batch(mc_full):
    n_runs = 100 if mc_full else 15
    plan = preset_plan(
        "unstable-good-k0",
        n_runs=n_runs,
        base_seed=30_000,
        variants=("stepwise",),
        checkpoints=UNSTABLE_CHECKPOINTS,
    )
    return run_batch(plan, jobs=1)


def snapshots_at(batch, variant: str, t: int):
    """All per-run snapshots of a batch at checkpoint t."""
    out = []
    for per in batch.runs[variant]:
        if per.failure is not None:
            continue
        for snap in per.snapshots:
            if snap.t == t:
                out.append(snap)
    return out
