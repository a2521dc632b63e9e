"""Batch harness: plans, slope fits, CSV/JSON outputs, determinism."""
import json
import math
from pathlib import Path

import numpy as np
import pytest

from lqac.errors import InsufficientPoints
from lqac.experiments import (
    CSV_COLUMNS,
    ExperimentPlan,
    default_checkpoints,
    fit_loglog_slope,
    preset_plan,
    run_batch,
)


class TestPlan:
    def test_presets_bind_paper_values(self):
        plan = preset_plan("stable-paper")
        params, x0 = plan.resolve_system()
        assert np.allclose(params.A, [[0.8, 0.1], [0.0, 0.8]])
        assert np.allclose(params.B, [[0.0], [1.0]])
        assert params.sigma == 1.0
        assert plan.algo.C_x == 1.0 and plan.algo.C_K == 5.0
        assert plan.algo.horizon == 10_000
        assert np.allclose(x0, 0.0)

        plan_bad = preset_plan("unstable-bad-k0")
        params_u, _ = plan_bad.resolve_system()
        assert np.allclose(params_u.Q, 10 * np.eye(3))
        assert np.allclose(plan_bad.algo.K0, -1.5 * np.eye(3))
        assert plan_bad.algo.C_K == 1000.0
        assert plan_bad.algo.horizon == 5_000

        plan_good = preset_plan("unstable-good-k0")
        assert np.allclose(
            plan_good.algo.K0, -np.array([[1.5, 0, 0], [3.5, 1.5, 0], [0, 3.5, 1.5]])
        )

    def test_checkpoint_bounds(self):
        with pytest.raises(ValueError):
            preset_plan("stable-paper", checkpoints=(1, 100))
        with pytest.raises(ValueError):
            preset_plan("stable-paper", checkpoints=(100, 20_000))

    def test_default_checkpoints(self):
        assert default_checkpoints(10_000) == (32, 64, 128, 256, 512, 1024, 2048, 4096, 8192, 10_000)
        assert default_checkpoints(40) == (32, 40)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            preset_plan("stable-paper", variants=("bogus",))


class TestSlopeFit:
    def test_exact_power_law(self):
        pts = [(t, 3.0 / t) for t in (10, 20, 40, 80, 160)]
        assert fit_loglog_slope(pts, (10, 160)) == pytest.approx(-1.0, abs=1e-12)

    def test_noisy_half_slope(self):
        rng = np.random.default_rng(11)
        pts = [
            (t, 2.0 * t**-0.5 * (1 + 0.01 * rng.standard_normal()))
            for t in np.geomspace(100, 10_000, 25)
        ]
        assert fit_loglog_slope(pts, (100, 10_000)) == pytest.approx(-0.5, abs=0.02)

    def test_log_exponent_removal(self):
        # y = t^{-1/4} log^{-1}(t): dividing by log^{-1}(t) recovers -1/4
        pts = [(t, t**-0.25 * math.log(t) ** -1.0) for t in np.geomspace(1e3, 1e4, 8)]
        got = fit_loglog_slope(pts, (1e3, 1e4), log_exponent=-1.0)
        assert got == pytest.approx(-0.25, abs=1e-9)

    def test_insufficient_points(self):
        with pytest.raises(InsufficientPoints):
            fit_loglog_slope([(10, 1.0), (20, 0.5)], (10, 20))


class TestRunBatch:
    def test_tiny_batch_rows_and_outputs(self, tmp_path):
        plan = preset_plan(
            "stable-paper",
            n_runs=2,
            base_seed=5,
            variants=("stepwise", "log"),
            horizon=64,
            checkpoints=(32, 64),
            output_dir=str(tmp_path / "out"),
        )
        result = run_batch(plan, jobs=1)
        assert len(result.rows) == 2 * 2 * 2
        csv_path = tmp_path / "out" / "raw.csv"
        text = csv_path.read_text()
        header = text.splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
        assert len(text.strip().splitlines()) == 1 + 8
        doc = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert doc["plan"]["n_runs"] == 2
        assert "stepwise" in doc["summary"]["variants"]

    def test_rerun_is_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            plan = preset_plan(
                "stable-paper",
                n_runs=2,
                base_seed=9,
                horizon=64,
                checkpoints=(32, 64),
                output_dir=str(out),
            )
            run_batch(plan, jobs=1)
        assert (out1 / "raw.csv").read_bytes() == (out2 / "raw.csv").read_bytes()
        # summaries differ only if the build string changes, compare parsed
        d1 = json.loads((out1 / "summary.json").read_text())
        d2 = json.loads((out2 / "summary.json").read_text())
        assert d1["summary"] == d2["summary"]

    def test_failures_recorded_not_raised(self):
        # a K0 that does not stabilize the true system fails at run start
        plan = preset_plan("stable-paper", n_runs=2, horizon=64, checkpoints=(32,))
        algo = plan.algo
        object.__setattr__(algo, "K0", np.array([[5.0, 5.0]]))
        result = run_batch(plan, jobs=1)
        assert len(result.summary.run_failures) == 2
        assert result.rows == []

    def test_pairing_shares_noise_streams(self):
        plan = preset_plan(
            "stable-paper",
            n_runs=1,
            base_seed=77,
            variants=("stepwise", "log"),
            horizon=64,
            checkpoints=(64,),
        )
        result = run_batch(plan, jobs=1)
        # same seed means the same oracle cost; the paired difference at the
        # checkpoint is then purely the controllers' difference
        rows = {r["variant"]: r for r in result.rows}
        assert rows["stepwise"]["cost_cum_oracle"] == rows["log"]["cost_cum_oracle"]
        assert rows["stepwise"]["seed"] == rows["log"]["seed"]

    def test_nan_sentinels_and_json_safety(self, tmp_path):
        # at t=32 with few samples the K region can be unsolvable; force the
        # situation by using a checkpoint right at the start
        plan = preset_plan(
            "stable-paper",
            n_runs=3,
            base_seed=123,
            horizon=32,
            checkpoints=(2, 32),
            output_dir=str(tmp_path / "o"),
        )
        result = run_batch(plan, jobs=1)
        stats = [r["stat_k"] for r in result.rows if r["t"] == 2]
        assert any(math.isnan(s) for s in stats)
        doc = json.loads((tmp_path / "o" / "summary.json").read_text())  # strict JSON
        assert doc["summary"]["checkpoints"] == [2, 32]
