import os

import numpy as np
import pytest

from crossdetect import detectors, estimators, harness
from crossdetect.clutter import SnapshotBatch, shard_rng
from crossdetect.errors import ConfigError
from crossdetect.scene import steering_for_angles

from conftest import rng


def small_cfg(**kw):
    base = dict(m=8, k_secondary=32, n_h0=4000, n_mc=400, pfa=1e-2, seed=7)
    base.update(kw)
    return harness.ExperimentConfig(**base)


class TestConfig:
    def test_defaults(self):
        cfg = harness.ExperimentConfig()
        assert cfg.k == 4 * cfg.m
        assert cfg.scene.m == cfg.m

    def test_fingerprint_stable_and_sensitive(self):
        a = small_cfg().fingerprint()
        assert a == small_cfg().fingerprint()
        assert a != small_cfg(rho1=0.5).fingerprint()
        # worker count must not change the fingerprint (outputs identical)
        assert a == small_cfg(workers=8).fingerprint()

    def test_invalid_pfa(self):
        with pytest.raises(ConfigError):
            small_cfg(pfa=1.5)

    def test_unresolvable_pfa(self):
        with pytest.raises(ConfigError):
            small_cfg(pfa=1e-4, n_h0=1000)

    def test_theta_grid_symmetric(self):
        grid = small_cfg(theta_grid_step_deg=10.0, theta_grid_span_deg=60.0).theta_grid()
        assert grid[0] == -60.0 and grid[-1] == 60.0
        assert np.allclose(grid, -grid[::-1])


class TestWilson:
    def test_known_value(self):
        lo, hi = harness.wilson_interval(8, 10)
        # standard worked example for 8/10 at 95%
        assert np.isclose(lo, 0.4902, atol=5e-4)
        assert np.isclose(hi, 0.9433, atol=5e-4)

    def test_degenerate_cases(self):
        assert harness.wilson_interval(0, 0) == (0.0, 1.0)
        lo, hi = harness.wilson_interval(0, 50)
        assert lo < 1e-12 and hi > 0.0
        lo, hi = harness.wilson_interval(50, 50)
        assert hi > 1.0 - 1e-12 and lo < 1.0

    def test_contains_point_estimate(self):
        for k, n in ((3, 17), (40, 100), (999, 1000)):
            lo, hi = harness.wilson_interval(k, n)
            assert lo <= k / n <= hi


class TestCsv:
    def test_format(self, tmp_path):
        path = tmp_path / "out.csv"
        harness.write_csv(path, ("a", "b"), [(1.0, 0.25), (2.0, 0.5)], "deadbeef", 42)
        lines = path.read_text().splitlines()
        assert lines[0] == "# config_fingerprint=deadbeef"
        assert lines[1] == "# seed=42"
        assert lines[2] == "a,b"
        assert lines[3] == "1,0.25"

    def test_curve_result_to_csv(self, tmp_path):
        cfg = small_cfg()
        curve = harness.pfa_curve(cfg, "nmf1", n_points=5)
        path = tmp_path / "pfa.csv"
        curve.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == f"# config_fingerprint={cfg.fingerprint()}"
        assert lines[2] == "threshold,pfa"
        assert len(lines) == 3 + 5


class TestDeterminism:
    def test_identical_across_worker_widths(self, tmp_path):
        outputs = []
        for width in (1, 4, 8):
            cfg = small_cfg(workers=width)
            curve = harness.pfa_curve(cfg, "m-nmf-r", n_points=10)
            path = tmp_path / f"w{width}.csv"
            curve.to_csv(path)
            outputs.append(path.read_bytes())
        assert outputs[0] == outputs[1] == outputs[2]

    def test_rerun_identical(self):
        a = harness._statistics(small_cfg(), "m-nmf-g", 500, "det")
        b = harness._statistics(small_cfg(), "m-nmf-g", 500, "det")
        assert np.array_equal(a, b)

    def test_thread_cap_env(self, monkeypatch):
        monkeypatch.setenv("CROSSDETECT_THREADS", "1")
        a = harness._statistics(small_cfg(workers=8), "nmf1", 300, "env")
        monkeypatch.delenv("CROSSDETECT_THREADS")
        b = harness._statistics(small_cfg(workers=8), "nmf1", 300, "env")
        assert np.array_equal(a, b)


class TestCalibration:
    def test_threshold_hits_target_pfa(self):
        cfg = small_cfg(n_h0=20000)
        thr = harness.calibrate_threshold(cfg, "m-nmf-r")
        emp = harness.empirical_pfa(cfg, "m-nmf-r", thr, n=20000, tag="check")[0]
        # fresh draw: within 3-sigma binomial noise of the nominal level
        sigma = np.sqrt(cfg.pfa * (1 - cfg.pfa) / 20000)
        assert abs(emp - cfg.pfa) < 3 * sigma + 1e-9

    def test_pfa_curve_monotone(self):
        curve = harness.pfa_curve(small_cfg(), "nmf1")
        thr, pfa = curve.rows[:, 0], curve.rows[:, 1]
        assert np.all(np.diff(thr) >= 0)
        assert np.all(np.diff(pfa) <= 0)

    def test_unknown_detector(self):
        with pytest.raises(ConfigError):
            harness.calibrate_threshold(small_cfg(), "bogus")


class TestPdCurve:
    def test_pd_increases_with_snr(self):
        cfg = small_cfg(n_mc=800, snr_grid_db=tuple(np.arange(0.0, 21.0, 4.0)))
        curve = harness.pd_curve(cfg, "m-nmf-r")
        pd = curve.rows[:, 1]
        # allow CI-level noise but demand a clear overall rise
        assert pd[-1] > 0.95
        assert pd[0] < 0.5
        violations = np.sum(np.diff(pd) < -0.05)
        assert violations == 0

    def test_ci_brackets_pd(self):
        cfg = small_cfg(snr_grid_db=(8.0, 12.0))
        curve = harness.pd_curve(cfg, "nmf1")
        for _, pd, lo, hi in curve.rows:
            assert lo <= pd <= hi

    def test_snr_at_pd_interpolates(self):
        rows = np.array([[0.0, 0.2, 0, 0], [1.0, 0.6, 0, 0], [2.0, 1.0, 0, 0]])
        curve = harness.CurveResult("x", ("snr_db", "pd", "lo", "hi"), rows, "f", 0)
        assert np.isclose(harness.snr_at_pd(curve, 0.8), 1.5)
        with pytest.raises(ValueError):
            harness.snr_at_pd(
                harness.CurveResult("x", curve.columns, rows[:1], "f", 0), 0.8
            )


class TestBatchedEngines:
    def test_batched_scm_matches_sequential(self):
        x = rng(0).standard_normal((3, 20, 8)) + 1j * rng(1).standard_normal((3, 20, 8))
        covs = harness.batched_scm(x)
        for c in range(3):
            ref = estimators.scm(SnapshotBatch(x[c])).matrix
            assert np.allclose(covs[c], ref)

    def test_batched_two_tyler_matches_sequential(self, small_scene):
        g = shard_rng(0, "bt", 0)
        from crossdetect.clutter import make_secondary

        batches = [make_secondary(small_scene, 40, g).x for _ in range(3)]
        covs = harness.batched_two_tyler(np.stack(batches))
        for c in range(3):
            ref = estimators.two_tyler(SnapshotBatch(batches[c])).matrix
            assert np.linalg.norm(covs[c] - ref) / np.linalg.norm(ref) < 1e-6

    def test_batched_tyler_single_matches_sequential(self, small_scene):
        g = shard_rng(1, "bt", 0)
        from crossdetect.clutter import make_secondary

        batches = [make_secondary(small_scene, 40, g).x[:, :8] for _ in range(3)]
        covs = harness.batched_tyler_single(np.stack(batches))
        for c in range(3):
            ref = estimators.tyler_single(batches[c]).matrix
            assert np.linalg.norm(covs[c] - ref) / np.linalg.norm(ref) < 1e-6

    def test_batched_statistics_match_detectors(self, small_scene):
        g = shard_rng(2, "bt", 0)
        from crossdetect.clutter import make_secondary

        steer = steering_for_angles(8, 20.0, 30.0)
        x = make_secondary(small_scene, 4, g).x
        sec = np.stack([make_secondary(small_scene, 40, g).x for _ in range(4)])
        for det in ("m-anmf-r-scm", "m-anmf-g-scm", "anmf1-scm", "anmf2-scm", "mimo-amf-scm"):
            base, _ = harness._ADAPTIVE_BASE[det]
            if base == "nmf1":
                covs = harness.batched_scm(sec[:, :, :8])
            elif base == "nmf2":
                covs = harness.batched_scm(sec[:, :, 8:])
            else:
                covs = harness.batched_scm(sec)
            fast = harness._batched_statistic(base, x, steer, covs)
            slow = [
                detectors.adaptive(det, x[t], steer, SnapshotBatch(sec[t])).statistic
                for t in range(4)
            ]
            assert np.allclose(fast, slow, rtol=1e-10)


class TestRaoMap:
    def test_matches_per_node_statistic(self, small_scene):
        g = shard_rng(3, "map", 0)
        from crossdetect.clutter import make_secondary

        x = make_secondary(small_scene, 1, g).x[0]
        g1 = np.array([-40.0, 0.0, 25.0])
        g2 = np.array([-10.0, 35.0])
        fast = harness.rao_map(x, small_scene.covariance, g1, g2)
        for i, t1 in enumerate(g1):
            for j, t2 in enumerate(g2):
                ref = detectors.m_nmf_r(
                    x, steering_for_angles(8, t1, t2), small_scene.covariance
                )
                assert np.isclose(fast[i, j], ref, rtol=1e-10)


class TestConvergenceTrace:
    def test_trace_shape_and_determinism(self):
        cfg = small_cfg(k_secondary=64)
        a = harness.convergence_trace(cfg)
        b = harness.convergence_trace(cfg)
        assert np.array_equal(a.rows, b.rows)
        assert a.columns == ("iter", "rel_dev")
        assert np.all(a.rows[:, 1] > 0)
        assert a.rows[-1, 1] < 1e-8


class TestCorruption:
    def test_zero_corruption_peaks_at_truth(self):
        cfg = small_cfg(
            k_secondary=32, theta1_deg=20.0, theta2_deg=30.0, theta_grid_step_deg=10.0
        )
        run = harness.corruption_experiment(
            cfg, target_snr_db=30.0, corrupt_snr_db=-300.0
        )
        for est in ("scm", "tyl"):
            mp = run.maps[(est, "corrupt")]
            assert np.unravel_index(np.argmax(mp), mp.shape) == run.truth_index

    def test_bad_corrupt_index(self):
        with pytest.raises(IndexError):
            harness.corruption_experiment(small_cfg(), corrupt_index=99)

    def test_summary_fields(self):
        cfg = small_cfg(
            k_secondary=32, theta1_deg=20.0, theta2_deg=30.0, theta_grid_step_deg=10.0
        )
        summ = harness.corruption_summary(harness.corruption_experiment(cfg))
        for est in ("scm", "tyl"):
            assert isinstance(summ[est]["argmax_at_truth"], bool)
            assert np.isfinite(summ[est]["pbr_degradation"])


class TestPdThetaMap:
    def test_schema_and_grid(self):
        cfg = small_cfg(
            n_h0=2000,
            n_mc=100,
            theta_grid_step_deg=30.0,
            theta_grid_span_deg=60.0,
        )
        curve = harness.pd_theta_map(cfg, "nmf1", amplitude=0.01)
        assert curve.columns == ("theta1_deg", "theta2_deg", "pd")
        assert curve.rows.shape == (25, 3)  # 5 x 5 grid
        assert np.all((curve.rows[:, 2] >= 0) & (curve.rows[:, 2] <= 1))
