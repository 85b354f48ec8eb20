"""End-to-end scenario runs at reduced desk scale, plus config handling.

Full-scale parameter sets live in test_acceptance; here each scenario runs in
seconds on coarser grids and shorter horizons.
"""

import json

import numpy as np
import pytest

from mhdrecon.scenarios import (
    ConfigError,
    ExperimentConfig,
    Report,
    fit_log_slope,
    load_config,
    run_frozen_in,
    run_remark2,
    run_scenario,
    run_stability_decay,
    run_theorem1,
    run_theorem2,
)


def mini(scenario, **kw):
    defaults = dict(resolution=48, dt=2e-3, output_cadence=25)
    defaults.update(kw)
    return ExperimentConfig.for_scenario(scenario, **defaults)


class TestConfig:
    def test_defaults_resolve(self):
        cfg = ExperimentConfig.for_scenario("theorem1")
        assert cfg.resolution == 128 and cfg.t_end == 2.0 and cfg.delta == 1e-3
        assert cfg.expect == "reconnection"

    def test_unknown_scenario(self):
        with pytest.raises(ConfigError, match="scenario"):
            ExperimentConfig.for_scenario("theorem3")

    def test_unknown_field_named(self):
        with pytest.raises(ConfigError, match="viscosity"):
            ExperimentConfig.from_dict({"scenario": "theorem1", "viscosity": 1.0})

    def test_bad_type_named(self):
        with pytest.raises(ConfigError, match="'resolution'"):
            ExperimentConfig.from_dict({"scenario": "theorem1", "resolution": "big"})

    def test_missing_scenario_field(self):
        with pytest.raises(ConfigError, match="scenario"):
            ExperimentConfig.from_dict({"nu": 0.5})

    def test_malformed_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "scenario": "theorem1",\n  oops\n}\n')
        with pytest.raises(ConfigError, match="line 3"):
            load_config(path)

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(ConfigError, match="nope.json"):
            load_config(tmp_path / "nope.json")

    def test_round_trip(self, tmp_path):
        cfg = mini("theorem2", t_end=0.5)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        loaded = load_config(path)
        assert loaded == cfg

    def test_stability_decay_alias(self):
        cfg = ExperimentConfig.for_scenario("stability-decay")
        assert cfg.scenario == "stability"


@pytest.fixture(scope="module")
def theorem2_mini_report(tmp_path_factory):
    cfg = mini("theorem2", t_end=0.5)
    return run_theorem2(cfg, tmp_path_factory.mktemp("t2"))


class TestTheorem2Mini:
    @pytest.fixture()
    def report(self, theorem2_mini_report):
        return theorem2_mini_report

    def test_verdict(self, report):
        assert report.verdict == "reconnection"
        assert report.as_expected

    def test_counts(self, report):
        assert report.metrics["count_t0"] == 128
        assert report.metrics["count_tT"] == 8

    def test_solver_matches_oracle(self, report):
        assert report.metrics["max_oracle_rel_l2_error"] < 1e-8
        assert report.metrics["max_u_l2"] < 1e-8

    def test_hr_distance_decreases_with_horizon(self):
        d = {}
        for t_end in (0.5, 1.0):
            cfg = mini("theorem2", t_end=t_end)
            d[t_end] = run_theorem2(cfg).metrics["hr_distance_rescaled_to_small"]
        assert d[1.0] < d[0.5]


class TestTheorem1Mini:
    def test_reconnection_at_desk_scale(self, tmp_path):
        # (n, m) = (3, 3): 72 points initially, tilde T1 signature at the end
        cfg = mini("theorem1", n=3, m=3, t_end=1.5)
        report = run_theorem1(cfg, tmp_path)
        assert report.metrics["count_t0"] >= 72
        assert report.signatures["tT"]["structurally_stable"]
        assert report.verdict == "reconnection"

    def test_zero_horizon_is_no_reconnection(self):
        cfg = mini("theorem1", n=2, m=2, t_end=0.0)
        report = run_theorem1(cfg)
        assert report.verdict == "no-reconnection"

    def test_zero_delta_keeps_signature_constant(self):
        # pure decaying Taylor datum: both signatures are the 8nm lattice
        cfg = mini("theorem1", n=2, m=2, t_end=0.5, delta=0.0)
        report = run_theorem1(cfg)
        assert report.verdict == "no-reconnection"
        assert report.signatures["t0"] == report.signatures["tT"]


class TestRemark2Mini:
    def test_reconnection_and_error_reporting(self, tmp_path):
        cfg = mini("remark2", t_end=2.0)
        report = run_remark2(cfg, tmp_path)
        assert report.verdict == "reconnection"
        m = report.metrics
        # simulated and closed-form errors agree to solver accuracy
        assert m["exact_error_sim"] == pytest.approx(m["exact_error_closed_form"], rel=1e-6)
        assert m["u_l2_final"] < 1e-8
        assert m["displayed_bound"] > 0


class TestFrozenInMini:
    def test_frozen_verdict(self, tmp_path):
        cfg = mini("frozen-in", resolution=64, t_end=0.1, output_cadence=10)
        report = run_frozen_in(cfg, tmp_path)
        assert report.verdict == "frozen"
        assert report.metrics["frozen_in_residual"] < 1e-3
        assert report.metrics["pushed_line_hausdorff"] < 5e-3

    def test_nonzero_eta_rejected(self):
        with pytest.raises(ConfigError, match="eta"):
            run_frozen_in(mini("frozen-in", eta=0.5))


@pytest.fixture(scope="module")
def stability_mini_report():
    return run_stability_decay(mini("stability", t_end=1.5))


class TestStabilityMini:
    @pytest.fixture()
    def report(self, stability_mini_report):
        return stability_mini_report

    def test_decay_verdict(self, report):
        assert report.verdict == "decay-confirmed"
        assert report.metrics["fitted_log_slope"] <= report.metrics["slope_target"]

    def test_initial_q(self, report):
        assert report.metrics["q_initial"] == pytest.approx(
            report.metrics["q_initial_predicted"], rel=1e-10
        )

    def test_sigma_default(self, report):
        assert report.metrics["sigma"] == pytest.approx(0.45)

    def test_fit_log_slope_exact_on_exponential(self):
        t = np.linspace(0.0, 3.0, 20)
        assert fit_log_slope(t, 5.0 * np.exp(-1.7 * t)) == pytest.approx(-1.7, rel=1e-10)


class TestReportPlumbing:
    def test_report_embeds_config_and_writes(self, tmp_path):
        cfg = mini("custom", resolution=32, t_end=0.05)
        report = run_scenario(cfg, tmp_path)
        path = tmp_path / "report.json"
        assert path.exists()
        data = json.loads(path.read_text())
        assert data["config"] == cfg.to_dict()
        assert data["verdict"] == "completed"
        assert (tmp_path / "custom_diagnostics.ndjson").exists()
        assert (tmp_path / "custom_initial.snap").exists()
        assert (tmp_path / "custom_final.snap").exists()

    def test_runs_are_deterministic(self):
        cfg = mini("theorem2", t_end=0.25)
        a = run_theorem2(cfg).to_dict()
        b = run_theorem2(cfg).to_dict()
        assert a == b

    def test_topology_cadence_annotates_records(self, tmp_path):
        from mhdrecon.snapshots import read_ndjson

        cfg = mini("custom", resolution=48, t_end=0.1, output_cadence=25,
                   n=1, m=1, topology_cadence=2)
        run_scenario(cfg, tmp_path)
        records = read_ndjson(tmp_path / "custom_diagnostics.ndjson")
        tagged = [r for r in records if r.signature is not None]
        assert tagged and all(r.signature["n_saddles"] == 4 for r in tagged)
        assert records[1].signature is None  # between cadence firings

    def test_expected_mismatch_flagged(self):
        cfg = mini("theorem2", t_end=0.5, expect="no-reconnection")
        report = run_theorem2(cfg)
        assert report.verdict == "reconnection"
        assert not report.as_expected
