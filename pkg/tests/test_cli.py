import json
from pathlib import Path

import numpy as np
import pytest

from greencone.cli import ExperimentConfig, load_config, main
from greencone.errors import ConfigError


def run(args):
    return main(args)


class TestConfig:
    def test_defaults_valid(self):
        ExperimentConfig().validate()

    def test_unknown_system_rejected(self):
        cfg = ExperimentConfig(system="nonsense")
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_negative_tolerance_rejected(self):
        cfg = ExperimentConfig(tol_order=-1.0)
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_ini_round_trip(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text(
            "[system]\nname = pendulum\ncohomology = 2.0\n"
            "[grid]\nresolution = 64\nt_step = 0.5\n"
            "[verify]\nepsilon = 5e-3\nwindow_min = 1e-3\nwindow_max = 2e-2\n"
            "[run]\nseed = 7\nthreads = 2\n"
        )
        cfg = load_config(str(path))
        assert cfg.system == "pendulum"
        assert cfg.cohomology == 2.0
        assert cfg.resolution == 64
        assert cfg.epsilon == 5e-3
        assert cfg.seed == 7
        cfg.validate()

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text("[grid]\nbogus = 3\n")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_bad_config_exits_2(self, tmp_path):
        assert run(["cone-check", "--trials", "0", "--out", str(tmp_path)]) == 2


class TestConeCheckCommand:
    def test_smoke_passes(self, tmp_path):
        code = run(["cone-check", "--trials", "100", "--seed", "1",
                    "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["pass"] is True
        assert {c["name"] for c in report["checks"]} == {
            "cone_equivalence", "slope_oracle_1d", "well_definedness",
            "decompose_nonneg", "symplectic_invariance", "degenerate_reduction",
        }
        for c in report["checks"]:
            assert np.isfinite(c["margin"])

    def test_report_schema_stable(self, tmp_path):
        run(["cone-check", "--trials", "50", "--seed", "2", "--out", str(tmp_path / "a")])
        run(["cone-check", "--trials", "50", "--seed", "3", "--out", str(tmp_path / "b")])
        ra = json.loads((tmp_path / "a" / "report.json").read_text())
        rb = json.loads((tmp_path / "b" / "report.json").read_text())

        def schema(obj):
            if isinstance(obj, dict):
                return {k: schema(v) for k, v in sorted(obj.items())}
            if isinstance(obj, list):
                return [schema(v) for v in obj]
            return type(obj).__name__
        assert schema(ra) == schema(rb)


class TestGreenCommand:
    def test_saddle_limits(self, tmp_path):
        code = run(["green", "--x", "0", "--p", "0", "--t-max", "4", "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["green"]["G_plus"][0] == pytest.approx(2 * np.pi, abs=1e-6)
        assert report["green"]["G_minus"][0] == pytest.approx(-2 * np.pi, abs=1e-6)
        ladder = (tmp_path / "ladder.csv").read_text().splitlines()
        assert ladder[0].startswith("t,g_t_00,g_mt_00")
        assert len(ladder) >= 3
        assert (tmp_path / "orbit.csv").exists()

    def test_zero_t_max_usage_error(self, tmp_path):
        assert run(["green", "--t-max", "0", "--out", str(tmp_path)]) == 2

    def test_nonconvergence_exit_3_with_partial(self, tmp_path):
        # circle point with strict tail tolerance never converges at T_max=4
        code = run(["green", "--x", "0.25", "--p", "1.9069251784911847",
                    "--t-max", "4", "--out", str(tmp_path)])
        assert code == 3
        assert (tmp_path / "ladder.csv").exists()
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["pass"] is False


class TestWeakKamCommand:
    def test_pendulum_small(self, tmp_path):
        code = run(["weak-kam", "--resolution", "64", "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["weak_kam"]["c"] == pytest.approx(1.0, abs=5e-3)
        assert (tmp_path / "solution.csv").exists()
        assert (tmp_path / "kernel.bin").exists()
        header = (tmp_path / "solution.csv").read_text().splitlines()[0]
        assert header == "x1,u,w,gap,p1,in_I"

    def test_free_system_constant(self, tmp_path):
        code = run(["weak-kam", "--resolution", "32", "--out", str(tmp_path),
                    "--config", str(_write_cfg(tmp_path, "free"))])
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert abs(report["weak_kam"]["c"]) <= 1e-12


def _write_cfg(tmp_path, system, cohomology=0.0):
    path = Path(tmp_path) / "cfg.ini"
    path.write_text(f"[system]\nname = {system}\ncohomology = {cohomology}\n")
    return path


class TestVerifyCommand:
    def test_supercritical_passes(self, tmp_path):
        code = run(["verify-theorem", "--resolution", "128", "--cohomology", "2.0",
                    "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["verify"]["all_pass"] is True
        assert report["verify"]["n_directions"] >= 1
        assert (tmp_path / "ladder.csv").exists()
        assert (tmp_path / "solution.csv").exists()

    def test_subcritical_note_or_pass(self, tmp_path):
        code = run(["verify-theorem", "--resolution", "64", "--out", str(tmp_path)])
        report = json.loads((tmp_path / "report.json").read_text())
        assert code == 0
        assert report["verify"]["all_pass"] is True


class TestActionHessianCommand:
    def test_separatrix_default(self, tmp_path):
        code = run(["action-hessian", "--T", "1.0", "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["checks"][0]["pass"] is True
