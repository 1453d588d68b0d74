import numpy as np
import pytest
import yaml

from foilopt import cli
from foilopt.config import ConfigError, RunConfig, apply_overrides, build_config, load_config

SMALL_ARGS = [
    "--set", "grid.i_max=25",
    "--set", "grid.j_max=11",
    "--set", "farfield.radius=8.0",
]


@pytest.fixture()
def out(tmp_path):
    return tmp_path


class TestConfig:
    def test_defaults_carry_experiment_values(self):
        cfg = RunConfig()
        assert cfg.grid.i_max == 49 and cfg.grid.j_max == 31
        assert cfg.farfield.radius == 12.0 and cfg.farfield.stretch_ratio == 1.08
        assert cfg.freestream.mach == 0.7 and cfg.freestream.alpha_aoa == 0.0
        assert cfg.mesh_solver.tol == 1e-8 and cfg.flow_solver.tol == 1e-8
        assert cfg.adjoint_tol == 1e-10
        assert cfg.optimizer.step == 2e-3
        assert cfg.optimizer.max_iters == 1000
        assert cfg.optimizer.grad_tol == 1e-4

    def test_yaml_round_trip(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump({"grid": {"i_max": 33}, "freestream": {"mach": 0.5}}))
        cfg = load_config(path)
        assert cfg.grid.i_max == 33
        assert cfg.freestream.mach == 0.5
        assert cfg.grid.j_max == 31  # untouched default

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            build_config({"nonsense": {}})

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            build_config({"grid": {"k_max": 3}})

    def test_override_types_checked(self):
        cfg = RunConfig()
        with pytest.raises(ConfigError):
            apply_overrides(cfg, ["grid.i_max=not_a_number"])
        cfg2 = apply_overrides(cfg, ["optimizer.step=1e-2"])
        assert cfg2.optimizer.step == 1e-2

    def test_invariants_enforced(self):
        with pytest.raises(ConfigError):
            build_config({"grid": {"i_max": 48}})  # even


class TestMeshCommand:
    def test_success_and_outputs(self, out):
        code = cli.main(["mesh", *SMALL_ARGS, "--out", str(out / "m")])
        assert code == 0
        for name in ("grid.txt", "mesh.csv", "boundary.csv", "report.txt", "metadata.txt"):
            assert (out / "m" / name).exists()
        report = (out / "m" / "report.txt").read_text()
        assert "min_jacobian" in report

    def test_loose_tolerance_fewer_iterations(self, out):
        code = cli.main(["mesh", *SMALL_ARGS, "--set", "mesh_solver.tol=1e-4",
                         "--out", str(out / "loose")])
        assert code == 0
        loose = dict(
            line.split(" = ") for line in (out / "loose" / "report.txt").read_text().splitlines()
        )
        code = cli.main(["mesh", *SMALL_ARGS, "--out", str(out / "tight")])
        tight = dict(
            line.split(" = ") for line in (out / "tight" / "report.txt").read_text().splitlines()
        )
        assert int(loose["iterations"]) < int(tight["iterations"])

    def test_bad_config_key_exit_2(self, out):
        code = cli.main(["mesh", "--set", "grid.bogus=1", "--out", str(out / "bad")])
        assert code == 2


class TestBoundsAuditCommand:
    def test_zero_violations(self, out):
        code = cli.main(["bounds-audit", "--samples", "200", "--out", str(out / "a")])
        assert code == 0
        data = np.genfromtxt(out / "a" / "bounds_audit.csv", delimiter=",", names=True,
                             dtype=None, encoding="utf-8")
        assert data.shape[0] == 800
        assert np.all(data["slack"] >= -1e-12)

    def test_determinism(self, out):
        cli.main(["bounds-audit", "--samples", "50", "--out", str(out / "r1")])
        cli.main(["bounds-audit", "--samples", "50", "--out", str(out / "r2")])
        b1 = (out / "r1" / "bounds_audit.csv").read_bytes()
        b2 = (out / "r2" / "bounds_audit.csv").read_bytes()
        assert b1 == b2


class TestDescentDemoCommand:
    def test_three_rules_pass(self, out):
        code = cli.main(["descent-demo", "--out", str(out / "d")])
        assert code == 0
        for name in ("bounded", "diminishing", "armijo"):
            data = np.loadtxt(out / "d" / f"history_{name}.csv", delimiter=",", skiprows=1)
            assert data[-1, 2] < 1e-6 / 1.3  # inexact gradient norm at stop

    def test_zeta_zero(self, out):
        code = cli.main(["descent-demo", "--zeta", "0.0", "--out", str(out / "d0")])
        assert code == 0


class TestFlowAndReferenceCommands:
    def test_flow_outputs(self, out):
        code = cli.main(["flow", *SMALL_ARGS, "--out", str(out / "f")])
        assert code == 0
        fields = np.loadtxt(out / "f" / "fields.csv", delimiter=",", skiprows=1)
        assert fields.shape[1] == 8
        with open(out / "f" / "surface_cp.csv") as fh:
            assert fh.readline().strip() == "station,x,cp"

    def test_reference_then_optimize_short(self, out):
        code = cli.main(["reference", *SMALL_ARGS, "--out", str(out / "ref")])
        assert code == 0
        ref_csv = out / "ref" / "reference_cp.csv"
        assert ref_csv.exists()
        code = cli.main([
            "optimize", *SMALL_ARGS,
            "--reference", str(ref_csv),
            "--set", "optimizer.max_iters=3",
            "--set", "optimizer.grad_tol=1e-12",
            "--out", str(out / "opt"),
        ])
        assert code == 0
        for name in ("history.csv", "design.txt", "geometry.csv", "surface_cp.csv",
                     "fields.csv", "mesh.csv", "metadata.txt", "reference_cp.csv"):
            assert (out / "opt" / name).exists()
        hist = np.loadtxt(out / "opt" / "history.csv", delimiter=",", skiprows=1)
        assert hist[-1, 1] < hist[0, 1]  # objective decreased


class TestMetadata:
    def test_all_defaults_echoed(self, out):
        cli.main(["bounds-audit", "--samples", "10", "--out", str(out / "meta")])
        text = (out / "meta" / "metadata.txt").read_text()
        for key in ("grid.i_max = 49", "optimizer.step = 0.002", "flow_solver.tol = 1e-08",
                    "farfield.stretch_ratio = 1.08"):
            assert key in text
