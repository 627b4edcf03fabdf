import json
import logging

import numpy as np
import pytest
import scipy.linalg as sla
import yaml
from click.testing import CliRunner

from monoelast import assembly, cli, forward, model
from monoelast.fixtures import BACKGROUND
from monoelast.scenario import InclusionDef, Scenario, save_scenario


def small_scenario(**overrides):
    base = dict(mesh_resolution=(4, 4, 4), voxel_resolution=(4, 4, 4),
                patch_grid=(2, 2), omega=50.0, background=BACKGROUND,
                inclusions=(InclusionDef(jump_lambda=1.4e6, jump_mu=1.4e4,
                                         jump_rho=2e3, box=((1, 1, 1), (2, 2, 2))),),
                m_cap_policy=5)
    base.update(overrides)
    return Scenario(**base)


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "scenario.yaml"
    save_scenario(small_scenario(), path)
    return path


class TestForwardCommand:
    def test_artifacts_and_cache_round_trip(self, tmp_path, config_path, caplog):
        cache = tmp_path / "cache"
        out1 = tmp_path / "run1"
        out2 = tmp_path / "run2"
        with caplog.at_level(logging.INFO, logger="monoelast.cache"):
            assert cli.run(config_path, "forward", out=out1, cache=cache) == 0
            assert not any("cache hit" in r.message for r in caplog.records)
            assert cli.run(config_path, "forward", out=out2, cache=cache) == 0
            assert any("cache hit" in r.message for r in caplog.records)
        a = (out1 / "ntd.npy").read_bytes()
        b = (out2 / "ntd.npy").read_bytes()
        assert a == b
        meta = json.loads((out1 / "forward.json").read_text())
        assert meta["n_loads"] == 20
        assert meta["config"]["omega_rad_s"] == 50.0

    def test_cache_env_var(self, tmp_path, config_path, monkeypatch, caplog):
        cache = tmp_path / "envcache"
        monkeypatch.setenv(cli.CACHE_ENV_VAR, str(cache))
        assert cli.run(config_path, "forward", out=tmp_path / "o1") == 0
        with caplog.at_level(logging.INFO, logger="monoelast.cache"):
            assert cli.run(config_path, "forward", out=tmp_path / "o2") == 0
            assert any("cache hit" in r.message for r in caplog.records)


class TestReconstructCommand:
    def test_linearized_artifacts(self, tmp_path, config_path):
        out = tmp_path / "lin"
        code = cli.run(config_path, "reconstruct-linearized", out=out, eta=0.0,
                       seed=3, vtk=True)
        assert code == 0
        doc = json.loads((out / "reconstruction.json").read_text())
        assert doc["mode"] == "linearized"
        assert doc["resolution"] == [4, 4, 4]
        assert set(doc["filled"]) >= set(doc["accepted"])
        assert len(doc["counts"]) == 64
        assert doc["config"]["seed"] == 3
        counts_lines = (out / "counts.csv").read_text().strip().split("\n")
        assert counts_lines[0] == "voxel,ix,iy,iz,count,accepted,filled"
        assert len(counts_lines) == 65
        vtk = (out / "reconstruction.vtk").read_text().split("\n")
        assert vtk[0] == "# vtk DataFile Version 3.0"
        assert "DIMENSIONS 5 5 5" in vtk

    def test_rerun_from_embedded_config_is_bitwise(self, tmp_path, config_path):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        assert cli.run(config_path, "reconstruct-linearized", out=out1) == 0
        embedded = json.loads((out1 / "reconstruction.json").read_text())["config"]
        replay = tmp_path / "replay.yaml"
        replay.write_text(yaml.safe_dump(embedded))
        assert cli.run(replay, "reconstruct-linearized", out=out2) == 0
        assert (out1 / "reconstruction.json").read_bytes() == \
            (out2 / "reconstruction.json").read_bytes()
        assert (out1 / "counts.csv").read_bytes() == (out2 / "counts.csv").read_bytes()

    def test_flag_overrides_reach_result(self, tmp_path, config_path):
        out = tmp_path / "noisy"
        assert cli.run(config_path, "reconstruct-linearized", out=out, eta="0.01",
                       seed=42, mcap="7") == 0
        doc = json.loads((out / "reconstruction.json").read_text())
        assert doc["eta"] == 0.01
        assert doc["seed"] == 42
        assert doc["m_cap"] == 7
        assert doc["delta_realized"] > 0


class TestSweepCommand:
    def test_sweep_csv(self, tmp_path):
        sc = Scenario(mesh_resolution=(6,) * 3, voxel_resolution=(3,) * 3,
                      patch_grid=(3, 3), omega=0.97, background=BACKGROUND,
                      alpha_settings=((0.7e6, 0.0, 0.0),),
                      inclusions=(InclusionDef(jump_lambda=1.4e6,
                                               box=((1, 1, 1), (1, 1, 1))),))
        path = tmp_path / "sweep_scenario.yaml"
        save_scenario(sc, path)
        out = tmp_path / "sweep"
        assert cli.run(path, "sweep", out=out, eta="0:0.02:0.01") == 0
        lines = (out / "sweep.csv").read_text().strip().split("\n")
        assert lines[0] == "eta,delta,M_min,M_max,feasible"
        assert len(lines) == 4
        etas = [float(line.split(",")[0]) for line in lines[1:]]
        assert etas == [0.0, 0.01, 0.02]

    def test_infeasible_sweep_exit_code(self, tmp_path, config_path):
        # the tiny fixture cannot separate: single-element voxels, 20 loads
        out = tmp_path / "bad_sweep"
        code = cli.run(config_path, "sweep", out=out, eta="0:0.01:0.01")
        assert code == 4
        record = json.loads((out / "error.json").read_text())
        assert record["error"] == "infeasible-sweep"


class TestSpectraCommand:
    def test_reports_written(self, tmp_path, config_path):
        out = tmp_path / "spectra"
        assert cli.run(config_path, "spectra", out=out, eta="0.01", seed=1) == 0
        clean = (out / "ntd_eigs.csv").read_text()
        noisy = (out / "ntd_noisy_eigs.csv").read_text()
        assert clean.startswith("# matrix_id=ntd,")
        assert len(clean.strip().split("\n")) == 22
        assert noisy.startswith("# matrix_id=ntd-noisy,")


class TestErrorPaths:
    def test_config_error_exit_2(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("mesh_resolution: [4, 4, 4]\n")  # missing required keys
        out = tmp_path / "out"
        assert cli.run(bad, "forward", out=out) == 2
        record = json.loads((out / "error.json").read_text())
        assert record["error"] == "config-error"

    def test_unknown_command_exit_2(self, tmp_path, config_path):
        assert cli.run(config_path, "transmogrify", out=tmp_path / "o") == 2

    def test_missing_config_exit_2(self, tmp_path):
        assert cli.run(tmp_path / "none.yaml", "forward", out=tmp_path / "o") == 2

    def test_resonance_exit_3(self, tmp_path):
        # drive exactly at a computed resonance of a small clamped cube
        mesh = model.build_mesh(1.0, 2)
        layout = model.partition_boundary(mesh, ("z-",), (1, 1))
        n = mesh.n_elements
        field = model.MaterialField(lam=np.ones(n), mu=np.ones(n), rho=np.ones(n))
        k = assembly.assemble_stiffness(mesh, field)
        m = assembly.assemble_mass(mesh, field.rho)
        free = forward.free_dof_indices(mesh.n_dofs, layout)
        sigma = sla.eigh(k.toarray()[np.ix_(free, free)],
                         m.toarray()[np.ix_(free, free)], eigvals_only=True)[0]
        sc = Scenario(mesh_resolution=(2, 2, 2), voxel_resolution=(2, 2, 2),
                      patch_grid=(1, 1), omega=float(np.sqrt(sigma)),
                      background=(1.0, 1.0, 1.0), contrast=(1.0, 1.0, 0.5),
                      m_cap_policy=1)
        path = tmp_path / "resonant.yaml"
        save_scenario(sc, path)
        out = tmp_path / "res"
        assert cli.run(path, "forward", out=out) == 3
        record = json.loads((out / "error.json").read_text())
        assert record["error"] == "resonance-error"

    def test_bad_mcap_flag(self, tmp_path, config_path):
        assert cli.run(config_path, "forward", out=tmp_path / "o", mcap="soon") == 2


class TestClickEntryPoints:
    def test_wavelengths_command(self):
        runner = CliRunner()
        result = runner.invoke(cli.main, ["wavelengths", "--lambda0", "6e5",
                                          "--mu0", "6e3", "--rho0", "3e3",
                                          "--omega", "50"])
        assert result.exit_code == 0
        assert "l_p = 1.79" in result.output
        assert "l_s = 0.17" in result.output

    def test_forward_via_click(self, tmp_path, config_path):
        runner = CliRunner()
        out = tmp_path / "clickout"
        result = runner.invoke(cli.main, ["forward", "--config", str(config_path),
                                          "--out", str(out)])
        assert result.exit_code == 0
        assert (out / "ntd.npy").exists()

    def test_help_lists_commands(self):
        runner = CliRunner()
        result = runner.invoke(cli.main, ["--help"])
        assert result.exit_code == 0
        for cmd in ("forward", "reconstruct-standard", "reconstruct-linearized",
                    "sweep", "spectra"):
            assert cmd in result.output
