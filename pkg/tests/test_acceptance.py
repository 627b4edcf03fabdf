"""Acceptance suite: one test per criterion, printing one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s``.  The end-to-end criteria
share one session-scoped preparation of the bundled two-inclusion fixture and
two CLI runs per algorithm (worker counts 1 and 8), so the suite performs the
expensive per-voxel forward solves three times in total.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from monoelast import assembly, cli, forward, model, noise, recon, spectral
from monoelast.fixtures import BUNDLED_SEEDS, two_inclusion_fixture
from monoelast.scenario import save_scenario, wavelengths
from oracles import arpack_spectral_norm, dense_solve_oracle, eig_sym_sturm

FIXTURE6 = two_inclusion_fixture()


@contextmanager
def criterion(number, description):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"\nFAIL criterion {number}: {description} "
              f"[{time.perf_counter() - t0:.2f} s]")
        raise
    print(f"\nPASS criterion {number}: {description} "
          f"[{time.perf_counter() - t0:.2f} s]")


# ---------------------------------------------------------------------------
# shared heavy fixtures


@pytest.fixture(scope="session")
def cli_runs(tmp_path_factory):
    """Four CLI reconstructions of fixture 6: both algorithms x 1/8 workers."""
    import os
    saved = os.environ.pop(cli.CACHE_ENV_VAR, None)
    try:
        base = tmp_path_factory.mktemp("fixture6-cli")
        config = base / "scenario.yaml"
        save_scenario(FIXTURE6, config)
        runs = {}
        for mode in ("standard", "linearized"):
            for threads in (1, 8):
                out = base / f"{mode}-t{threads}"
                t0 = time.perf_counter()
                code = cli.run(config, f"reconstruct-{mode}", out=out,
                               threads=threads)
                elapsed = time.perf_counter() - t0
                assert code == 0, f"{mode} run with {threads} workers failed"
                runs[(mode, threads)] = (out, elapsed)
        return runs
    finally:
        if saved is not None:
            os.environ[cli.CACHE_ENV_VAR] = saved


@pytest.fixture(scope="session")
def prepared():
    """Noise-independent pipelines for both algorithms plus calibrated caps."""
    out = {}
    for mode, preparer in (("standard", recon.prepare_standard),
                           ("linearized", recon.prepare_linearized)):
        t0 = time.perf_counter()
        prep = preparer(FIXTURE6)
        out[mode] = {"prep": prep, "prep_seconds": time.perf_counter() - t0,
                     "cap": recon.calibrate_m_cap(prep)}
    return out


@pytest.fixture(scope="session")
def breakdowns(prepared):
    out = {}
    for mode in ("standard", "linearized"):
        prep = prepared[mode]["prep"]
        cap = prepared[mode]["cap"]
        for seed in BUNDLED_SEEDS:
            out[(mode, seed)] = recon.noise_breakdown(prep, cap, seed)
    return out


# ---------------------------------------------------------------------------
# criteria


def test_criterion_1_noise_identity(rng):
    with criterion(1, "realized noise magnitude equals eta times the operator norm"):
        t0 = time.perf_counter()
        for _ in range(20):
            n = int(rng.integers(5, 65))
            lam = rng.standard_normal((n, n))
            lam = (lam + lam.T) / 2
            eta = float(rng.uniform(1e-4, 0.3))
            seed = int(rng.integers(0, 2 ** 63))
            noisy, spec = noise.perturb(lam, eta, seed)
            target = eta * arpack_spectral_norm(lam)
            realized = arpack_spectral_norm(noisy - lam)
            assert abs(realized - target) <= 1e-12 * target
            assert abs(spec.delta - target) <= 1e-12 * target
        assert time.perf_counter() - t0 < 1.0


def test_criterion_2_wavelengths():
    with criterion(2, "reference background wavelengths at 50 rad/s"):
        report = wavelengths(6e5, 6e3, 3e3, 50.0)
        assert 1.78 <= report.l_p <= 1.80
        assert 0.17 <= report.l_s <= 0.19
        reps = 1000
        t0 = time.perf_counter()
        for _ in range(reps):
            wavelengths(6e5, 6e3, 3e3, 50.0)
        assert (time.perf_counter() - t0) / reps < 1e-3


def test_criterion_3_forward_correctness():
    with criterion(3, "factorized solves match a dense oracle; reciprocity holds"):
        t0 = time.perf_counter()
        mesh = model.build_mesh(1.0, 5)
        layout = model.partition_boundary(mesh, ("z-",), (5, 5))
        grid = model.voxel_grid(mesh, 5)
        loads = assembly.assemble_loads(mesh, layout, "normal")
        field = model.make_material_field((6e5, 6e3, 3e3), (), grid)
        k = assembly.assemble_stiffness(mesh, field)
        m = assembly.assemble_mass(mesh, field.rho)
        fact = forward.factorize_system(k, m, 50.0, layout)
        u = fact.solve(loads.vectors)
        u_oracle = dense_solve_oracle(k, m, 50.0, fact.free, loads.vectors)
        assert np.linalg.norm(u - u_oracle) <= 1e-8 * np.linalg.norm(u_oracle)
        ntd = forward.ntd_matrix(fact, loads)
        assert ntd.asymmetry <= 1e-8
        assert time.perf_counter() - t0 < 10.0


def test_criterion_4_frechet_consistency():
    with criterion(4, "linearization error halves-then-quarters as the step halves"):
        t0 = time.perf_counter()
        mesh = model.build_mesh(1.0, 4)
        layout = model.partition_boundary(mesh, ("z-",), (2, 2))
        grid = model.voxel_grid(mesh, 4)
        loads = assembly.assemble_loads(mesh, layout, "normal")
        f0 = model.make_material_field((6e5, 6e3, 3e3), (), grid)
        k0 = assembly.assemble_stiffness(mesh, f0)
        m0 = assembly.assemble_mass(mesh, f0.rho)
        fact0 = forward.factorize_system(k0, m0, 50.0, layout)
        ntd0 = forward.ntd_matrix(fact0, loads).matrix
        bank = forward.solve_bank(fact0, loads, mesh)
        vox = [grid.voxel_id(2, 2, 2)]
        alpha = (1.4e6, 1.4e4, -2e3)
        deriv = forward.frechet_matrix(bank, grid, vox, alpha)
        inside = np.isin(np.arange(mesh.n_elements), grid.elements_of(vox))
        residuals = []
        for t in (1e-2, 5e-3):
            field = model.MaterialField(lam=f0.lam + t * alpha[0] * inside,
                                        mu=f0.mu + t * alpha[1] * inside,
                                        rho=f0.rho + t * alpha[2] * inside)
            k = assembly.assemble_stiffness(mesh, field)
            m = assembly.assemble_mass(mesh, field.rho)
            ntd_t = forward.ntd_matrix(
                forward.factorize_system(k, m, 50.0, layout), loads).matrix
            residuals.append(np.linalg.norm(ntd_t - ntd0 - t * deriv, 2))
        order = float(np.log2(residuals[0] / residuals[1]))
        assert 1.8 <= order <= 2.2
        assert time.perf_counter() - t0 < 30.0


def test_criterion_5_eigen_oracle(rng):
    with criterion(5, "eigenvalues match the Sturm-bisection oracle"):
        t0 = time.perf_counter()
        for _ in range(100):
            n = int(rng.integers(2, 65))
            a = rng.standard_normal((n, n))
            a = (a + a.T) / 2
            norm = np.linalg.norm(a, 2)
            err = np.max(np.abs(spectral.eig_sym(a) - eig_sym_sturm(a)))
            assert err <= 1e-10 * norm
        assert time.perf_counter() - t0 < 10.0


def test_criterion_6_noiseless_reconstruction(cli_runs):
    with criterion(6, "both algorithms recover exactly the two inclusion voxels"):
        truth = sorted(FIXTURE6.truth_voxels())
        out_std, t_std = cli_runs[("standard", 1)]
        out_lin, t_lin = cli_runs[("linearized", 1)]
        for out, cap_seconds in ((out_std, 600.0), (out_lin, 60.0)):
            doc = json.loads((out / "reconstruction.json").read_text())
            assert doc["eta"] == 0.0
            assert doc["m_cap_policy"] == "calibrate"
            assert sorted(doc["accepted"]) == truth
            assert sorted(doc["filled"]) == truth
        assert t_std < 600.0, f"standard run took {t_std:.1f} s"
        assert t_lin < 60.0, f"linearized run took {t_lin:.1f} s"
        print(f"\n  standard {t_std:.1f} s, linearized {t_lin:.1f} s, "
              f"truth voxels {truth}")


def test_criterion_7_noise_robustness(prepared, breakdowns):
    with criterion(7, "a positive noise level preserves the clean reconstruction; "
                      "doubling it breaks at least one verdict"):
        t0 = time.perf_counter()
        for mode in ("standard", "linearized"):
            prep = prepared[mode]["prep"]
            cap = prepared[mode]["cap"]
            for seed in BUNDLED_SEEDS:
                bd = breakdowns[(mode, seed)]
                assert bd.eta_star > 0.0
                for eta, same in bd.tested:
                    if eta <= bd.eta_star:
                        assert same, (mode, seed, eta)
                flags_clean = recon.accepted_flags(prep, 0.0, seed, cap)
                flags_double = recon.accepted_flags(prep, 2 * bd.eta_star, seed, cap)
                assert np.any(flags_clean != flags_double), (mode, seed)
        budget = prepared["standard"]["prep_seconds"] + \
            prepared["linearized"]["prep_seconds"] + (time.perf_counter() - t0)
        assert budget < 900.0, f"criterion 7 took {budget:.1f} s incl. preparation"


def test_criterion_8_gap_behavior(prepared, breakdowns):
    with criterion(8, "the cap window shrinks with noise and closes beyond the "
                      "breakdown level"):
        prep = prepared["standard"]["prep"]
        for seed in BUNDLED_SEEDS:
            eta_star = breakdowns[("standard", seed)].eta_star
            etas = [0.0] + [eta_star * f for f in
                            (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0)]
            report = recon.m_delta_sweep(FIXTURE6, etas, seed, prepared=prep)
            gaps = [r.m_max - r.m_min for r in report.rows]
            for a, b in zip(gaps, gaps[1:]):
                assert b <= a + 1, f"gap grew: {gaps} (seed {seed})"
            for row in report.rows:
                if row.eta <= eta_star:
                    assert row.feasible, (seed, row)
                if not row.feasible:
                    assert row.eta > eta_star, (seed, row)
            assert not report.rows[-1].feasible, f"window never closed (seed {seed})"


def test_criterion_9_relative_robustness(cli_runs, breakdowns):
    with criterion(9, "the standard test is the more noise-robust and the "
                      "linearized test is at least 10x faster"):
        for seed in BUNDLED_SEEDS:
            eta_std = breakdowns[("standard", seed)].eta_star
            eta_lin = breakdowns[("linearized", seed)].eta_star
            assert eta_std >= eta_lin, (seed, eta_std, eta_lin)
        _, t_std = cli_runs[("standard", 1)]
        _, t_lin = cli_runs[("linearized", 1)]
        assert t_lin < t_std / 10.0, f"{t_lin:.1f} s vs {t_std:.1f} s"
        print(f"\n  eta* standard {breakdowns[('standard', BUNDLED_SEEDS[0])].eta_star:.2e}"
              f" vs linearized {breakdowns[('linearized', BUNDLED_SEEDS[0])].eta_star:.2e};"
              f" wall clock {t_lin:.1f} s vs {t_std:.1f} s")


def test_criterion_10_determinism(cli_runs):
    with criterion(10, "artifacts are bitwise identical across runs and worker "
                       "counts"):
        for mode in ("standard", "linearized"):
            out1, _ = cli_runs[(mode, 1)]
            out8, _ = cli_runs[(mode, 8)]
            for name in ("reconstruction.json", "counts.csv"):
                a = (out1 / name).read_bytes()
                b = (out8 / name).read_bytes()
                assert a == b, f"{mode}/{name} differs between worker counts"
