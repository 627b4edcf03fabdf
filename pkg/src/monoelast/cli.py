"""Batch CLI: forward measurement runs, reconstructions, and noise sweeps.

Exit codes: 0 success, 2 configuration error, 3 resonance, 4 infeasible
sweep/calibration, 5 internal error.  Errors are also written to
``error.json`` in the output directory for machine consumption.
"""

from __future__ import annotations

import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import assembly, forward, model, recon, spectral
from .artifacts import (NtdCache, atomic_write_text, canonical_json, forward_cache_key,
                        scenario_hash, write_counts_csv, write_recon_json,
                        write_sweep_csv, write_vtk_voxels)
from .errors import ConfigError, InfeasibleSweepError, ResonanceError
from .noise import perturb
from .scenario import Scenario, load_scenario, wavelengths

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESONANCE = 3
EXIT_INFEASIBLE = 4
EXIT_INTERNAL = 5

CACHE_ENV_VAR = "MONOELAST_CACHE"

COMMANDS = ("forward", "reconstruct-standard", "reconstruct-linearized", "sweep",
            "spectra")


def run(config: str | Path, command: str, out: str | Path = ".",
        eta: Optional[str | float] = None, seed: Optional[int] = None,
        mcap: Optional[str] = None, delta_override: Optional[float] = None,
        threads: int = 1, cache: Optional[str | Path] = None,
        vtk: bool = False) -> int:
    """Execute one batch command; returns the process exit code."""
    out_dir = Path(out)
    try:
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}")
        scenario = load_scenario(config)
        scenario = _apply_flags(scenario, command, eta, seed, mcap, delta_override)
        out_dir.mkdir(parents=True, exist_ok=True)
        if cache is None:
            cache = os.environ.get(CACHE_ENV_VAR) or None

        if command == "forward":
            _run_forward(scenario, out_dir, cache)
        elif command in ("reconstruct-standard", "reconstruct-linearized"):
            _run_reconstruct(scenario, command.removeprefix("reconstruct-"),
                             out_dir, threads, vtk, cache)
        elif command == "sweep":
            _run_sweep(scenario, eta, out_dir, threads)
        elif command == "spectra":
            _run_spectra(scenario, out_dir)
        return EXIT_OK
    except ConfigError as exc:
        return _fail(out_dir, "config-error", exc, EXIT_CONFIG)
    except ResonanceError as exc:
        return _fail(out_dir, "resonance-error", exc, EXIT_RESONANCE)
    except InfeasibleSweepError as exc:
        return _fail(out_dir, "infeasible-sweep", exc, EXIT_INFEASIBLE)
    except Exception as exc:  # noqa: BLE001 - the CLI boundary maps everything
        return _fail(out_dir, "internal-error", exc, EXIT_INTERNAL)


def _fail(out_dir: Path, kind: str, exc: Exception, code: int) -> int:
    log.error("%s: %s", kind, exc)
    record = {"error": kind, "message": str(exc), "exit_code": code}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out_dir / "error.json", canonical_json(record))
    except OSError:
        pass
    return code


def _apply_flags(scenario: Scenario, command: str, eta, seed, mcap,
                 delta_override) -> Scenario:
    from dataclasses import replace
    updates = {}
    if eta is not None and command != "sweep":
        updates["eta"] = float(eta)
    if seed is not None:
        updates["seed"] = int(seed)
    if mcap is not None:
        if mcap in ("theory", "calibrate"):
            updates["m_cap_policy"] = mcap
        else:
            try:
                updates["m_cap_policy"] = int(mcap)
            except ValueError:
                raise ConfigError(
                    f"--mcap must be 'theory', 'calibrate' or an integer, got {mcap!r}")
    if delta_override is not None:
        updates["delta_override"] = float(delta_override)
    return replace(scenario, **updates).validated() if updates else scenario


def _scene(scenario: Scenario):
    mesh, layout, grid = scenario.build_model()
    loads = assembly.assemble_loads(mesh, layout, scenario.load_directions)
    true_field = model.make_material_field(
        scenario.background, scenario.resolved_inclusions(grid), grid)
    return mesh, layout, grid, loads, true_field


def _run_forward(scenario: Scenario, out_dir: Path, cache_dir) -> None:
    mesh, layout, grid, loads, true_field = _scene(scenario)
    cache = NtdCache(cache_dir)
    key = forward_cache_key(mesh, layout, true_field, scenario.omega,
                            scenario.load_directions)
    matrix = cache.load(key)
    if matrix is None:
        k = assembly.assemble_stiffness(mesh, true_field)
        m = assembly.assemble_mass(mesh, true_field.rho)
        fact = forward.factorize_system(k, m, scenario.omega, layout)
        matrix = forward.ntd_matrix(fact, loads).matrix
        cache.store(key, matrix)
    np.save(out_dir / "ntd.npy", matrix)
    meta = {
        "format_version": 1,
        "cache_key": key,
        "n_loads": int(matrix.shape[0]),
        "spectral_norm": spectral.spectral_norm(matrix),
        "config": scenario.to_dict(),
        "scenario_hash": scenario_hash(scenario.to_dict()),
    }
    atomic_write_text(out_dir / "forward.json", canonical_json(meta))


def _run_reconstruct(scenario: Scenario, mode: str, out_dir: Path, threads: int,
                     vtk: bool, cache_dir) -> None:
    t0 = time.perf_counter()
    if mode == "standard":
        result = recon.reconstruct_standard(scenario, threads=threads,
                                            cache=NtdCache(cache_dir))
    else:
        result = recon.reconstruct_linearized(scenario, threads=threads,
                                              cache=NtdCache(cache_dir))
    log.info("%s reconstruction finished in %.2f s", mode, time.perf_counter() - t0)
    _, _, grid = scenario.build_model()
    write_recon_json(result, out_dir / "reconstruction.json")
    write_counts_csv(result, grid, out_dir / "counts.csv")
    if vtk:
        write_vtk_voxels(result, scenario.extent, out_dir / "reconstruction.vtk")


def _run_sweep(scenario: Scenario, eta_spec, out_dir: Path, threads: int) -> None:
    eta_list = _parse_eta_range(eta_spec)
    report = recon.m_delta_sweep(scenario, eta_list, scenario.seed, threads=threads)
    write_sweep_csv(report, out_dir / "sweep.csv")
    if not report.rows or not report.rows[0].feasible:
        raise InfeasibleSweepError(
            "no cap window separates inside from outside at the first noise level")


def _run_spectra(scenario: Scenario, out_dir: Path) -> None:
    mesh, layout, grid, loads, true_field = _scene(scenario)
    k = assembly.assemble_stiffness(mesh, true_field)
    m = assembly.assemble_mass(mesh, true_field.rho)
    fact = forward.factorize_system(k, m, scenario.omega, layout)
    ntd = forward.ntd_matrix(fact, loads)
    noisy, spec = perturb(ntd, scenario.eta, scenario.seed)
    delta = spec.delta if scenario.delta_override is None else scenario.delta_override
    clean = spectral.EigenReport.from_matrix(ntd.matrix, -delta, matrix_id="ntd")
    dirty = spectral.EigenReport.from_matrix(noisy, -delta, matrix_id="ntd-noisy")
    atomic_write_text(out_dir / "ntd_eigs.csv", clean.to_csv())
    atomic_write_text(out_dir / "ntd_noisy_eigs.csv", dirty.to_csv())


def _parse_eta_range(spec) -> list[float]:
    if spec is None:
        raise ConfigError("sweep needs --eta START:STOP:STEP or a single value")
    if isinstance(spec, (int, float)):
        return [float(spec)]
    text = str(spec)
    if ":" not in text:
        return [float(text)]
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"--eta range must be START:STOP:STEP, got {text!r}")
    start, stop, step = (float(p) for p in parts)
    if step <= 0.0 or stop < start:
        raise ConfigError(f"bad --eta range {text!r}")
    n = int(round((stop - start) / step))
    values = [start + i * step for i in range(n + 1)]
    return [v for v in values if v <= stop + 1e-12]


@click.group()
@click.option("--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool):
    """Inclusion detection in elastic bodies from boundary measurements."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _common_options(fn):
    fn = click.option("--config", required=True, type=click.Path(), help="Scenario YAML.")(fn)
    fn = click.option("--out", default=".", type=click.Path(), help="Output directory.")(fn)
    fn = click.option("--eta", default=None, help="Relative noise level override.")(fn)
    fn = click.option("--seed", default=None, type=int, help="Noise seed override.")(fn)
    fn = click.option("--mcap", default=None,
                      help="Count cap: 'theory', 'calibrate' or an integer.")(fn)
    fn = click.option("--delta-override", default=None, type=float,
                      help="Use this absolute threshold instead of the realized one.")(fn)
    fn = click.option("--threads", default=1, type=int, help="Worker cap.")(fn)
    fn = click.option("--cache", default=None, type=click.Path(),
                      help=f"Cache directory (default ${CACHE_ENV_VAR}).")(fn)
    return fn


def _invoke(command: str, vtk: bool = False, **kwargs):
    sys.exit(run(kwargs.pop("config"), command, out=kwargs.pop("out"), vtk=vtk, **kwargs))


@main.command("forward")
@_common_options
def forward_cmd(**kwargs):
    """Compute and cache the boundary measurement matrix."""
    _invoke("forward", **kwargs)


@main.command("reconstruct-standard")
@click.option("--vtk", is_flag=True, help="Also write a legacy VTK voxel file.")
@_common_options
def reconstruct_standard_cmd(vtk, **kwargs):
    """Reconstruct with per-voxel forward solves."""
    _invoke("reconstruct-standard", vtk=vtk, **kwargs)


@main.command("reconstruct-linearized")
@click.option("--vtk", is_flag=True, help="Also write a legacy VTK voxel file.")
@_common_options
def reconstruct_linearized_cmd(vtk, **kwargs):
    """Reconstruct from the linearized measurement map."""
    _invoke("reconstruct-linearized", vtk=vtk, **kwargs)


@main.command("sweep")
@_common_options
def sweep_cmd(**kwargs):
    """Tabulate the feasible cap window over noise levels."""
    _invoke("sweep", **kwargs)


@main.command("spectra")
@_common_options
def spectra_cmd(**kwargs):
    """Write eigenvalue reports of the clean and noisy measurements."""
    _invoke("spectra", **kwargs)


@main.command("wavelengths")
@click.option("--lambda0", "lambda0", required=True, type=float, help="Pa")
@click.option("--mu0", required=True, type=float, help="Pa")
@click.option("--rho0", required=True, type=float, help="kg/m^3")
@click.option("--omega", required=True, type=float, help="rad/s")
def wavelengths_cmd(lambda0, mu0, rho0, omega):
    """Print pressure/shear wave speeds and wavelengths for a background."""
    try:
        report = wavelengths(lambda0, mu0, rho0, omega)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"v_p = {report.v_p:.6g} m/s, v_s = {report.v_s:.6g} m/s")
    click.echo(f"l_p = {report.l_p:.6g} m, l_s = {report.l_s:.6g} m")


if __name__ == "__main__":
    main()
