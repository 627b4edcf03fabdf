"""Scenario configuration: one file/object describes one reproducible run.

Keys carry explicit unit suffixes (Pa, kg/m^3, rad/s, m).  A scenario resolves
to a canonical dictionary that is embedded in every artifact so a run can be
reproduced from its own output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import yaml

from .errors import ConfigError
from .model import (InclusionSpec, Mesh, BoundaryLayout, VoxelGrid, build_mesh,
                    make_material_field, partition_boundary, voxel_grid)

MCapPolicy = Union[int, str]  # an explicit cap, "theory", or "calibrate"


@dataclass(frozen=True)
class WaveReport:
    """Pressure/shear wave speeds and wavelengths of a homogeneous background."""

    v_p: float  # m/s
    v_s: float  # m/s
    l_p: float  # m
    l_s: float  # m


def wavelengths(lambda0: float, mu0: float, rho0: float, omega: float) -> WaveReport:
    """Wave speeds v_p, v_s and wavelengths 2*pi*v/omega for the background."""
    if min(lambda0, mu0, rho0, omega) <= 0.0:
        raise ValueError("wavelengths require strictly positive inputs")
    v_p = math.sqrt((lambda0 + 2.0 * mu0) / rho0)
    v_s = math.sqrt(mu0 / rho0)
    return WaveReport(v_p=v_p, v_s=v_s, l_p=2.0 * math.pi * v_p / omega,
                      l_s=2.0 * math.pi * v_s / omega)


@dataclass(frozen=True)
class InclusionDef:
    """Config-level inclusion: a voxel-index box or explicit ids plus jumps."""

    jump_lambda: float = 0.0
    jump_mu: float = 0.0
    jump_rho: float = 0.0
    box: Optional[tuple[tuple[int, int, int], tuple[int, int, int]]] = None  # inclusive lo/hi
    voxels: Optional[tuple[int, ...]] = None
    bounds: Optional[tuple[float, float, float, float]] = None

    def resolve(self, grid: VoxelGrid) -> InclusionSpec:
        if (self.box is None) == (self.voxels is None):
            raise ConfigError("inclusion needs exactly one of 'box' or 'voxels'")
        if self.voxels is not None:
            ids = tuple(int(v) for v in self.voxels)
        else:
            lo, hi = self.box
            rx, ry, rz = grid.resolution
            for axis, (l, h, r) in enumerate(zip(lo, hi, (rx, ry, rz))):
                if not (0 <= l <= h < r):
                    raise ConfigError(
                        f"inclusion box {lo}..{hi} leaves the voxel grid on axis {axis}")
            ids = tuple(grid.voxel_id(vx, vy, vz)
                        for vz in range(lo[2], hi[2] + 1)
                        for vy in range(lo[1], hi[1] + 1)
                        for vx in range(lo[0], hi[0] + 1))
        return InclusionSpec(region=ids, jump_lambda=self.jump_lambda,
                             jump_mu=self.jump_mu, jump_rho=self.jump_rho,
                             bounds=self.bounds)


@dataclass(frozen=True)
class Scenario:
    """Everything needed to rebuild a run: geometry, materials, loads, noise."""

    mesh_resolution: tuple[int, int, int]
    voxel_resolution: tuple[int, int, int]
    patch_grid: tuple[int, int]
    omega: float                                  # rad/s
    background: tuple[float, float, float]        # (lambda0 Pa, mu0 Pa, rho0 kg/m^3)
    extent: tuple[float, float, float] = (1.0, 1.0, 1.0)
    dirichlet_sides: tuple[str, ...] = ("z-",)
    load_directions: str = "normal"
    inclusions: tuple[InclusionDef, ...] = ()
    contrast: Optional[tuple[float, float, float]] = None
    alpha_settings: Optional[tuple[tuple[float, float, float], ...]] = None
    linearized_alpha_fraction: float = 0.1
    eta: float = 0.0
    seed: int = 0
    m_cap_policy: MCapPolicy = "calibrate"
    delta_override: Optional[float] = None

    def validated(self) -> "Scenario":
        """Check invariants; raises ConfigError naming the violated bound."""
        try:
            if self.omega == 0.0:
                raise ConfigError("omega must be nonzero for reconstruction runs")
            wavelengths(*self.background, abs(self.omega))
            mesh = build_mesh(self.extent, self.mesh_resolution)
            layout = partition_boundary(mesh, self.dirichlet_sides, self.patch_grid)
            grid = voxel_grid(mesh, self.voxel_resolution)
            make_material_field(self.background, self.resolved_inclusions(grid), grid)
            if self.load_directions not in ("normal", "normal+tangential"):
                raise ConfigError(f"unknown load mode {self.load_directions!r}")
            c = self.resolved_contrast()
            if max(c) <= 0.0:
                raise ConfigError("contrast must have at least one positive component")
            if c[2] >= self.background[2]:
                raise ConfigError(
                    f"density contrast {c[2]} violates the bound rho0 = {self.background[2]}")
            if self.eta < 0.0:
                raise ConfigError("eta must be >= 0")
            if not 0.0 < self.linearized_alpha_fraction <= 1.0:
                raise ConfigError("linearized_alpha_fraction must be in (0, 1]")
            if isinstance(self.m_cap_policy, str) and self.m_cap_policy not in (
                    "theory", "calibrate"):
                raise ConfigError(
                    f"m_cap policy must be an integer, 'theory' or 'calibrate', "
                    f"got {self.m_cap_policy!r}")
            _ = layout
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def resolved_inclusions(self, grid: VoxelGrid) -> tuple[InclusionSpec, ...]:
        return tuple(inc.resolve(grid) for inc in self.inclusions)

    def resolved_contrast(self) -> tuple[float, float, float]:
        """Expected contrasts driving the test-coefficient settings."""
        if self.contrast is not None:
            return self.contrast
        if not self.inclusions:
            raise ConfigError("contrast must be given explicitly when no inclusion is declared")
        return (max(i.jump_lambda for i in self.inclusions),
                max(i.jump_mu for i in self.inclusions),
                max(i.jump_rho for i in self.inclusions))

    def standard_alpha_settings(self) -> tuple[tuple[float, float, float], ...]:
        if self.alpha_settings is not None:
            return self.alpha_settings
        return default_alpha_settings(self.resolved_contrast())

    def linearized_alpha_settings(self) -> tuple[tuple[float, float, float], ...]:
        f = self.linearized_alpha_fraction
        return tuple(tuple(f * a for a in setting)
                     for setting in self.standard_alpha_settings())

    def build_model(self) -> tuple[Mesh, BoundaryLayout, VoxelGrid]:
        mesh = build_mesh(self.extent, self.mesh_resolution)
        layout = partition_boundary(mesh, self.dirichlet_sides, self.patch_grid)
        grid = voxel_grid(mesh, self.voxel_resolution)
        return mesh, layout, grid

    def truth_voxels(self) -> tuple[int, ...]:
        """Union of declared inclusion regions (synthetic ground truth)."""
        _, _, grid = self.build_model()
        ids: set[int] = set()
        for spec in self.resolved_inclusions(grid):
            ids.update(spec.region)
        return tuple(sorted(ids))

    def with_noise(self, eta: float, seed: int) -> "Scenario":
        return replace(self, eta=float(eta), seed=int(seed))

    def to_dict(self) -> dict:
        """Canonical plain-data form with unit-suffixed keys."""
        doc = {
            "extent_m": list(self.extent),
            "mesh_resolution": list(self.mesh_resolution),
            "voxel_resolution": list(self.voxel_resolution),
            "dirichlet_sides": list(self.dirichlet_sides),
            "patch_grid": list(self.patch_grid),
            "load_directions": self.load_directions,
            "omega_rad_s": self.omega,
            "lambda0_pa": self.background[0],
            "mu0_pa": self.background[1],
            "rho0_kg_m3": self.background[2],
            "inclusions": [_inclusion_to_dict(inc) for inc in self.inclusions],
            "linearized_alpha_fraction": self.linearized_alpha_fraction,
            "eta": self.eta,
            "seed": self.seed,
            "m_cap_policy": self.m_cap_policy,
        }
        if self.contrast is not None:
            doc["contrast"] = {"lambda_pa": self.contrast[0], "mu_pa": self.contrast[1],
                               "rho_kg_m3": self.contrast[2]}
        if self.alpha_settings is not None:
            doc["alpha_settings"] = [list(s) for s in self.alpha_settings]
        if self.delta_override is not None:
            doc["delta_override"] = self.delta_override
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        try:
            return _scenario_from_dict(cls, doc)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario document: {exc}") from exc


def _inclusion_to_dict(inc: InclusionDef) -> dict:
    doc = {"jump_lambda_pa": inc.jump_lambda, "jump_mu_pa": inc.jump_mu,
           "jump_rho_kg_m3": inc.jump_rho}
    if inc.box is not None:
        doc["box"] = {"lo": list(inc.box[0]), "hi": list(inc.box[1])}
    if inc.voxels is not None:
        doc["voxels"] = list(inc.voxels)
    if inc.bounds is not None:
        doc["bounds"] = {"n1_pa": inc.bounds[0], "n2_pa": inc.bounds[1],
                         "n3_kg_m3": inc.bounds[2], "N3_kg_m3": inc.bounds[3]}
    return doc


def _inclusion_from_dict(doc: dict) -> InclusionDef:
    box = None
    voxels = None
    if "box" in doc:
        box = (tuple(int(v) for v in doc["box"]["lo"]),
               tuple(int(v) for v in doc["box"]["hi"]))
    if "voxels" in doc:
        voxels = tuple(int(v) for v in doc["voxels"])
    bounds = None
    if "bounds" in doc:
        b = doc["bounds"]
        bounds = (float(b["n1_pa"]), float(b["n2_pa"]),
                  float(b["n3_kg_m3"]), float(b["N3_kg_m3"]))
    return InclusionDef(jump_lambda=float(doc.get("jump_lambda_pa", 0.0)),
                        jump_mu=float(doc.get("jump_mu_pa", 0.0)),
                        jump_rho=float(doc.get("jump_rho_kg_m3", 0.0)),
                        box=box, voxels=voxels, bounds=bounds)


def _scenario_from_dict(cls, doc: dict) -> Scenario:
    known = {"extent_m", "mesh_resolution", "voxel_resolution", "dirichlet_sides",
             "patch_grid", "load_directions", "omega_rad_s", "lambda0_pa", "mu0_pa",
             "rho0_kg_m3", "inclusions", "contrast", "alpha_settings",
             "linearized_alpha_fraction", "eta", "seed", "m_cap_policy",
             "delta_override"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    contrast = None
    if "contrast" in doc:
        c = doc["contrast"]
        contrast = (float(c["lambda_pa"]), float(c["mu_pa"]), float(c["rho_kg_m3"]))
    alpha = None
    if "alpha_settings" in doc:
        alpha = tuple(tuple(float(v) for v in s) for s in doc["alpha_settings"])
    policy = doc.get("m_cap_policy", "calibrate")
    if not isinstance(policy, str):
        policy = int(policy)
    delta_override = doc.get("delta_override")
    return cls(
        extent=tuple(float(v) for v in doc.get("extent_m", (1.0, 1.0, 1.0))),
        mesh_resolution=tuple(int(v) for v in doc["mesh_resolution"]),
        voxel_resolution=tuple(int(v) for v in doc["voxel_resolution"]),
        dirichlet_sides=tuple(str(s) for s in doc.get("dirichlet_sides", ("z-",))),
        patch_grid=tuple(int(v) for v in doc["patch_grid"]),
        load_directions=str(doc.get("load_directions", "normal")),
        omega=float(doc["omega_rad_s"]),
        background=(float(doc["lambda0_pa"]), float(doc["mu0_pa"]),
                    float(doc["rho0_kg_m3"])),
        inclusions=tuple(_inclusion_from_dict(d) for d in doc.get("inclusions", ())),
        contrast=contrast,
        alpha_settings=alpha,
        linearized_alpha_fraction=float(doc.get("linearized_alpha_fraction", 0.1)),
        eta=float(doc.get("eta", 0.0)),
        seed=int(doc.get("seed", 0)),
        m_cap_policy=policy,
        delta_override=None if delta_override is None else float(delta_override),
    )


def default_alpha_settings(contrast: Sequence[float]
                           ) -> tuple[tuple[float, float, float], ...]:
    """Single-parameter settings plus the full combination, zeros dropped."""
    c1, c2, c3 = (float(v) for v in contrast)
    settings = []
    for single in ((c1, 0.0, 0.0), (0.0, c2, 0.0), (0.0, 0.0, c3)):
        if max(single) > 0.0:
            settings.append(single)
    combined = (c1, c2, c3)
    if sum(1 for v in combined if v > 0.0) > 1:
        settings.append(combined)
    if not settings:
        raise ValueError("at least one contrast component must be positive")
    return tuple(settings)


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a YAML scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"scenario file {path} must hold a mapping")
    return Scenario.from_dict(doc).validated()


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario.to_dict(), sort_keys=True))
