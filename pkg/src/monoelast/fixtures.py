"""Bundled synthetic scenarios used by the test suite and the docs.

The materials follow the reference lab setup: a soft rubber-like background
(lambda = 6e5 Pa, mu = 6e3 Pa, rho = 3e3 kg/m^3) with stiffer, lighter
inclusions (2e6 Pa, 2e4 Pa, 1e3 kg/m^3) in a clamped-bottom unit cube driven
at 50 rad/s.
"""

from __future__ import annotations

from .scenario import InclusionDef, Scenario

BACKGROUND = (6.0e5, 6.0e3, 3.0e3)
INCLUSION_JUMPS = (1.4e6, 1.4e4, 2.0e3)  # inclusion minus background, density reduced
OMEGA = 50.0

BUNDLED_SEEDS = (101, 202, 303)


def two_inclusion_fixture() -> Scenario:
    """Unit cube with two disjoint single-voxel inclusions (the end-to-end fixture).

    A 5x5x5 voxel grid over a 10x10x10 mesh (8 elements per voxel), clamped
    bottom, 5x5 patches per free side with normal loads (125 loads).  At
    50 rad/s the zero-noise count landscape separates the two inclusion
    voxels from the rest with a comfortable margin.
    """
    return Scenario(
        mesh_resolution=(10, 10, 10),
        voxel_resolution=(5, 5, 5),
        patch_grid=(5, 5),
        omega=OMEGA,
        background=BACKGROUND,
        inclusions=(
            InclusionDef(jump_lambda=INCLUSION_JUMPS[0], jump_mu=INCLUSION_JUMPS[1],
                         jump_rho=INCLUSION_JUMPS[2], box=((1, 1, 1), (1, 1, 1))),
            InclusionDef(jump_lambda=INCLUSION_JUMPS[0], jump_mu=INCLUSION_JUMPS[1],
                         jump_rho=INCLUSION_JUMPS[2], box=((3, 3, 3), (3, 3, 3))),
        ),
    )


def single_inclusion_fixture(mesh_res: int = 4, voxel_res: int = 4,
                             omega: float = OMEGA) -> Scenario:
    """Small single-inclusion cube for unit tests."""
    c = voxel_res // 2
    return Scenario(
        mesh_resolution=(mesh_res,) * 3,
        voxel_resolution=(voxel_res,) * 3,
        patch_grid=(2, 2),
        omega=omega,
        background=BACKGROUND,
        inclusions=(
            InclusionDef(jump_lambda=INCLUSION_JUMPS[0], jump_mu=INCLUSION_JUMPS[1],
                         jump_rho=INCLUSION_JUMPS[2], box=((c, c, c), (c, c, c))),
        ),
    )


def empty_fixture(mesh_res: int = 4, voxel_res: int = 4, omega: float = 2.0) -> Scenario:
    """No inclusion at all; any sound test must reject every voxel."""
    return Scenario(
        mesh_resolution=(mesh_res,) * 3,
        voxel_resolution=(voxel_res,) * 3,
        patch_grid=(2, 2),
        omega=omega,
        background=BACKGROUND,
        inclusions=(),
        contrast=INCLUSION_JUMPS,
    )
