"""Box mesh, boundary decomposition, voxel test grid, and material fields.

The computational domain is an axis-aligned box discretized into a structured
grid of trilinear hexahedra.  Coefficients (first Lame parameter, shear
modulus, density) are piecewise constant per element.  Test regions are the
cells of a coarser voxel grid whose cells group whole elements.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

SIDE_NAMES = ("x-", "x+", "y-", "y+", "z-", "z+")

#: axis normal to each side and the sign of its outward normal
_SIDE_AXIS = (0, 0, 1, 1, 2, 2)
_SIDE_SIGN = (-1, 1, -1, 1, -1, 1)


def side_tangent_axes(side: int) -> tuple[int, int]:
    """The two in-plane axes of a box side, in ascending axis order."""
    normal = _SIDE_AXIS[side]
    a, b = (ax for ax in range(3) if ax != normal)
    return a, b


@dataclass(frozen=True)
class Mesh:
    """Structured hexahedral discretization of an axis-aligned box.

    Node ids run x-fastest: id = ix + (nx+1)*(iy + (ny+1)*iz).  Element ids
    follow the same convention on the cell grid.  Local element nodes are
    ordered ax + 2*ay + 4*az over the corner offsets (ax, ay, az) in {0, 1}.
    """

    extent: tuple[float, float, float]
    resolution: tuple[int, int, int]
    nodes: np.ndarray        # (n_nodes, 3) coordinates in m
    elements: np.ndarray     # (n_elements, 8) node ids
    face_nodes: np.ndarray   # (n_faces, 4) node ids of boundary faces
    face_normals: np.ndarray  # (n_faces, 3) outward unit normals
    face_areas: np.ndarray   # (n_faces,) areas in m^2
    face_sides: np.ndarray   # (n_faces,) index into SIDE_NAMES
    face_grid: np.ndarray    # (n_faces, 2) in-plane face indices (ia, ib)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_faces(self) -> int:
        return self.face_nodes.shape[0]

    @property
    def n_dofs(self) -> int:
        return 3 * self.n_nodes

    @property
    def spacing(self) -> tuple[float, float, float]:
        """Element edge lengths (hx, hy, hz) in m."""
        return tuple(e / r for e, r in zip(self.extent, self.resolution))

    def node_id(self, ix: int, iy: int, iz: int) -> int:
        nx, ny, _ = self.resolution
        return ix + (nx + 1) * (iy + (ny + 1) * iz)

    def element_id(self, ex: int, ey: int, ez: int) -> int:
        nx, ny, _ = self.resolution
        return ex + nx * (ey + ny * ez)

    def node_indices(self, node_ids: np.ndarray) -> np.ndarray:
        """Integer (ix, iy, iz) triples for the given node ids."""
        nx, ny, _ = self.resolution
        ids = np.asarray(node_ids)
        ix = ids % (nx + 1)
        rest = ids // (nx + 1)
        iy = rest % (ny + 1)
        iz = rest // (ny + 1)
        return np.column_stack([ix, iy, iz])

    def signature(self) -> bytes:
        parts = [np.asarray(self.extent, dtype=np.float64).tobytes(),
                 np.asarray(self.resolution, dtype=np.int64).tobytes()]
        return b"mesh|" + b"|".join(parts)


def build_mesh(extent: Sequence[float] | float, resolution: Sequence[int] | int) -> Mesh:
    """Build the structured box mesh.

    Parameters
    ----------
    extent : box side lengths in m; a scalar means a cube.
    resolution : elements per axis; a scalar means the same count per axis.
    """
    if np.isscalar(extent):
        extent = (float(extent),) * 3
    if np.isscalar(resolution):
        resolution = (int(resolution),) * 3
    extent = tuple(float(v) for v in extent)
    resolution = tuple(int(v) for v in resolution)
    if len(extent) != 3 or len(resolution) != 3:
        raise ValueError("extent and resolution must have three components")
    if any(v <= 0.0 for v in extent):
        raise ValueError(f"extent must be positive, got {extent}")
    if any(r < 1 for r in resolution):
        raise ValueError(f"resolution must be >= 1 per axis, got {resolution}")

    nx, ny, nz = resolution
    axes = [np.linspace(0.0, extent[a], resolution[a] + 1) for a in range(3)]
    ii, jj, kk = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1),
                             indexing="ij")
    # Fortran ravel makes ix the fastest index, matching node_id.
    order = "F"
    nodes = np.column_stack([axes[0][ii.ravel(order=order)],
                             axes[1][jj.ravel(order=order)],
                             axes[2][kk.ravel(order=order)]])

    ex, ey, ez = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    ex = ex.ravel(order=order)
    ey = ey.ravel(order=order)
    ez = ez.ravel(order=order)
    elements = np.empty((nx * ny * nz, 8), dtype=np.int64)
    for az in (0, 1):
        for ay in (0, 1):
            for ax in (0, 1):
                local = ax + 2 * ay + 4 * az
                elements[:, local] = (ex + ax) + (nx + 1) * ((ey + ay) + (ny + 1) * (ez + az))

    face_nodes, face_normals, face_areas, face_sides, face_grid = _boundary_faces(
        extent, resolution)
    return Mesh(extent=extent, resolution=resolution, nodes=nodes, elements=elements,
                face_nodes=face_nodes, face_normals=face_normals, face_areas=face_areas,
                face_sides=face_sides, face_grid=face_grid)


def _boundary_faces(extent, resolution):
    nx, ny, nz = resolution
    h = [e / r for e, r in zip(extent, resolution)]
    nodes_per = (nx + 1, ny + 1, nz + 1)

    def nid(ix, iy, iz):
        return ix + nodes_per[0] * (iy + nodes_per[1] * iz)

    all_nodes, all_normals, all_areas, all_sides, all_grid = [], [], [], [], []
    for side in range(6):
        axis = _SIDE_AXIS[side]
        sign = _SIDE_SIGN[side]
        ta, tb = side_tangent_axes(side)
        na, nb = resolution[ta], resolution[tb]
        fixed = 0 if sign < 0 else resolution[axis]
        area = h[ta] * h[tb]

        ia, ib = np.meshgrid(np.arange(na), np.arange(nb), indexing="ij")
        ia = ia.ravel(order="F")
        ib = ib.ravel(order="F")
        quads = np.empty((na * nb, 4), dtype=np.int64)
        for corner, (da, db) in enumerate(((0, 0), (1, 0), (1, 1), (0, 1))):
            idx = [0, 0, 0]
            idx[axis] = np.full_like(ia, fixed)
            idx[ta] = ia + da
            idx[tb] = ib + db
            quads[:, corner] = nid(idx[0], idx[1], idx[2])
        normal = np.zeros(3)
        normal[axis] = sign

        all_nodes.append(quads)
        all_normals.append(np.tile(normal, (na * nb, 1)))
        all_areas.append(np.full(na * nb, area))
        all_sides.append(np.full(na * nb, side, dtype=np.int64))
        all_grid.append(np.column_stack([ia, ib]))

    return (np.vstack(all_nodes), np.vstack(all_normals), np.concatenate(all_areas),
            np.concatenate(all_sides), np.vstack(all_grid))


@dataclass(frozen=True)
class BoundaryLayout:
    """Dirichlet/Neumann split of the box surface and the Neumann patch map."""

    dirichlet_sides: tuple[str, ...]
    patch_grid: tuple[int, int]
    dirichlet_faces: np.ndarray   # face indices forming the clamped part
    neumann_faces: np.ndarray     # remaining face indices
    patch_of_face: np.ndarray     # (n_faces,) patch id, -1 on the clamped part
    n_patches: int
    patch_areas: np.ndarray       # (n_patches,)
    dirichlet_nodes: np.ndarray   # node ids clamped in all components

    def signature(self) -> bytes:
        return (b"layout|" + ",".join(self.dirichlet_sides).encode()
                + b"|" + np.asarray(self.patch_grid, dtype=np.int64).tobytes())


def partition_boundary(mesh: Mesh, dirichlet: Sequence[str] = ("z-",),
                       patch_grid: Sequence[int] | int = (10, 10)) -> BoundaryLayout:
    """Split the surface into clamped sides and a patch partition of the rest.

    ``dirichlet`` names whole box sides ("x-", ..., "z+"); the remaining sides
    are tiled with ``patch_grid`` patches per in-plane axis, which must divide
    each free side's face counts.
    """
    if np.isscalar(patch_grid):
        patch_grid = (int(patch_grid), int(patch_grid))
    pa, pb = (int(v) for v in patch_grid)
    if pa < 1 or pb < 1:
        raise ValueError(f"patch grid must be >= 1 per axis, got {(pa, pb)}")
    dirichlet = tuple(dict.fromkeys(dirichlet))
    for name in dirichlet:
        if name not in SIDE_NAMES:
            raise ValueError(f"unknown side name {name!r}; expected one of {SIDE_NAMES}")
    dir_set = {SIDE_NAMES.index(name) for name in dirichlet}
    free_sides = [s for s in range(6) if s not in dir_set]
    if not free_sides:
        raise ValueError("at least one side must carry tractions")

    patch_of_face = np.full(mesh.n_faces, -1, dtype=np.int64)
    base = 0
    for side in free_sides:
        ta, tb = side_tangent_axes(side)
        na, nb = mesh.resolution[ta], mesh.resolution[tb]
        if na % pa or nb % pb:
            raise ValueError(
                f"patch grid {(pa, pb)} does not divide the {SIDE_NAMES[side]} side "
                f"face counts {(na, nb)}")
        sel = mesh.face_sides == side
        ia = mesh.face_grid[sel, 0]
        ib = mesh.face_grid[sel, 1]
        patch_of_face[sel] = base + (ia // (na // pa)) + pa * (ib // (nb // pb))
        base += pa * pb

    n_patches = base
    dirichlet_faces = np.flatnonzero(patch_of_face < 0)
    neumann_faces = np.flatnonzero(patch_of_face >= 0)
    patch_areas = np.zeros(n_patches)
    np.add.at(patch_areas, patch_of_face[neumann_faces], mesh.face_areas[neumann_faces])

    if dir_set:
        idx = mesh.node_indices(np.arange(mesh.n_nodes))
        clamped = np.zeros(mesh.n_nodes, dtype=bool)
        for side in dir_set:
            axis = _SIDE_AXIS[side]
            plane = 0 if _SIDE_SIGN[side] < 0 else mesh.resolution[axis]
            clamped |= idx[:, axis] == plane
        dirichlet_nodes = np.flatnonzero(clamped)
    else:
        dirichlet_nodes = np.empty(0, dtype=np.int64)

    return BoundaryLayout(dirichlet_sides=tuple(SIDE_NAMES[s] for s in sorted(dir_set)),
                          patch_grid=(pa, pb), dirichlet_faces=dirichlet_faces,
                          neumann_faces=neumann_faces, patch_of_face=patch_of_face,
                          n_patches=n_patches, patch_areas=patch_areas,
                          dirichlet_nodes=dirichlet_nodes)


@dataclass(frozen=True)
class VoxelGrid:
    """Coarse cell grid over the mesh; each voxel is a candidate test region."""

    resolution: tuple[int, int, int]
    voxel_to_elements: np.ndarray  # (n_voxels, elements_per_voxel) element ids
    neighbors: np.ndarray          # (n_voxels, 6) face neighbors, -1 = domain hull

    @property
    def n_voxels(self) -> int:
        return self.voxel_to_elements.shape[0]

    @property
    def touches_boundary(self) -> np.ndarray:
        """Voxels with a face on the domain hull."""
        return (self.neighbors < 0).any(axis=1)

    def voxel_id(self, vx: int, vy: int, vz: int) -> int:
        rx, ry, _ = self.resolution
        return vx + rx * (vy + ry * vz)

    def voxel_index(self, vid: int) -> tuple[int, int, int]:
        rx, ry, _ = self.resolution
        return vid % rx, (vid // rx) % ry, vid // (rx * ry)

    def interior_voxels(self) -> np.ndarray:
        return np.flatnonzero(~self.touches_boundary)

    def elements_of(self, voxels) -> np.ndarray:
        """Sorted union of the element ids of the given voxels."""
        vox = np.asarray(sorted(set(int(v) for v in voxels)), dtype=np.int64)
        if vox.size == 0:
            return np.empty(0, dtype=np.int64)
        if vox.min() < 0 or vox.max() >= self.n_voxels:
            raise ValueError("voxel id out of range")
        return np.sort(self.voxel_to_elements[vox].ravel())

    def signature(self) -> bytes:
        return b"grid|" + np.asarray(self.resolution, dtype=np.int64).tobytes()


def voxel_grid(mesh: Mesh, resolution: Sequence[int] | int) -> VoxelGrid:
    """Group mesh elements into an aligned coarser voxel grid.

    The voxel resolution must divide the mesh resolution on every axis so that
    voxels partition the element set exactly.
    """
    if np.isscalar(resolution):
        resolution = (int(resolution),) * 3
    resolution = tuple(int(v) for v in resolution)
    if any(r < 1 for r in resolution):
        raise ValueError(f"voxel resolution must be >= 1 per axis, got {resolution}")
    factors = []
    for a in range(3):
        if mesh.resolution[a] % resolution[a]:
            raise ValueError(
                f"voxel resolution {resolution} does not divide mesh resolution "
                f"{mesh.resolution}")
        factors.append(mesh.resolution[a] // resolution[a])
    fx, fy, fz = factors
    rx, ry, rz = resolution

    n_vox = rx * ry * rz
    v2e = np.empty((n_vox, fx * fy * fz), dtype=np.int64)
    for vz in range(rz):
        for vy in range(ry):
            for vx in range(rx):
                vid = vx + rx * (vy + ry * vz)
                ex = np.arange(vx * fx, (vx + 1) * fx)
                ey = np.arange(vy * fy, (vy + 1) * fy)
                ez = np.arange(vz * fz, (vz + 1) * fz)
                exg, eyg, ezg = np.meshgrid(ex, ey, ez, indexing="ij")
                ids = (exg + mesh.resolution[0] * (eyg + mesh.resolution[1] * ezg))
                v2e[vid] = np.sort(ids.ravel())

    neighbors = np.full((n_vox, 6), -1, dtype=np.int64)
    for vz in range(rz):
        for vy in range(ry):
            for vx in range(rx):
                vid = vx + rx * (vy + ry * vz)
                for slot, (dx, dy, dz) in enumerate(((-1, 0, 0), (1, 0, 0), (0, -1, 0),
                                                     (0, 1, 0), (0, 0, -1), (0, 0, 1))):
                    wx, wy, wz = vx + dx, vy + dy, vz + dz
                    if 0 <= wx < rx and 0 <= wy < ry and 0 <= wz < rz:
                        neighbors[vid, slot] = wx + rx * (wy + ry * wz)

    return VoxelGrid(resolution=resolution, voxel_to_elements=v2e, neighbors=neighbors)


@dataclass(frozen=True)
class MaterialField:
    """Per-element coefficient triple (first Lame parameter, shear modulus, density)."""

    lam: np.ndarray  # Pa
    mu: np.ndarray   # Pa
    rho: np.ndarray  # kg/m^3

    def __post_init__(self):
        for name in ("lam", "mu", "rho"):
            arr = getattr(self, name)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be a flat per-element array")
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
                raise ValueError(f"{name} must be strictly positive and finite")
        if not (self.lam.shape == self.mu.shape == self.rho.shape):
            raise ValueError("coefficient arrays must share one shape")

    @property
    def n_elements(self) -> int:
        return self.lam.shape[0]

    def signature(self) -> bytes:
        return b"field|" + self.lam.tobytes() + self.mu.tobytes() + self.rho.tobytes()


@dataclass(frozen=True)
class InclusionSpec:
    """One inclusion: a voxel region with constant coefficient jumps.

    Jumps are added to the background stiffness parameters and subtracted from
    the background density.  ``bounds`` records the admissible-jump constants
    (n1, n2, n3, N3): active jumps must exceed their lower bound and the
    density jump must stay below N3 < rho0.
    """

    region: tuple[int, ...]
    jump_lambda: float = 0.0  # Pa, >= 0
    jump_mu: float = 0.0      # Pa, >= 0
    jump_rho: float = 0.0     # kg/m^3, >= 0 (density is reduced)
    bounds: Optional[tuple[float, float, float, float]] = None

    def __post_init__(self):
        object.__setattr__(self, "region", tuple(sorted(set(int(v) for v in self.region))))

    def validate(self, grid: VoxelGrid, rho0: float) -> None:
        if not self.region:
            raise ValueError("inclusion region is empty")
        region = np.asarray(self.region)
        if region.min() < 0 or region.max() >= grid.n_voxels:
            raise ValueError("inclusion region voxel id out of range")
        if grid.touches_boundary[region].any():
            raise ValueError("inclusion region must lie strictly inside the domain")
        for name, value in (("jump_lambda", self.jump_lambda), ("jump_mu", self.jump_mu),
                            ("jump_rho", self.jump_rho)):
            if value < 0.0:
                raise ValueError(f"{name} must be >= 0, got {value}")
        if self.jump_rho >= rho0:
            raise ValueError(
                f"density jump {self.jump_rho} violates the bound rho0 = {rho0}")
        if self.bounds is not None:
            n1, n2, n3, cap3 = self.bounds
            if self.jump_lambda > 0.0 and not self.jump_lambda > n1:
                raise ValueError(f"jump_lambda {self.jump_lambda} violates the bound n_1 = {n1}")
            if self.jump_mu > 0.0 and not self.jump_mu > n2:
                raise ValueError(f"jump_mu {self.jump_mu} violates the bound n_2 = {n2}")
            if self.jump_rho > 0.0 and not (n3 < self.jump_rho < cap3):
                raise ValueError(
                    f"jump_rho {self.jump_rho} violates the bounds n_3 = {n3}, N_3 = {cap3}")
            if not cap3 < rho0:
                raise ValueError(f"N_3 = {cap3} violates the bound rho0 = {rho0}")


def make_material_field(background: Sequence[float], inclusions: Sequence[InclusionSpec],
                        grid: VoxelGrid) -> MaterialField:
    """Realize a coefficient field: homogeneous background plus voxel inclusions."""
    lam0, mu0, rho0 = (float(v) for v in background)
    if min(lam0, mu0, rho0) <= 0.0:
        raise ValueError(f"background must be positive, got {(lam0, mu0, rho0)}")
    n_elem = grid.voxel_to_elements.size
    lam = np.full(n_elem, lam0)
    mu = np.full(n_elem, mu0)
    rho = np.full(n_elem, rho0)
    for spec in inclusions:
        spec.validate(grid, rho0)
        els = grid.elements_of(spec.region)
        lam[els] += spec.jump_lambda
        mu[els] += spec.jump_mu
        rho[els] -= spec.jump_rho
    if np.any(rho <= 0.0):
        raise ValueError("combined density jumps drive the density non-positive")
    return MaterialField(lam=lam, mu=mu, rho=rho)


def make_test_coefficients(background: Sequence[float], region_voxels,
                           alpha: Sequence[float], grid: VoxelGrid) -> MaterialField:
    """Test coefficient field: background stiffened and lightened on a voxel set."""
    lam0, mu0, rho0 = (float(v) for v in background)
    if min(lam0, mu0, rho0) <= 0.0:
        raise ValueError(f"background must be positive, got {(lam0, mu0, rho0)}")
    a1, a2, a3 = (float(v) for v in alpha)
    if min(a1, a2, a3) < 0.0:
        raise ValueError(f"test contrasts must be >= 0, got {(a1, a2, a3)}")
    if a3 >= rho0:
        raise ValueError(f"density contrast {a3} must stay below rho0 = {rho0}")
    n_elem = grid.voxel_to_elements.size
    lam = np.full(n_elem, lam0)
    mu = np.full(n_elem, mu0)
    rho = np.full(n_elem, rho0)
    els = grid.elements_of(region_voxels)
    lam[els] += a1
    mu[els] += a2
    rho[els] -= a3
    return MaterialField(lam=lam, mu=mu, rho=rho)
