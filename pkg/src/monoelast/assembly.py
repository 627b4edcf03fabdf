"""FEM matrix and boundary load assembly for trilinear hexahedra.

All elements of the structured mesh are congruent, so the element matrices
are computed once on the reference brick (2x2x2 Gauss, exact for trilinear
shape functions with constant coefficients) and scattered with per-element
coefficients.  The stiffness splits into a dilatational part weighted by the
first Lame parameter and a shear part weighted by the shear modulus, which
keeps the assembled operator exactly linear in the coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .model import BoundaryLayout, MaterialField, Mesh, VoxelGrid, side_tangent_axes

_GAUSS_1D = (-1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0))

#: local corner offsets in the ax + 2*ay + 4*az order used by the mesh
_CORNERS = np.array([[ax, ay, az] for az in (0, 1) for ay in (0, 1) for ax in (0, 1)])


def _shape_values(xi: np.ndarray) -> np.ndarray:
    """Trilinear shape values at a reference point xi in [-1, 1]^3."""
    signs = 2.0 * _CORNERS - 1.0
    return np.prod(0.5 * (1.0 + signs * xi), axis=1)


def _shape_gradients(xi: np.ndarray, h: tuple[float, float, float]) -> np.ndarray:
    """Physical gradients (8, 3) of the shape functions for edge lengths h."""
    signs = 2.0 * _CORNERS - 1.0
    factors = 0.5 * (1.0 + signs * xi)  # (8, 3)
    grads = np.empty((8, 3))
    for a in range(3):
        cols = [c for c in range(3) if c != a]
        grads[:, a] = 0.5 * signs[:, a] * factors[:, cols[0]] * factors[:, cols[1]]
        grads[:, a] *= 2.0 / h[a]  # reference-to-physical scaling
    return grads


@lru_cache(maxsize=8)
def reference_matrices(h: tuple[float, float, float]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit-coefficient element matrices (24x24) for edge lengths h.

    Returns (K_lam, K_mu, M) where, for shape-function products integrated
    over one element,

    * ``K_lam[3a+i, 3b+j] = \\int dN_a/dx_i dN_b/dx_j``          (divergence pairing)
    * ``K_mu[3a+i, 3b+j]  = \\int d_ij grad N_a . grad N_b + dN_a/dx_j dN_b/dx_i``
      (twice the symmetrized-gradient pairing)
    * ``M[3a+i, 3b+j]     = d_ij \\int N_a N_b``
    """
    detj = h[0] * h[1] * h[2] / 8.0
    k_lam = np.zeros((24, 24))
    k_mu = np.zeros((24, 24))
    mass = np.zeros((24, 24))
    eye = np.eye(3)
    for gx in _GAUSS_1D:
        for gy in _GAUSS_1D:
            for gz in _GAUSS_1D:
                xi = np.array([gx, gy, gz])
                n = _shape_values(xi)
                g = _shape_gradients(xi, h)
                gdot = g @ g.T                        # (8, 8)
                for a in range(8):
                    for b in range(8):
                        blk_lam = np.outer(g[a], g[b])
                        blk_mu = eye * gdot[a, b] + np.outer(g[b], g[a])
                        k_lam[3 * a:3 * a + 3, 3 * b:3 * b + 3] += detj * blk_lam
                        k_mu[3 * a:3 * a + 3, 3 * b:3 * b + 3] += detj * blk_mu
                        mass[3 * a:3 * a + 3, 3 * b:3 * b + 3] += detj * n[a] * n[b] * eye
    return k_lam, k_mu, mass


def element_dof_map(mesh: Mesh) -> np.ndarray:
    """(n_elements, 24) global dof ids, node-major with interleaved components."""
    dofs = np.empty((mesh.n_elements, 24), dtype=np.int64)
    for a in range(8):
        for i in range(3):
            dofs[:, 3 * a + i] = 3 * mesh.elements[:, a] + i
    return dofs


def _scatter(mesh: Mesh, per_element: np.ndarray) -> sp.csr_matrix:
    """Assemble (n_elements, 24, 24) blocks into a global CSR matrix."""
    dofs = element_dof_map(mesh)
    rows = np.repeat(dofs, 24, axis=1).ravel()
    cols = np.tile(dofs, (1, 24)).ravel()
    mat = sp.coo_matrix((per_element.ravel(), (rows, cols)),
                        shape=(mesh.n_dofs, mesh.n_dofs))
    return mat.tocsr()


def assemble_stiffness(mesh: Mesh, field: MaterialField) -> sp.csr_matrix:
    """Global stiffness for the form 2*mu*sym-grad pairing + lam*div pairing."""
    if field.n_elements != mesh.n_elements:
        raise ValueError("material field does not match the mesh")
    k_lam, k_mu, _ = reference_matrices(mesh.spacing)
    blocks = (field.lam[:, None, None] * k_lam[None, :, :]
              + field.mu[:, None, None] * k_mu[None, :, :])
    return _scatter(mesh, blocks)


def assemble_mass(mesh: Mesh, rho: np.ndarray) -> sp.csr_matrix:
    """Global mass for the density-weighted displacement pairing."""
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (mesh.n_elements,):
        raise ValueError("density array does not match the mesh")
    if np.any(rho <= 0.0):
        raise ValueError("density must be strictly positive")
    _, _, m_ref = reference_matrices(mesh.spacing)
    blocks = rho[:, None, None] * m_ref[None, :, :]
    return _scatter(mesh, blocks)


def voxel_unit_matrices(mesh: Mesh, grid: VoxelGrid, voxels) -> tuple[sp.csr_matrix,
                                                                      sp.csr_matrix,
                                                                      sp.csr_matrix]:
    """Unit-coefficient (K_lam, K_mu, M) restricted to the elements of a voxel set."""
    els = grid.elements_of(voxels)
    k_lam, k_mu, m_ref = reference_matrices(mesh.spacing)
    dofs = element_dof_map(mesh)[els]
    rows = np.repeat(dofs, 24, axis=1).ravel()
    cols = np.tile(dofs, (1, 24)).ravel()
    shape = (mesh.n_dofs, mesh.n_dofs)

    def build(ref):
        data = np.broadcast_to(ref, (els.size, 24, 24)).ravel()
        return sp.coo_matrix((data, (rows, cols)), shape=shape).tocsr()

    return build(k_lam), build(k_mu), build(m_ref)


@dataclass(frozen=True)
class LoadSet:
    """Discrete boundary loads, one per (patch, direction).

    ``vectors[:, i]`` holds the work pairing of load i with every nodal shape
    function; tractions are constant over their patch and scaled to unit
    L2 norm, so distinct loads are orthonormal on the traction side.
    """

    vectors: np.ndarray          # (n_dofs, n_loads)
    l2_norms: np.ndarray         # (n_loads,) realized traction norms
    patch_ids: np.ndarray        # (n_loads,)
    direction_labels: tuple[str, ...]
    mode: str                    # "normal" or "normal+tangential"

    @property
    def n_loads(self) -> int:
        return self.vectors.shape[1]

    def signature(self) -> bytes:
        return b"loads|" + self.mode.encode() + b"|" + np.asarray(
            [self.n_loads], dtype=np.int64).tobytes()


_FACE_GAUSS = [(a, b) for a in _GAUSS_1D for b in _GAUSS_1D]


def assemble_loads(mesh: Mesh, layout: BoundaryLayout, directions: str = "normal") -> LoadSet:
    """Build one unit-norm constant traction per patch and direction.

    ``directions="normal"`` applies the outward normal only; adding
    ``"+tangential"`` appends the two in-plane axis directions per patch.
    """
    if directions not in ("normal", "normal+tangential"):
        raise ValueError(f"unknown load direction mode {directions!r}")
    n_dirs = 1 if directions == "normal" else 3

    n_loads = layout.n_patches * n_dirs
    vectors = np.zeros((mesh.n_dofs, n_loads))
    l2_norms = np.empty(n_loads)
    patch_ids = np.empty(n_loads, dtype=np.int64)
    labels = []

    # 2x2 Gauss nodal weights of a constant traction over one rectangular face
    # reduce to area/4 per corner; evaluated via the quadrature for clarity.
    corner_w = np.zeros(4)
    for ga, gb in _FACE_GAUSS:
        vals = np.array([(1 - ga) * (1 - gb), (1 + ga) * (1 - gb),
                         (1 + ga) * (1 + gb), (1 - ga) * (1 + gb)]) / 4.0
        corner_w += vals / 4.0

    for pid in range(layout.n_patches):
        faces = np.flatnonzero(layout.patch_of_face == pid)
        area = layout.patch_areas[pid]
        scale = 1.0 / np.sqrt(area)
        side = mesh.face_sides[faces[0]]
        dirs = [mesh.face_normals[faces[0]]]
        dir_names = ["normal"]
        if n_dirs == 3:
            for t in side_tangent_axes(side):
                unit = np.zeros(3)
                unit[t] = 1.0
                dirs.append(unit)
                dir_names.append(f"tangent-{'xyz'[t]}")
        for d in range(n_dirs):
            col = pid * n_dirs + d
            patch_ids[col] = pid
            labels.append(dir_names[d])
            l2_norms[col] = scale * np.sqrt(area)
            traction = scale * dirs[d]
            for f in faces:
                w = mesh.face_areas[f] * corner_w
                for corner, node in enumerate(mesh.face_nodes[f]):
                    vectors[3 * node:3 * node + 3, col] += w[corner] * traction

    return LoadSet(vectors=vectors, l2_norms=l2_norms, patch_ids=patch_ids,
                   direction_labels=tuple(labels), mode=directions)
