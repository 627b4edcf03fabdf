"""Forward solves, boundary measurement matrices, and their linearization.

The discrete problem is (K - omega^2 M) u = F on the free dofs, where F
pairs a surface traction with the nodal shape functions.  The measurement
matrix restricted to an orthonormal load set is then ``F^T U``; it is
symmetric up to solver tolerance and positive definite in the static limit
(pushing along a traction produces positively correlated displacement).

The derivative of the measurement map with respect to coefficient bumps on a
voxel set B is assembled from three per-voxel Gram matrices of background
solutions, so contrast sweeps cost O(m^2) per voxel with no extra solves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import LoadSet, element_dof_map, reference_matrices
from .errors import ResonanceError, SingularSystemError
from .model import BoundaryLayout, Mesh, VoxelGrid

DENSE_SOLVE_LIMIT = 1000
RCOND_FLOOR = 1e-12


def free_dof_indices(n_dofs: int, layout: BoundaryLayout) -> np.ndarray:
    """Dof ids left after eliminating all components of clamped nodes."""
    fixed = np.zeros(n_dofs, dtype=bool)
    for node in layout.dirichlet_nodes:
        fixed[3 * node:3 * node + 3] = True
    return np.flatnonzero(~fixed)


def reduce_matrix(matrix: sp.spmatrix, free: np.ndarray) -> sp.csr_matrix:
    """Restrict a sparse operator to the free dofs."""
    return matrix.tocsr()[free][:, free]


@dataclass(frozen=True)
class SystemFactorization:
    """Factorized shifted operator A = K - omega^2 M on the free dofs."""

    omega: float
    n_dofs: int
    free: np.ndarray
    rcond: float
    is_dense: bool
    _solve_free: Callable[[np.ndarray], np.ndarray]
    _matvec_free: Callable[[np.ndarray], np.ndarray]

    @property
    def n_free(self) -> int:
        return self.free.shape[0]

    def solve(self, load: np.ndarray) -> np.ndarray:
        """Displacements for one load or a stack of loads (full dof layout)."""
        load = np.asarray(load, dtype=np.float64)
        squeeze = load.ndim == 1
        if squeeze:
            load = load[:, None]
        if load.shape[0] != self.n_dofs:
            raise ValueError(
                f"load has {load.shape[0]} dofs, factorization expects {self.n_dofs}")
        u = np.zeros_like(load)
        u[self.free] = self._solve_free(load[self.free])
        return u[:, 0] if squeeze else u

    def apply(self, u: np.ndarray) -> np.ndarray:
        """A @ u on the free dofs, embedded in the full layout (round-trip checks)."""
        u = np.asarray(u, dtype=np.float64)
        out = np.zeros_like(u)
        out[self.free] = self._matvec_free(u[self.free])
        return out


def factorize_system(stiffness: sp.spmatrix, mass: sp.spmatrix, omega: float,
                     layout: BoundaryLayout) -> SystemFactorization:
    """Factorize K - omega^2 M after Dirichlet elimination.

    Raises ``ResonanceError`` when the reciprocal condition estimate falls
    below 1e-12 (the frequency is numerically a resonance) and
    ``SingularSystemError`` for the structurally singular free-floating
    static case.
    """
    n_dofs = stiffness.shape[0]
    if layout.dirichlet_nodes.size == 0 and omega == 0.0:
        raise SingularSystemError(
            "no clamped boundary and zero frequency: rigid body modes are unconstrained")
    free = free_dof_indices(n_dofs, layout)
    a = reduce_matrix(stiffness - (omega ** 2) * mass, free)
    a = (a + a.T) * 0.5

    if free.size <= DENSE_SOLVE_LIMIT:
        dense = a.toarray()
        anorm = np.linalg.norm(dense, 1)
        lu, piv = sla.lu_factor(dense)
        gecon = sla.get_lapack_funcs(("gecon",), (dense,))[0]
        rcond, _ = gecon(lu, anorm)
        if rcond < RCOND_FLOOR:
            raise ResonanceError(
                f"system matrix numerically singular at omega={omega} "
                f"(rcond={rcond:.3e})", rcond=float(rcond))
        solve = lambda rhs: sla.lu_solve((lu, piv), rhs)
        matvec = lambda x: dense @ x
        return SystemFactorization(omega=float(omega), n_dofs=n_dofs, free=free,
                                   rcond=float(rcond), is_dense=True,
                                   _solve_free=solve, _matvec_free=matvec)

    try:
        lu = spla.splu(a.tocsc())
    except RuntimeError as exc:  # SuperLU reports exact singularity this way
        raise ResonanceError(
            f"system matrix exactly singular at omega={omega}: {exc}", rcond=0.0)
    op_inv = spla.LinearOperator(a.shape, matvec=lambda x: lu.solve(x),
                                 rmatvec=lambda x: lu.solve(x))  # A is symmetric
    anorm = spla.onenormest(a)
    ainvnorm = spla.onenormest(op_inv)
    rcond = 1.0 / (anorm * ainvnorm)
    if rcond < RCOND_FLOOR:
        raise ResonanceError(
            f"system matrix numerically singular at omega={omega} "
            f"(rcond={rcond:.3e})", rcond=float(rcond))
    solve = lambda rhs: lu.solve(np.ascontiguousarray(rhs))
    matvec = lambda x: a @ x
    return SystemFactorization(omega=float(omega), n_dofs=n_dofs, free=free,
                               rcond=float(rcond), is_dense=False,
                               _solve_free=solve, _matvec_free=matvec)


def solve_bvp(fact: SystemFactorization, load: np.ndarray) -> np.ndarray:
    """Displacement response to one discrete load vector."""
    return fact.solve(load)


@dataclass(frozen=True)
class SolutionBank:
    """Displacement solutions for every load of a load set under one field."""

    displacements: np.ndarray  # (n_dofs, n_loads)
    omega: float
    mesh: Mesh
    field_signature: bytes
    load_signature: bytes

    @property
    def n_loads(self) -> int:
        return self.displacements.shape[1]


def solve_bank(fact: SystemFactorization, loads: LoadSet, mesh: Mesh,
               field_signature: bytes = b"") -> SolutionBank:
    u = fact.solve(loads.vectors)
    return SolutionBank(displacements=u, omega=fact.omega, mesh=mesh,
                        field_signature=field_signature,
                        load_signature=loads.signature())


@dataclass(frozen=True)
class NtDMatrix:
    """Measurement matrix (traction i, displacement of traction j) pairings."""

    matrix: np.ndarray
    omega: float
    asymmetry: float           # relative asymmetry before symmetrization
    load_signature: bytes = b""
    field_signature: bytes = b""

    @property
    def n_loads(self) -> int:
        return self.matrix.shape[0]


def ntd_matrix(fact: SystemFactorization, loads: LoadSet,
               field_signature: bytes = b"") -> NtDMatrix:
    """Assemble the measurement matrix F^T U and symmetrize it."""
    u = fact.solve(loads.vectors)
    raw = loads.vectors.T @ u
    scale = np.linalg.norm(raw)
    asym = 0.0 if scale == 0.0 else np.linalg.norm(raw - raw.T) / scale
    return NtDMatrix(matrix=(raw + raw.T) * 0.5, omega=fact.omega, asymmetry=float(asym),
                     load_signature=loads.signature(), field_signature=field_signature)


def _gram_accumulate(u: np.ndarray, mesh: Mesh, element_ids: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-element-set Gram matrices of solutions: (div, sym-grad, displacement)."""
    k_lam, k_mu, m_ref = reference_matrices(mesh.spacing)
    m = u.shape[1]
    div_g = np.zeros((m, m))
    sym_g = np.zeros((m, m))
    disp_g = np.zeros((m, m))
    if element_ids.size == 0:
        return div_g, sym_g, disp_g
    dofs = element_dof_map(mesh)[element_ids]          # (k, 24)
    ue = u[dofs, :]                                    # (k, 24, m)
    div_g = np.einsum("kam,ab,kbn->mn", ue, k_lam, ue, optimize=True)
    sym_g = np.einsum("kam,ab,kbn->mn", ue, k_mu, ue, optimize=True)
    disp_g = np.einsum("kam,ab,kbn->mn", ue, m_ref, ue, optimize=True)
    return div_g, sym_g, disp_g


@dataclass(frozen=True)
class VoxelGrams:
    """Per-voxel Gram matrices of a background solution bank.

    ``div[v]`` pairs divergences, ``shear[v]`` pairs symmetrized gradients
    (with the factor 2 folded in), ``disp[v]`` pairs displacements, each
    integrated over voxel v.  The derivative of the measurement matrix for
    contrasts (a1, a2, a3) on a voxel set B is
    ``-(a1*div + a2*shear + omega^2*a3*disp)`` summed over B.
    """

    div: np.ndarray    # (n_voxels, m, m)
    shear: np.ndarray  # (n_voxels, m, m)
    disp: np.ndarray   # (n_voxels, m, m)
    omega: float

    @property
    def n_voxels(self) -> int:
        return self.div.shape[0]


def voxel_grams(bank: SolutionBank, grid: VoxelGrid) -> VoxelGrams:
    """Compute the Gram matrices of a solution bank for every voxel."""
    m = bank.n_loads
    nv = grid.n_voxels
    div = np.empty((nv, m, m))
    shear = np.empty((nv, m, m))
    disp = np.empty((nv, m, m))
    for v in range(nv):
        div[v], shear[v], disp[v] = _gram_accumulate(
            bank.displacements, bank.mesh, grid.voxel_to_elements[v])
    return VoxelGrams(div=div, shear=shear, disp=disp, omega=bank.omega)


def frechet_matrix(bank: SolutionBank, grid: VoxelGrid, voxels,
                   alpha_signed) -> np.ndarray:
    """Directional derivative of the measurement matrix.

    ``alpha_signed = (lam_hat, mu_hat, rho_hat)`` are the constant coefficient
    bumps applied on the voxel set; a density reduction enters with a negative
    ``rho_hat``.  Built from background solutions only.
    """
    lam_hat, mu_hat, rho_hat = (float(v) for v in alpha_signed)
    els = grid.elements_of(voxels)
    if grid.voxel_to_elements.size != bank.mesh.n_elements:
        raise ValueError("voxel grid does not match the bank's mesh")
    div_g, sym_g, disp_g = _gram_accumulate(bank.displacements, bank.mesh, els)
    return -(lam_hat * div_g + mu_hat * sym_g - (bank.omega ** 2) * rho_hat * disp_g)


def frechet_from_grams(grams: VoxelGrams, voxels, alpha_signed) -> np.ndarray:
    """Same derivative as ``frechet_matrix`` but from precomputed voxel Grams."""
    lam_hat, mu_hat, rho_hat = (float(v) for v in alpha_signed)
    vox = np.asarray(sorted(set(int(v) for v in voxels)), dtype=np.int64)
    m = grams.div.shape[1]
    if vox.size == 0:
        return np.zeros((m, m))
    div_g = grams.div[vox].sum(axis=0)
    sym_g = grams.shear[vox].sum(axis=0)
    disp_g = grams.disp[vox].sum(axis=0)
    return -(lam_hat * div_g + mu_hat * sym_g - (grams.omega ** 2) * rho_hat * disp_g)
