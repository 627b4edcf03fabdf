"""Symmetric eigenvalue utilities and threshold counting."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp


def eig_sym(matrix: np.ndarray) -> np.ndarray:
    """Full ascending spectrum of a (nearly) symmetric real matrix.

    The input is symmetrized first, so eigenvalues are real by construction;
    multiplicities are preserved.
    """
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return np.linalg.eigvalsh((a + a.T) * 0.5)


def count_below(eigenvalues: np.ndarray, threshold: float) -> int:
    """Number of eigenvalues strictly below the threshold (sorted input)."""
    eigs = np.asarray(eigenvalues)
    return int(np.searchsorted(eigs, threshold, side="left"))


def spectral_norm(matrix: np.ndarray) -> float:
    """Operator 2-norm of a symmetric matrix via its spectrum."""
    eigs = eig_sym(matrix)
    if eigs.size == 0:
        return 0.0
    return float(max(abs(eigs[0]), abs(eigs[-1])))


@dataclass(frozen=True)
class EigenReport:
    """Sorted spectrum of a symmetric test matrix with a threshold count."""

    eigenvalues: np.ndarray
    threshold: float
    count_below: int
    matrix_id: str = ""

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, threshold: float,
                    matrix_id: str = "") -> "EigenReport":
        eigs = eig_sym(matrix)
        return cls(eigenvalues=eigs, threshold=float(threshold),
                   count_below=count_below(eigs, threshold), matrix_id=matrix_id)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# matrix_id={self.matrix_id},threshold={self.threshold!r},"
                  f"count_below={self.count_below}\n")
        buf.write("index,eigenvalue\n")
        for i, value in enumerate(self.eigenvalues):
            buf.write(f"{i},{float(value)!r}\n")
        return buf.getvalue()


def positive_mode_count(stiffness, mass_rho, mass_unit, omega: float) -> int:
    """Number of positive eigenvalues of the clamped-traction-free pencil.

    Counts sigma > 0 (with multiplicity) for (-K + omega^2 M_rho) x = sigma M x
    with the plain displacement pairing M on the right; all matrices must live
    on the same Dirichlet-reduced dof set.
    """
    a = _dense(stiffness)
    m_rho = _dense(mass_rho)
    m_unit = _dense(mass_unit)
    lhs = -(a - (omega ** 2) * m_rho)
    lhs = (lhs + lhs.T) * 0.5
    try:
        eigs = sla.eigh((lhs + lhs.T) * 0.5, (m_unit + m_unit.T) * 0.5,
                        eigvals_only=True)
    except sla.LinAlgError as exc:
        raise RuntimeError(f"displacement pairing matrix is not positive definite: {exc}")
    return int(np.count_nonzero(eigs > 0.0))


def _dense(matrix) -> np.ndarray:
    if sp.issparse(matrix):
        return matrix.toarray()
    return np.asarray(matrix, dtype=np.float64)
