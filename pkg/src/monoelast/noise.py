"""Multiplicative matrix noise for measurement operators.

A perturbed measurement matrix is built as ``L + eta * ||L|| * E`` with a
unit-spectral-norm random matrix E, so the realized absolute noise level is
exactly ``delta = eta * ||L||``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import NtDMatrix
from .spectral import spectral_norm


@dataclass(frozen=True)
class NoisySpec:
    """Record of one noise realization: relative level, seed, realized delta."""

    eta: float
    seed: int
    delta: float


def noise_matrix(dim: int, seed: int, symmetrize: bool = True) -> np.ndarray:
    """Unit-spectral-norm random matrix with entries drawn uniform on [-1, 1].

    The draw is symmetrized by default so that perturbed operators keep a real
    spectrum; the PCG64 generator makes realizations reproducible bitwise for
    a given seed.
    """
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    rng = np.random.Generator(np.random.PCG64(seed))
    raw = rng.uniform(-1.0, 1.0, size=(dim, dim))
    if symmetrize:
        raw = (raw + raw.T) * 0.5
        norm = spectral_norm(raw)
    else:
        norm = float(np.linalg.norm(raw, 2))
    return raw / norm


def perturb(ntd, eta: float, seed: int, symmetrize: bool = True
            ) -> tuple[np.ndarray, NoisySpec]:
    """Additive relative perturbation of a measurement matrix.

    Accepts either a plain symmetric array or an ``NtDMatrix``.  Returns the
    perturbed matrix together with the realized noise record; the spectral
    distance to the input equals ``eta * ||input||`` up to roundoff.
    """
    if eta < 0.0:
        raise ValueError(f"noise level must be >= 0, got {eta}")
    matrix = ntd.matrix if isinstance(ntd, NtDMatrix) else np.asarray(ntd, dtype=np.float64)
    if eta == 0.0:
        return matrix.copy(), NoisySpec(eta=0.0, seed=int(seed), delta=0.0)
    norm = spectral_norm(matrix)
    e = noise_matrix(matrix.shape[0], seed, symmetrize=symmetrize)
    delta = eta * norm
    return matrix + delta * e, NoisySpec(eta=float(eta), seed=int(seed), delta=float(delta))
