"""Dense complex Hermitian linear algebra used throughout the package.

All log-determinants go through a Cholesky factorization, never an explicit
determinant; Hermitian inputs are symmetrized before factoring to shed the
roundoff that accumulates in Gram products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotPositiveDefinite


@dataclass(frozen=True)
class Tolerances:
    """Central numeric tolerances (all relative)."""

    factor: float = 1e-10     # Cholesky reconstruction residual
    solve: float = 1e-9       # linear-solve residual
    hermitian: float = 1e-10  # allowed asymmetry of inputs


TOL = Tolerances()


def herm(a: np.ndarray) -> np.ndarray:
    """Hermitian part (a + a^H)/2."""
    return 0.5 * (a + a.conj().T)


def crandn(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Circularly symmetric complex Gaussian array, unit variance per entry."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass(frozen=True)
class HermitianFactor:
    """Lower-triangular Cholesky factor of a Hermitian positive definite matrix.

    `source` is the symmetrized input, `lower` satisfies lower @ lower^H = source
    up to the reconstruction tolerance.
    """

    source: np.ndarray
    lower: np.ndarray

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def logdet(self) -> float:
        """log det of the source matrix (nats)."""
        return 2.0 * float(np.sum(np.log(np.real(np.diagonal(self.lower)))))


def cholesky(a: np.ndarray, tol: Tolerances = TOL) -> HermitianFactor:
    """Factor a Hermitian positive definite matrix.

    Raises NotPositiveDefinite when a pivot fails, DimensionMismatch for
    non-square input, ValueError for non-finite or non-Hermitian input.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not (np.all(np.isfinite(a.real)) and np.all(np.isfinite(a.imag))):
        raise ValueError("matrix has non-finite entries")
    scale = np.linalg.norm(a, "fro")
    if scale > 0.0:
        skew = np.linalg.norm(a - a.conj().T, "fro")
        if skew > tol.hermitian * scale:
            raise ValueError(f"matrix is not Hermitian: asymmetry {skew / scale:.3e} relative")
    s = herm(a)
    try:
        lower = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return HermitianFactor(source=s, lower=lower)


def solve_hpd(factor: HermitianFactor, b: np.ndarray) -> np.ndarray:
    """Solve A @ Y = B given the Cholesky factor of A."""
    b = np.asarray(b, dtype=np.complex128)
    if b.shape[0] != factor.n:
        raise DimensionMismatch(
            f"rhs has {b.shape[0]} rows, factor dimension is {factor.n}"
        )
    return scipy.linalg.cho_solve((factor.lower, True), b)


def logdet_hpd(a: np.ndarray | HermitianFactor) -> float:
    """log det of a Hermitian positive definite matrix, in nats."""
    if isinstance(a, HermitianFactor):
        return a.logdet()
    return cholesky(a).logdet()


def frob_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Real inner product Re tr(A^H B)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.real(np.vdot(a, b)))
