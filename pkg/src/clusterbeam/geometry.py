r"""Riemannian geometry of products of trace-quadric factors.

Each factor is the set {Y : Re tr(Y^H Q Y) = P} for a Hermitian positive
definite Q (Q = None stands for the identity, i.e. the sphere of radius
sqrt(P)). A product of C factors constrains the C cluster blocks of a point.

At a point Y the tangent directions xi satisfy Re tr(Q xi Y^H) = 0, the normal
direction is Q Y, and the metric is Re tr(xi^H eta) summed over factors.
Projection removes the normal component:

    P_Y(Z) = Z - lambda Q Y,   lambda = Re tr(Q Z Y^H) / ||Q Y||_F^2

Retraction rescales back onto the quadric:

    R_Y(eta, alpha) = s (Y + alpha eta),  s = sqrt(P / Re tr(Q W W^H)), W = Y + alpha eta

and vector transport is projection at the retracted point. The same code runs
the ellipsoid factors of the reduced problem and the sphere factors of the
antenna-space baseline; only Q differs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import SystemConfig
from .errors import DegenerateDirection, DegenerateNormal, DimensionMismatch
from .linalg import HermitianFactor, cholesky, frob_inner
from .reduction import (
    Dims,
    PointV,
    PointX,
    ReducedProblem,
    TangentV,
    TangentX,
    _VLayout,
    _XLayout,
)

TANGENCY_RTOL = 1e-8
FEASIBILITY_RTOL = 1e-10


@dataclass(frozen=True)
class EllipsoidFactor:
    """One quadric factor {Y : Re tr(Y^H Q Y) = P}; Q None means the sphere."""

    P: float
    Q: np.ndarray | None = None
    Qf: HermitianFactor | None = None

    def __post_init__(self):
        if not (np.isfinite(self.P) and self.P > 0.0):
            raise ValueError(f"power budget must be positive, got {self.P}")
        if self.Q is not None and self.Qf is None:
            # factoring also verifies Hermitian positive definiteness
            object.__setattr__(self, "Qf", cholesky(self.Q))

    def qx(self, Yc: np.ndarray) -> np.ndarray:
        """Normal direction Q Y (Y itself on the sphere)."""
        return Yc if self.Q is None else self.Q @ Yc

    def constraint(self, Yc: np.ndarray) -> float:
        """Re tr(Y^H Q Y)."""
        if self.Q is None:
            return float(np.real(np.vdot(Yc, Yc)))
        return float(np.real(np.vdot(Yc, self.Q @ Yc)))

    def constraint_stack(self, Ys: np.ndarray) -> np.ndarray:
        """Constraint values for a stack (..., h, w) of blocks."""
        QY = Ys if self.Q is None else np.matmul(self.Q, Ys)
        return np.real(np.sum(np.conj(Ys) * QY, axis=(-2, -1)))


@dataclass(frozen=True)
class ProductManifold:
    """Product of per-cluster factors over one of the two coordinate layouts."""

    factors: tuple
    dims: Dims
    space: str  # "x" (reduced, ellipsoid) or "v" (antenna, sphere)

    def __post_init__(self):
        if self.space not in ("x", "v"):
            raise ValueError(f"space must be 'x' or 'v', got {self.space!r}")
        if len(self.factors) != self.dims.C:
            raise ValueError(
                f"{len(self.factors)} factors for C={self.dims.C} clusters"
            )

    @property
    def C(self) -> int:
        return len(self.factors)

    @property
    def point_cls(self):
        return PointX if self.space == "x" else PointV

    @property
    def tangent_cls(self):
        return TangentX if self.space == "x" else TangentV

    @property
    def block_rows(self) -> int:
        return (
            _XLayout._block_rows(self.dims)
            if self.space == "x"
            else _VLayout._block_rows(self.dims)
        )

    @classmethod
    def ellipsoid(cls, rp: ReducedProblem) -> "ProductManifold":
        """Reduced-space product with Q^(c) factors from a ReducedProblem."""
        facs = tuple(
            EllipsoidFactor(P=float(rp.P[c]), Q=rp.Q[c], Qf=rp.Qf[c])
            for c in range(rp.dims.C)
        )
        return cls(factors=facs, dims=rp.dims, space="x")

    @classmethod
    def sphere(cls, cfg: SystemConfig) -> "ProductManifold":
        """Antenna-space product of spheres with radii sqrt(P_c)."""
        facs = tuple(EllipsoidFactor(P=float(p)) for p in cfg.P)
        return cls(factors=facs, dims=Dims.from_config(cfg), space="v")


def _split(M: ProductManifold, mat: np.ndarray):
    h = M.block_rows
    for c in range(M.C):
        yield M.factors[c], mat[..., c * h : (c + 1) * h, :]


def on_manifold(Y, M: ProductManifold, tol: float = FEASIBILITY_RTOL) -> bool:
    """True iff every cluster block satisfies |Re tr(Y^H Q Y) - P| <= tol * P."""
    return all(
        abs(f.constraint(Yc) - f.P) <= tol * f.P for f, Yc in _split(M, Y.mat)
    )


def feasibility_residual(Y, M: ProductManifold) -> float:
    """Worst relative constraint violation over factors."""
    return max(
        abs(f.constraint(Yc) - f.P) / f.P for f, Yc in _split(M, Y.mat)
    )


def random_point(M: ProductManifold, seed=0):
    """Gaussian draw scaled onto each factor; deterministic per seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    h = M.block_rows
    mat = (
        rng.standard_normal((M.C * h, M.dims.cols))
        + 1j * rng.standard_normal((M.C * h, M.dims.cols))
    ) / np.sqrt(2.0)
    out = np.empty_like(mat)
    for c, (f, Yc) in enumerate(_split(M, mat)):
        cv = f.constraint(Yc)
        if cv <= 0.0:
            raise DegenerateDirection("zero draw cannot be scaled onto the factor")
        out[c * h : (c + 1) * h, :] = np.sqrt(f.P / cv) * Yc
    return M.point_cls(mat=out, dims=M.dims)


def project_tangent(Y, Z, M: ProductManifold):
    """Orthogonal projection of Z onto the tangent space at Y.

    Per factor: Z - lambda Q Y with lambda = Re tr(Q Z Y^H) / ||Q Y||_F^2.
    Idempotent; output tangency residual <= 1e-8 relative by construction.
    """
    if Z.mat.shape != Y.mat.shape:
        raise DimensionMismatch(f"point/direction shapes differ: {Y.mat.shape} vs {Z.mat.shape}")
    h = M.block_rows
    out = np.empty_like(Z.mat)
    for c in range(M.C):
        f = M.factors[c]
        Yc = Y.mat[c * h : (c + 1) * h, :]
        Zc = Z.mat[c * h : (c + 1) * h, :]
        N = f.qx(Yc)
        denom = float(np.real(np.vdot(N, N)))
        if denom <= 0.0 or not np.isfinite(denom):
            raise DegenerateNormal(f"normal direction vanished on factor {c}")
        lam = float(np.real(np.vdot(N, Zc))) / denom
        out[c * h : (c + 1) * h, :] = Zc - lam * N
    return M.tangent_cls(mat=out, dims=M.dims)


def tangency_residual(Y, xi, M: ProductManifold) -> float:
    """Worst |Re tr(Q xi Y^H)| / P over factors (0 for exact tangency)."""
    res = 0.0
    h = M.block_rows
    for c in range(M.C):
        f = M.factors[c]
        N = f.qx(Y.mat[c * h : (c + 1) * h, :])
        xic = xi.mat[c * h : (c + 1) * h, :]
        res = max(res, abs(float(np.real(np.vdot(N, xic)))) / f.P)
    return res


def retract(Y, eta, alpha: float, M: ProductManifold):
    """Step along eta and rescale each cluster block back onto its factor."""
    if alpha < 0.0:
        raise ValueError(f"step must be nonnegative, got {alpha}")
    W = Y.mat + alpha * eta.mat
    h = M.block_rows
    out = np.empty_like(W)
    for c in range(M.C):
        f = M.factors[c]
        Wc = W[c * h : (c + 1) * h, :]
        cv = f.constraint(Wc)
        if cv <= 0.0 or not np.isfinite(cv):
            raise DegenerateDirection(f"retraction target degenerate on factor {c}")
        out[c * h : (c + 1) * h, :] = np.sqrt(f.P / cv) * Wc
    return type(Y)(mat=out, dims=M.dims)


def retract_many(Y, eta, alphas: np.ndarray, M: ProductManifold) -> np.ndarray:
    """Retract a whole ladder of steps at once; returns a stack of point matrices.

    Entries with a degenerate constraint value come back as NaN blocks rather
    than raising, so a line search can simply reject them.
    """
    alphas = np.asarray(alphas, dtype=float)
    W = Y.mat[None, :, :] + alphas[:, None, None] * eta.mat[None, :, :]
    h = M.block_rows
    out = np.empty_like(W)
    for c in range(M.C):
        f = M.factors[c]
        Wc = W[:, c * h : (c + 1) * h, :]
        cv = f.constraint_stack(Wc)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(cv > 0.0, np.sqrt(f.P / np.where(cv > 0.0, cv, 1.0)), np.nan)
        out[:, c * h : (c + 1) * h, :] = scale[:, None, None] * Wc
    return out


def transport(eta_prev, Y_new, M: ProductManifold):
    """Move a tangent vector to the tangent space at Y_new (projection)."""
    return project_tangent(Y_new, eta_prev, M)


def metric(xi, eta) -> float:
    """Riemannian metric: Re tr(xi^H eta) summed over factors."""
    return frob_inner(xi.mat, eta.mat)


def norm(xi) -> float:
    """Metric norm sqrt(<xi, xi>)."""
    return float(np.sqrt(max(frob_inner(xi.mat, xi.mat), 0.0)))
