r"""Reduced-coordinate problem construction and the V <-> X maps.

The substitution V^(c) = (H^(c))^H X^(c) replaces the tall per-cluster
beamformer blocks (L rows each) by reduced blocks with K*N_r rows. The pieces:

  Q^(c) = H^(c) (H^(c))^H                 Gram matrix, Hermitian PD (K*N_r square)
  G_k   = [H_k^(1) (H^(1))^H, ...,
           H_k^(C) (H^(C))^H]             effective channel, N_r x C*K*N_r
  per-cluster power  tr((X^(c))^H Q^(c) X^(c)) = ||V^(c)||_F^2

Points live in one canonical matrix: X is (C*K*N_r) x (K*d) with rows grouped
by cluster and columns grouped by user; V is N_t x (K*d) likewise. Cluster and
user views are read-only slices of that one array, so the two views can never
fall out of step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .channel import ChannelSet, SystemConfig
from .errors import DimensionMismatch, NotPositiveDefinite, RankDeficient
from .linalg import cholesky, herm, solve_hpd


class Dims(NamedTuple):
    """Problem dimensions carried alongside every point."""

    C: int
    L: int
    K: int
    N_r: int
    d: int

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "Dims":
        return cls(C=cfg.C, L=cfg.L, K=cfg.K, N_r=cfg.N_r, d=cfg.d)

    @property
    def N_t(self) -> int:
        return self.C * self.L

    @property
    def x_block_rows(self) -> int:
        return self.K * self.N_r

    @property
    def cols(self) -> int:
        return self.K * self.d


@dataclass(frozen=True)
class _Blocked:
    """Matrix with C vertical cluster blocks and K user column groups."""

    mat: np.ndarray
    dims: Dims

    @staticmethod
    def _block_rows(dims: Dims) -> int:
        raise NotImplementedError

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=np.complex128)
        object.__setattr__(self, "mat", m)
        h = self._block_rows(self.dims)
        expected = (self.dims.C * h, self.dims.cols)
        if m.shape != expected:
            raise DimensionMismatch(f"expected shape {expected}, got {m.shape}")

    def cluster(self, c: int) -> np.ndarray:
        """Per-cluster block (rows c*h:(c+1)*h of the canonical matrix)."""
        h = self._block_rows(self.dims)
        return self.mat[c * h : (c + 1) * h, :]

    def user(self, k: int) -> np.ndarray:
        """Per-user view (columns k*d:(k+1)*d across all cluster blocks)."""
        d = self.dims.d
        return self.mat[:, k * d : (k + 1) * d]

    @property
    def shape(self):
        return self.mat.shape


class _XLayout(_Blocked):
    @staticmethod
    def _block_rows(dims: Dims) -> int:
        return dims.K * dims.N_r


class _VLayout(_Blocked):
    @staticmethod
    def _block_rows(dims: Dims) -> int:
        return dims.L


class PointX(_XLayout):
    """Reduced beamforming point; cluster blocks are K*N_r x K*d."""


class TangentX(_XLayout):
    """Tangent direction in reduced coordinates."""


class GradX(_XLayout):
    """Euclidean gradient in reduced coordinates (not generally tangent)."""


class PointV(_VLayout):
    """Beamformer in antenna coordinates; cluster blocks are L x K*d."""


class TangentV(_VLayout):
    """Tangent direction in antenna coordinates."""


class GradV(_VLayout):
    """Euclidean gradient in antenna coordinates."""


@dataclass(frozen=True)
class ReducedProblem:
    """Everything the reduced solver needs, immutable after construction.

    G[k] is the effective channel of user k; Gbar stacks them vertically
    (K*N_r x C*K*N_r) so Gbar @ X.mat applies all of them at once. Q[c] and the
    cached factors Qf[c] define the per-cluster quadratic constraints; Hc[c]
    keeps H^(c) so points can be lifted back to antenna coordinates.
    """

    G: tuple
    Gbar: np.ndarray
    Q: tuple
    Qf: tuple
    Hc: tuple
    P: np.ndarray
    sigma2: np.ndarray
    omega: np.ndarray
    dims: Dims


def build_reduced(ch: ChannelSet, cfg: SystemConfig) -> ReducedProblem:
    """Form Q^(c), G_k and cached Cholesky factors from a channel set."""
    dims = Dims.from_config(cfg)
    Q, Qf, Hc = [], [], []
    for c in range(cfg.C):
        H = ch.cluster(c)
        gram = herm(H @ H.conj().T)
        try:
            fac = cholesky(gram)
        except NotPositiveDefinite as exc:
            raise RankDeficient(f"Q^({c}) is not positive definite") from exc
        Q.append(gram)
        Qf.append(fac)
        Hc.append(H)
    G = []
    for k in range(cfg.K):
        G.append(np.hstack([ch.block(k, c) @ Hc[c].conj().T for c in range(cfg.C)]))
    return ReducedProblem(
        G=tuple(G),
        Gbar=np.vstack(G),
        Q=tuple(Q),
        Qf=tuple(Qf),
        Hc=tuple(Hc),
        P=np.asarray(cfg.P, dtype=float),
        sigma2=np.asarray(cfg.sigma2, dtype=float),
        omega=np.asarray(cfg.omega, dtype=float),
        dims=dims,
    )


def lift(X: PointX, ch: ChannelSet | ReducedProblem) -> PointV:
    """Map reduced coordinates to antenna coordinates, V^(c) = (H^(c))^H X^(c)."""
    dims = X.dims
    Hcs = ch.Hc if isinstance(ch, ReducedProblem) else [ch.cluster(c) for c in range(dims.C)]
    V = np.vstack([Hcs[c].conj().T @ X.cluster(c) for c in range(dims.C)])
    return PointV(mat=V, dims=dims)


def project_to_subspace(V: PointV, rp: ReducedProblem) -> PointX:
    """Least-squares inverse of the lift: X^(c) = (Q^(c))^-1 H^(c) V^(c).

    When V already lies in the column spaces Col((H^(c))^H), lift(project(V))
    recovers V exactly.
    """
    dims = V.dims
    X = np.vstack(
        [solve_hpd(rp.Qf[c], rp.Hc[c] @ V.cluster(c)) for c in range(dims.C)]
    )
    return PointX(mat=X, dims=dims)


def cluster_powers(V: PointV) -> np.ndarray:
    """||V^(c)||_F^2 for each cluster."""
    return np.array(
        [float(np.sum(np.abs(V.cluster(c)) ** 2)) for c in range(V.dims.C)]
    )


def reduced_powers(X: PointX, rp: ReducedProblem) -> np.ndarray:
    """tr((X^(c))^H Q^(c) X^(c)) for each cluster."""
    vals = []
    for c in range(X.dims.C):
        Xc = X.cluster(c)
        vals.append(float(np.real(np.vdot(Xc, rp.Q[c] @ Xc))))
    return np.array(vals)
