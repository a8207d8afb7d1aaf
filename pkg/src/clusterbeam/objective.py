r"""Weighted sum-rate objective and Euclidean gradients in both coordinate spaces.

For user k with noise power sigma2_k, interference-plus-signal covariance
S_k = sigma2_k I + sum_j (E_k Y_j)(E_k Y_j)^H and interference-only covariance
F_k (the j != k part of the same sum), the rate is

    R_k = logdet(S_k) - logdet(F_k)            [nats]

where E_k is the per-user effective channel (H_k in antenna coordinates, G_k in
reduced coordinates) and Y the point. The solver minimizes f = -sum_k omega_k R_k.

Gradient convention (Wirtinger): gradients are scaled so that the directional
derivative of f along a perturbation Delta equals 2 * Re<grad, Delta> with
<A, B> = Re tr(A^H B). Under that convention

    grad_{Y_k} f = -omega_k E_k^H S_k^{-1} E_k Y_k
                   - sum_{i != k} omega_i E_i^H (S_i^{-1} - F_i^{-1}) E_i Y_k.

F_k and S_k are assembled independently (never by downdating) and factored via
Cholesky. Rates are nats internally; bits appear only at reporting boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, SystemConfig
from .errors import NotPositiveDefinite
from .linalg import cholesky, solve_hpd
from .reduction import GradV, GradX, PointV, PointX, ReducedProblem

LN2 = float(np.log(2.0))


def _eye(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.complex128)


def _logdet_stack(a: np.ndarray) -> np.ndarray:
    """logdet of a stack (..., n, n) of Hermitian PD matrices via Cholesky."""
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            "covariance not positive definite; check noise powers and inputs"
        ) from exc
    diag = np.real(np.diagonal(low, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log(diag), axis=-1)


def _ht(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def rates_stack(T: np.ndarray, sigma2, omega, d: int) -> np.ndarray:
    """Per-user rates (nats) for effective received matrices.

    T has shape (..., K*N_r, K*d): rows grouped per user (the k-th group is
    E_k applied to the whole point), columns grouped per user. Returns rates of
    shape (..., K). Broadcasts over leading axes, so a whole line-search ladder
    evaluates in one call.
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    K = sigma2.shape[0]
    N_r = T.shape[-2] // K
    eye = _eye(N_r)
    out = np.empty(T.shape[:-2] + (K,))
    for k in range(K):
        Tk = T[..., k * N_r : (k + 1) * N_r, :]
        S = sigma2[k] * eye + Tk @ _ht(Tk)
        Tno = np.delete(Tk, np.s_[k * d : (k + 1) * d], axis=-1)
        F = sigma2[k] * eye + Tno @ _ht(Tno)
        out[..., k] = _logdet_stack(S) - _logdet_stack(F)
    return out


def wsr_stack(T: np.ndarray, sigma2, omega, d: int) -> np.ndarray:
    """Weighted sum rate (nats), broadcasting like rates_stack."""
    r = rates_stack(T, sigma2, omega, d)
    return r @ np.asarray(omega, dtype=float)


@dataclass(frozen=True)
class RateReport:
    """Per-user rates with the weighted sum and covariance conditioning."""

    rates_nats: np.ndarray
    wsr_nats: float
    cond_S: np.ndarray | None = None
    cond_F: np.ndarray | None = None

    @property
    def rates_bits(self) -> np.ndarray:
        return self.rates_nats / LN2

    @property
    def wsr_bits(self) -> float:
        return self.wsr_nats / LN2


def _report(T: np.ndarray, sigma2, omega, d: int, diagnostics: bool) -> RateReport:
    rates = rates_stack(T, sigma2, omega, d)
    wsr = float(rates @ np.asarray(omega, dtype=float))
    cond_S = cond_F = None
    if diagnostics:
        sigma2 = np.asarray(sigma2, dtype=float)
        K = sigma2.shape[0]
        N_r = T.shape[-2] // K
        eye = _eye(N_r)
        cond_S = np.empty(K)
        cond_F = np.empty(K)
        for k in range(K):
            Tk = T[k * N_r : (k + 1) * N_r, :]
            Tno = np.delete(Tk, np.s_[k * d : (k + 1) * d], axis=-1)
            cond_S[k] = np.linalg.cond(sigma2[k] * eye + Tk @ _ht(Tk))
            cond_F[k] = np.linalg.cond(sigma2[k] * eye + Tno @ _ht(Tno))
    return RateReport(rates_nats=rates, wsr_nats=wsr, cond_S=cond_S, cond_F=cond_F)


def wsr_V(V: PointV, ch: ChannelSet, cfg: SystemConfig, diagnostics: bool = True) -> RateReport:
    """Weighted sum rate of an antenna-space beamformer."""
    T = ch.Hbar @ V.mat
    return _report(T, cfg.sigma2, cfg.omega, cfg.d, diagnostics)


def wsr_X(X: PointX, rp: ReducedProblem, diagnostics: bool = True) -> RateReport:
    """Weighted sum rate in reduced coordinates."""
    T = rp.Gbar @ X.mat
    return _report(T, rp.sigma2, rp.omega, rp.dims.d, diagnostics)


def _egrad_mat(T: np.ndarray, eff: tuple, sigma2, omega, d: int) -> np.ndarray:
    """Euclidean gradient of f = -WSR with respect to the full point matrix.

    eff[i] is E_i (N_r x rows); T = [E_i applied to the point, stacked].
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    omega = np.asarray(omega, dtype=float)
    K = sigma2.shape[0]
    N_r = T.shape[0] // K
    eye = _eye(N_r)
    acc = np.zeros((eff[0].shape[1], T.shape[1]), dtype=np.complex128)
    for i in range(K):
        Ti = T[i * N_r : (i + 1) * N_r, :]
        Sf = cholesky(sigma2[i] * eye + Ti @ _ht(Ti))
        Tno = np.delete(Ti, np.s_[i * d : (i + 1) * d], axis=-1)
        Ff = cholesky(sigma2[i] * eye + Tno @ _ht(Tno))
        Rs = solve_hpd(Sf, Ti)
        Rf = solve_hpd(Ff, Ti)
        W = omega[i] * (Rs - Rf)
        W[:, i * d : (i + 1) * d] = omega[i] * Rs[:, i * d : (i + 1) * d]
        acc += eff[i].conj().T @ W
    return -acc


def egrad_X(X: PointX, rp: ReducedProblem) -> GradX:
    """Gradient of f = -WSR in reduced coordinates."""
    T = rp.Gbar @ X.mat
    return GradX(mat=_egrad_mat(T, rp.G, rp.sigma2, rp.omega, rp.dims.d), dims=X.dims)


def egrad_V(V: PointV, ch: ChannelSet, cfg: SystemConfig) -> GradV:
    """Gradient of f = -WSR in antenna coordinates."""
    eff = tuple(ch.user(k) for k in range(cfg.K))
    T = ch.Hbar @ V.mat
    return GradV(mat=_egrad_mat(T, eff, cfg.sigma2, cfg.omega, cfg.d), dims=V.dims)
