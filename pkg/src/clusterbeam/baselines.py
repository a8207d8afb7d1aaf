r"""Comparison precoders: eigen zero-forcing, antenna-space sphere RCG, and a
sum-power WMMSE cross-check for the single-cluster case.

EZF: each user's channel is compressed to its top-d right singular directions
(dominant eigenmodes); zero-forcing across the stacked effective channels via
the Gram pseudo-inverse; one global scale puts the most loaded cluster exactly
on budget and every other cluster below it.

Sphere RCG: the shared conjugate-gradient driver run directly over antenna
coordinates on the product of spheres ||V^(c)||_F^2 = P_c.

WMMSE (C = 1 only): block coordinate descent over receive filters U_k, MSE
weights W_k, and the precoder, with a bisection on the sum-power multiplier mu.
Kept as an independent oracle; it shares no code with the manifold solvers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import geometry
from .channel import ChannelSet, SystemConfig
from .errors import BisectionFailed, NotPositiveDefinite, RankDeficient
from .geometry import ProductManifold
from .linalg import cholesky, herm, solve_hpd
from .objective import LN2, egrad_V, wsr_V, wsr_stack
from .reduction import Dims, PointV, cluster_powers
from .solver import RunReport, SolverParams, TraceRow, minimize

BISECT_MAX_DOUBLINGS = 200
BISECT_ITERS = 200


@dataclass(frozen=True)
class PrecoderOutput:
    """A feasible beamformer with its per-cluster power usage."""

    V: PointV
    method: str
    cluster_power: np.ndarray


def ezf(ch: ChannelSet, cfg: SystemConfig) -> PrecoderOutput:
    """Eigen zero-forcing precoder under per-cluster budgets."""
    d = cfg.d
    eff = []
    for k in range(cfg.K):
        _, s, Vh = np.linalg.svd(ch.user(k), full_matrices=False)
        eff.append(s[:d, None] * Vh[:d, :])  # d x N_t effective channel
    Heff = np.vstack(eff)  # (K*d) x N_t
    gram = herm(Heff @ Heff.conj().T)
    try:
        fac = cholesky(gram)
    except NotPositiveDefinite as exc:
        raise RankDeficient("stacked effective channel lost row rank") from exc
    W = solve_hpd(fac, Heff).conj().T  # N_t x K*d, satisfies Heff @ W = I
    dims = Dims.from_config(cfg)
    raw = PointV(mat=W, dims=dims)
    p = cluster_powers(raw)
    scale = np.sqrt(np.min(np.asarray(cfg.P) / p))  # binding cluster exactly on budget
    V = PointV(mat=scale * W, dims=dims)
    return PrecoderOutput(V=V, method="ezf", cluster_power=scale**2 * p)


def sphere_rcg(
    ch: ChannelSet,
    cfg: SystemConfig,
    params: SolverParams | None = None,
    seed: int = 0,
    trial: int = 0,
    init: PointV | None = None,
    callback=None,
    time_budget_ns: int | None = None,
) -> RunReport:
    """Antenna-space RCG baseline on the product of spheres."""
    if params is None:
        params = SolverParams()
    M = ProductManifold.sphere(cfg)
    x0 = init if init is not None else geometry.random_point(M, seed)
    Hbar = ch.Hbar

    def f_many(stack):
        return -wsr_stack(np.matmul(Hbar, stack), cfg.sigma2, cfg.omega, cfg.d)

    V, _, trace, converged, reason, ls_failed = minimize(
        f_many, lambda Vp: egrad_V(Vp, ch, cfg), M, params, x0,
        trial=trial, callback=callback, time_budget_ns=time_budget_ns,
    )
    report = wsr_V(V, ch, cfg, diagnostics=False)
    return RunReport(
        method="sphere_rcg",
        V=V,
        X=None,
        wsr_nats=report.wsr_nats,
        rates_nats=report.rates_nats,
        trace=trace,
        converged=converged,
        stop_reason=reason,
        line_search_failed=ls_failed,
    )


def _power_given_mu(lam: np.ndarray, Bt: np.ndarray, mu: float) -> float:
    """Transmit power of the precoder E (diag(lam)+mu I)^-1 E^H B."""
    denom = (lam + mu) ** 2
    num = np.sum(np.abs(Bt) ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = num / denom
    return float(np.sum(np.where(num > 0.0, terms, 0.0)))


def _bisect_decreasing(fun, target: float, lo: float = 0.0, hi0: float = 1.0,
                       max_doublings: int = BISECT_MAX_DOUBLINGS) -> float:
    """Find x with fun(x) = target for a decreasing fun on [lo, inf)."""
    hi = hi0
    for _ in range(max_doublings):
        if fun(hi) <= target:
            break
        hi *= 2.0
    else:
        raise BisectionFailed(
            f"no bracket after {max_doublings} doublings (fun({hi:.3e}) still above target)"
        )
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if fun(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return hi


def wmmse_sum_power(
    ch: ChannelSet,
    cfg: SystemConfig,
    params: SolverParams | None = None,
    init: PointV | None = None,
    trial: int = 0,
) -> RunReport:
    """Sum-power WMMSE block coordinate descent; requires C = 1.

    Deterministic: starts from the EZF precoder unless an init is given. The
    WSR is monotone non-decreasing per outer iteration up to roundoff.
    """
    if cfg.C != 1:
        raise ValueError(f"wmmse_sum_power requires C=1, got C={cfg.C}")
    if params is None:
        params = SolverParams()
    P = float(cfg.P[0])
    d = cfg.d
    dims = Dims.from_config(cfg)
    Hs = [ch.user(k) for k in range(cfg.K)]
    omega = np.asarray(cfg.omega, dtype=float)
    sigma2 = np.asarray(cfg.sigma2, dtype=float)

    V = (init if init is not None else ezf(ch, cfg).V).mat.copy()
    eye_d = np.eye(d, dtype=np.complex128)
    eye_r = np.eye(cfg.N_r, dtype=np.complex128)

    trace = []
    wsr_prev = wsr_V(PointV(mat=V, dims=dims), ch, cfg, diagnostics=False).wsr_nats
    trace.append(TraceRow(trial, 0, wsr_prev / LN2, float("nan"), 0.0, 0, 0))
    converged = False
    reason = "max_iters"
    for it in range(1, params.max_iters + 1):
        t0 = time.perf_counter_ns()
        # receive filters and MSE weights
        Us, Ws = [], []
        for k in range(cfg.K):
            HkV = Hs[k] @ V  # N_r x K*d
            S = sigma2[k] * eye_r + HkV @ HkV.conj().T
            HkVk = HkV[:, k * d : (k + 1) * d]
            U = solve_hpd(cholesky(herm(S)), HkVk)  # MMSE receiver
            E = herm(eye_d - U.conj().T @ HkVk)     # MMSE matrix
            Ws.append(herm(np.linalg.inv(E)))
            Us.append(U)
        # precoder update with sum-power projection
        A = np.zeros((cfg.N_t, cfg.N_t), dtype=np.complex128)
        B = np.empty((cfg.N_t, cfg.K * d), dtype=np.complex128)
        for k in range(cfg.K):
            HU = Hs[k].conj().T @ Us[k]  # N_t x d
            A += omega[k] * HU @ Ws[k] @ HU.conj().T
            B[:, k * d : (k + 1) * d] = omega[k] * HU @ Ws[k]
        lam, E = np.linalg.eigh(herm(A))
        lam = np.maximum(lam, 0.0)
        Bt = E.conj().T @ B
        if _power_given_mu(lam, Bt, 0.0) <= P:
            mu = 0.0
        else:
            mu = _bisect_decreasing(lambda m: _power_given_mu(lam, Bt, m), P)
        denv = lam + mu
        safe = np.where(denv > 0.0, denv, 1.0)[:, None]
        V = E @ np.where(denv[:, None] > 0.0, Bt / safe, 0.0)
        wsr = wsr_V(PointV(mat=V, dims=dims), ch, cfg, diagnostics=False).wsr_nats
        trace.append(TraceRow(trial, it, wsr / LN2, float("nan"), 0.0, 0,
                              time.perf_counter_ns() - t0))
        if abs(wsr - wsr_prev) / LN2 < params.wsr_tol:
            converged = True
            reason = "wsr_tol"
            wsr_prev = wsr
            break
        wsr_prev = wsr
    Vp = PointV(mat=V, dims=dims)
    report = wsr_V(Vp, ch, cfg, diagnostics=False)
    return RunReport(
        method="wmmse_sum_power",
        V=Vp,
        X=None,
        wsr_nats=report.wsr_nats,
        rates_nats=report.rates_nats,
        trace=trace,
        converged=converged,
        stop_reason=reason,
    )
