r"""Riemannian conjugate gradient with Hestenes-Stiefel directions.

One driver serves both problem forms: the reduced ellipsoid product (proposed
method) and the antenna-space sphere product (baseline). Per iteration:

  1. Riemannian gradient: project the Euclidean gradient onto the tangent space.
  2. Direction eta = -grad + beta * transported previous direction, with the
     Hestenes-Stiefel beta computed from transported quantities; if the result
     is not a descent direction, retry with beta = max(beta, 0), then beta = 0.
  3. Armijo backtracking from alpha0: accept the smallest m such that
     f(R(eta, sigma^m alpha0)) <= f + sigma^m alpha0 * p * <grad, eta>.
     The whole ladder is evaluated in one batched pass; the accepted step is
     identical to the sequential rule.

Stopping: |Delta WSR| < wsr_tol (bits, the default rule), optional gradient
norm threshold, iteration cap, optional wall-clock budget. The objective is
f = -WSR in nats; traces report WSR in bits.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .geometry import ProductManifold, metric, norm, project_tangent, transport
from .linalg import frob_inner
from .objective import LN2, egrad_X, wsr_X, wsr_stack
from .reduction import PointV, PointX, ReducedProblem, lift

STATIONARY_START_TOL = 1e-14
FEASIBILITY_GUARD = 1e-8


@dataclass
class SolverParams:
    """Line-search and stopping configuration."""

    sigma: float = 0.6
    p: float = 0.1
    alpha0: float = 1e10
    max_iters: int = 300
    max_backtracks: int = 120
    wsr_tol: float = 1e-3          # bits; stop when |WSR_l - WSR_{l-1}| < wsr_tol
    grad_tol: float | None = None  # optional gradient-norm stop
    warm_start: bool = False       # start each search at 4x the last accepted step

    def __post_init__(self):
        if not (0.0 < self.sigma < 1.0):
            raise ValueError(f"sigma must be in (0, 1), got {self.sigma}")
        if not (0.0 < self.p < 1.0):
            raise ValueError(f"p must be in (0, 1), got {self.p}")
        if self.alpha0 <= 0.0:
            raise ValueError(f"alpha0 must be positive, got {self.alpha0}")
        if self.max_iters < 1 or self.max_backtracks < 1:
            raise ValueError("max_iters and max_backtracks must be at least 1")
        if self.wsr_tol < 0.0:
            raise ValueError("wsr_tol must be nonnegative")
        if self.grad_tol is not None and self.grad_tol <= 0.0:
            raise ValueError("grad_tol must be positive when given")


@dataclass
class TraceRow:
    """One solver iteration; elapsed_ns is the wall time of that iteration."""

    trial: int
    iter: int
    wsr_bits: float
    grad_norm: float
    alpha: float
    backtracks: int
    elapsed_ns: int

    def to_dict(self) -> dict:
        return {
            "trial": self.trial,
            "iter": self.iter,
            "wsr_bits": self.wsr_bits,
            "grad_norm": self.grad_norm,
            "alpha": self.alpha,
            "backtracks": self.backtracks,
            "elapsed_ns": self.elapsed_ns,
        }


@dataclass
class LineSearchResult:
    alpha: float
    Y_next: object
    f_next: float
    backtracks: int
    failed: bool


@dataclass
class SolverState:
    """Mutable per-iteration state; prev_* hold transported caches."""

    Y: object
    grad: object
    eta: object
    prev_grad: object = None
    prev_eta: object = None
    prev_alpha: float | None = None
    it: int = 0
    trace: list = field(default_factory=list)


@dataclass
class RunReport:
    """Final point in both coordinate spaces plus the iteration trace."""

    method: str
    V: PointV
    X: PointX | None
    wsr_nats: float
    rates_nats: np.ndarray
    trace: list
    converged: bool
    stop_reason: str
    line_search_failed: bool = False

    @property
    def wsr_bits(self) -> float:
        return self.wsr_nats / LN2

    @property
    def iters(self) -> int:
        return self.trace[-1].iter if self.trace else 0


def write_trace(path, rows, provenance: dict | None = None) -> None:
    """Write trace rows as JSON lines, optionally preceded by a provenance line."""
    with open(path, "w") as fh:
        if provenance is not None:
            fh.write(json.dumps(provenance, sort_keys=True) + "\n")
        for row in rows:
            fh.write(json.dumps(row.to_dict()) + "\n")


def riemannian_grad(X: PointX, rp: ReducedProblem, M: ProductManifold | None = None):
    """Projected gradient of f = -WSR at a reduced-space point."""
    if M is None:
        M = ProductManifold.ellipsoid(rp)
    return project_tangent(X, egrad_X(X, rp), M)


def beta_hs(state: SolverState, grad_new, M: ProductManifold) -> float:
    """Hestenes-Stiefel coefficient from transported previous quantities.

    state.prev_grad and state.prev_eta must already live in the tangent space
    at the current point. Degenerate denominators fall back to 0 (restart).
    """
    if state.prev_grad is None or state.prev_eta is None:
        return 0.0
    y = grad_new.mat - state.prev_grad.mat
    denom = frob_inner(state.prev_eta.mat, y)
    if denom == 0.0 or not np.isfinite(denom):
        return 0.0
    beta = frob_inner(grad_new.mat, y) / denom
    return beta if np.isfinite(beta) else 0.0


def armijo_search(
    Y, eta, f_curr: float, grad, params: SolverParams, f_many, M: ProductManifold,
    alpha0: float | None = None,
) -> LineSearchResult:
    """Backtracking line search; evaluates the whole ladder in one batch.

    Accepts the smallest m with f(R(eta, sigma^m alpha0)) <= f_curr +
    sigma^m alpha0 * p * <grad, eta>. On exhaustion, returns the best candidate
    found with failed=True (callers treat that as a stop signal, not an error).
    """
    a0 = params.alpha0 if alpha0 is None else alpha0
    slope = metric(grad, eta)
    alphas = a0 * params.sigma ** np.arange(params.max_backtracks + 1)
    stack = geometry.retract_many(Y, eta, alphas, M)
    fs = f_many(stack)
    with np.errstate(invalid="ignore"):
        ok = fs <= f_curr + params.p * alphas * slope
    if np.any(ok):
        m = int(np.argmax(ok))
        return LineSearchResult(
            alpha=float(alphas[m]),
            Y_next=type(Y)(mat=stack[m], dims=M.dims),
            f_next=float(fs[m]),
            backtracks=m,
            failed=False,
        )
    finite = np.isfinite(fs)
    if not np.any(finite):
        return LineSearchResult(alpha=0.0, Y_next=Y, f_next=f_curr,
                                backtracks=params.max_backtracks, failed=True)
    m = int(np.argmin(np.where(finite, fs, np.inf)))
    best_f = float(fs[m])
    if best_f >= f_curr:
        # nothing improved at all; keep the current point
        return LineSearchResult(alpha=0.0, Y_next=Y, f_next=f_curr,
                                backtracks=params.max_backtracks, failed=True)
    return LineSearchResult(
        alpha=float(alphas[m]),
        Y_next=type(Y)(mat=stack[m], dims=M.dims),
        f_next=best_f,
        backtracks=params.max_backtracks,
        failed=True,
    )


def minimize(
    f_many, egrad, M: ProductManifold, params: SolverParams, x0,
    trial: int = 0, callback=None, time_budget_ns: int | None = None,
):
    """Generic conjugate-gradient driver.

    f_many maps a stack of point matrices (m, rows, cols) to objective values
    (m,); egrad maps a point object to its Euclidean gradient object. Returns
    (final point, final f, trace rows, converged, stop_reason, ls_failed).
    """
    t_start = time.perf_counter_ns()
    Y = x0
    f_curr = float(f_many(Y.mat[None, :, :])[0])
    g = project_tangent(Y, egrad(Y), M)
    gnorm = norm(g)
    state = SolverState(Y=Y, grad=g, eta=None)
    state.trace.append(TraceRow(trial, 0, -f_curr / LN2, gnorm, 0.0, 0,
                                time.perf_counter_ns() - t_start))
    if gnorm < STATIONARY_START_TOL:
        return Y, f_curr, state.trace, True, "stationary_start", False

    eta = M.tangent_cls(mat=-g.mat, dims=M.dims)
    ls_failed = False
    converged = False
    stop_reason = "max_iters"
    for it in range(1, params.max_iters + 1):
        t0 = time.perf_counter_ns()
        slope = metric(g, eta)
        if slope > 0.0:  # safeguard guarantees this does not happen; belt and braces
            eta = M.tangent_cls(mat=-g.mat, dims=M.dims)
            slope = -gnorm * gnorm
        a0 = params.alpha0
        if params.warm_start and state.prev_alpha:
            a0 = 4.0 * state.prev_alpha
        ls = armijo_search(Y, eta, f_curr, g, params, f_many, M, alpha0=a0)
        Y_new = ls.Y_next
        feas = geometry.feasibility_residual(Y_new, M)
        if feas > FEASIBILITY_GUARD:
            raise ArithmeticError(f"iterate left the manifold: residual {feas:.3e}")
        g_new = project_tangent(Y_new, egrad(Y_new), M)
        gnorm_new = norm(g_new)
        delta_bits = abs(ls.f_next - f_curr) / LN2
        state.it = it
        state.trace.append(TraceRow(trial, it, -ls.f_next / LN2, gnorm_new,
                                    ls.alpha, ls.backtracks,
                                    time.perf_counter_ns() - t0))
        if callback is not None:
            state.Y = Y_new
            state.grad = g_new
            state.eta = eta
            callback(state)
        if ls.failed:
            Y, f_curr = Y_new, ls.f_next
            ls_failed = True
            stop_reason = "line_search"
            break
        if delta_bits < params.wsr_tol:
            Y, f_curr = Y_new, ls.f_next
            converged = True
            stop_reason = "wsr_tol"
            break
        if params.grad_tol is not None and gnorm_new < params.grad_tol:
            Y, f_curr = Y_new, ls.f_next
            converged = True
            stop_reason = "grad_tol"
            break
        if time_budget_ns is not None and time.perf_counter_ns() - t_start > time_budget_ns:
            Y, f_curr = Y_new, ls.f_next
            stop_reason = "time_budget"
            break
        if it == params.max_iters:
            Y, f_curr = Y_new, ls.f_next
            stop_reason = "max_iters"
            break
        # conjugate direction for the next iteration
        state.prev_grad = transport(g, Y_new, M)
        state.prev_eta = transport(eta, Y_new, M)
        state.prev_alpha = ls.alpha
        beta = beta_hs(state, g_new, M)
        eta_new = M.tangent_cls(mat=-g_new.mat + beta * state.prev_eta.mat, dims=M.dims)
        if metric(g_new, eta_new) > 0.0:
            beta = max(beta, 0.0)
            eta_new = M.tangent_cls(mat=-g_new.mat + beta * state.prev_eta.mat, dims=M.dims)
            if metric(g_new, eta_new) > 0.0:
                eta_new = M.tangent_cls(mat=-g_new.mat, dims=M.dims)
        Y, f_curr, g, gnorm, eta = Y_new, ls.f_next, g_new, gnorm_new, eta_new
    return Y, f_curr, state.trace, converged, stop_reason, ls_failed


def solve(
    rp: ReducedProblem,
    M: ProductManifold | None = None,
    params: SolverParams | None = None,
    init=None,
    trial: int = 0,
    callback=None,
    time_budget_ns: int | None = None,
) -> RunReport:
    """Run the reduced-space solver; init is a PointX or a seed."""
    if M is None:
        M = ProductManifold.ellipsoid(rp)
    if params is None:
        params = SolverParams()
    if isinstance(init, PointX):
        x0 = init
    else:
        x0 = geometry.random_point(M, 0 if init is None else init)

    def f_many(stack):
        return -wsr_stack(np.matmul(rp.Gbar, stack), rp.sigma2, rp.omega, rp.dims.d)

    X, f_final, trace, converged, reason, ls_failed = minimize(
        f_many, lambda Yp: egrad_X(Yp, rp), M, params, x0,
        trial=trial, callback=callback, time_budget_ns=time_budget_ns,
    )
    report = wsr_X(X, rp, diagnostics=False)
    return RunReport(
        method="proposed",
        V=lift(X, rp),
        X=X,
        wsr_nats=report.wsr_nats,
        rates_nats=report.rates_nats,
        trace=trace,
        converged=converged,
        stop_reason=reason,
        line_search_failed=ls_failed,
    )
