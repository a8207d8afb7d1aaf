import json

import numpy as np
import pytest

from clusterbeam import (
    ProductManifold,
    SolverParams,
    SystemConfig,
    build_reduced,
    cluster_powers,
    draw_unit_channels,
    feasibility_residual,
    lift,
    project_tangent,
    random_point,
    solve,
    sphere_rcg,
    wsr_V,
    write_trace,
)
from clusterbeam.objective import LN2, egrad_V
from clusterbeam.reduction import PointV

TRACE_KEYS = ["trial", "iter", "wsr_bits", "grad_norm", "alpha", "backtracks", "elapsed_ns"]


def test_params_validation():
    with pytest.raises(ValueError):
        SolverParams(sigma=1.5)
    with pytest.raises(ValueError):
        SolverParams(p=0.0)
    with pytest.raises(ValueError):
        SolverParams(alpha0=-1.0)
    with pytest.raises(ValueError):
        SolverParams(max_iters=0)


def test_monotone_descent_and_convergence(rp_small):
    rep = solve(rp_small, params=SolverParams(max_iters=200), init=0)
    wsr = [r.wsr_bits for r in rep.trace]
    assert all(b >= a - 1e-12 for a, b in zip(wsr, wsr[1:]))
    assert rep.converged
    assert rep.stop_reason == "wsr_tol"
    assert rep.wsr_bits == pytest.approx(wsr[-1])


def test_iterates_stay_feasible(rp_small):
    M = ProductManifold.ellipsoid(rp_small)
    residuals = []
    solve(rp_small, params=SolverParams(max_iters=50), init=1,
          callback=lambda st: residuals.append(feasibility_residual(st.Y, M)))
    assert max(residuals) <= 1e-8


def test_final_point_power_tight(rp_small):
    rep = solve(rp_small, params=SolverParams(max_iters=200), init=2)
    powers = cluster_powers(rep.V)
    assert np.allclose(powers, rp_small.P, rtol=1e-8)
    # X and V agree through the lift
    assert np.allclose(lift(rep.X, rp_small).mat, rep.V.mat, rtol=1e-12)


def test_first_iteration_backtrack_count(rp_small):
    # cold start from alpha0 = 1e10 at unit scale walks the ladder dozens of times
    rep = solve(rp_small, params=SolverParams(max_iters=5), init=3)
    first = rep.trace[1]
    assert 40 <= first.backtracks <= 70


def test_trace_schema(rp_small):
    rep = solve(rp_small, params=SolverParams(max_iters=10, wsr_tol=0.0), init=4)
    assert [r.iter for r in rep.trace] == list(range(len(rep.trace)))
    for row in rep.trace:
        d = row.to_dict()
        assert list(d.keys()) == TRACE_KEYS
    assert rep.trace[0].alpha == 0.0
    assert rep.trace[0].backtracks == 0


def test_write_trace_roundtrip(tmp_path, rp_small):
    rep = solve(rp_small, params=SolverParams(max_iters=5, wsr_tol=0.0), init=5)
    path = tmp_path / "t.jsonl"
    write_trace(path, rep.trace, provenance={"seed": 5})
    lines = path.read_text().strip().split("\n")
    assert json.loads(lines[0]) == {"seed": 5}
    for line, row in zip(lines[1:], rep.trace):
        assert json.loads(line) == row.to_dict()


def test_determinism_modulo_timing(rp_small):
    params = SolverParams(max_iters=25, wsr_tol=0.0)
    a = solve(rp_small, params=params, init=6)
    b = solve(rp_small, params=params, init=6)
    strip = lambda rows: [{k: v for k, v in r.to_dict().items() if k != "elapsed_ns"}
                          for r in rows]
    assert strip(a.trace) == strip(b.trace)
    assert np.array_equal(a.X.mat, b.X.mat)


def test_stop_on_max_iters(rp_small):
    rep = solve(rp_small, params=SolverParams(max_iters=7, wsr_tol=0.0), init=7)
    assert rep.iters == 7
    assert rep.stop_reason == "max_iters"
    assert not rep.converged


def test_stop_on_grad_tol(rp_small):
    rep = solve(rp_small, params=SolverParams(max_iters=3000, wsr_tol=0.0,
                                              grad_tol=1e-3), init=8)
    assert rep.stop_reason == "grad_tol"
    assert rep.trace[-1].grad_norm <= 1e-3


def test_stop_on_time_budget(rp_small):
    rep = solve(rp_small, params=SolverParams(max_iters=100000, wsr_tol=0.0),
                init=9, time_budget_ns=2_000_000)
    assert rep.stop_reason in ("time_budget", "line_search")
    assert not rep.converged
    assert rep.iters < 100000


def test_warm_start_ladder(rp_small):
    rep = solve(rp_small, params=SolverParams(max_iters=100, warm_start=True), init=10)
    assert rep.converged
    # after the first acceptance the ladder follows 4x the previous step, so
    # later iterations need far fewer backtracks than the cold first one
    later = [r.backtracks for r in rep.trace[2:]]
    assert np.median(later) < 20


def _aligned_instance():
    cfg = SystemConfig.homogeneous(C=1, L=8, K=1, N_r=1, d=1,
                                   P=4.0, sigma2=1.0, omega=1.0, seed=0)
    ch = draw_unit_channels(cfg)
    return cfg, ch


def test_matched_filter_oracle():
    # single user, single stream: the optimum aligns with the channel vector
    cfg, ch = _aligned_instance()
    M = ProductManifold.sphere(cfg)
    rep = sphere_rcg(ch, cfg, params=SolverParams(max_iters=500, wsr_tol=0.0,
                                                  grad_tol=1e-8),
                     init=random_point(M, 1))
    h = ch.Hbar.ravel()
    v = rep.V.mat.ravel()
    # the effective scalar is h @ v (no conjugation), so the optimum follows conj(h)
    align = abs(h @ v) / (np.linalg.norm(h) * np.linalg.norm(v))
    assert align >= 1.0 - 1e-6
    cap = np.log(1.0 + cfg.P[0] * np.linalg.norm(h) ** 2) / LN2
    assert rep.wsr_bits == pytest.approx(cap, rel=1e-9)
    g = egrad_V(rep.V, ch, cfg)
    rg = project_tangent(rep.V, g, M)
    assert np.linalg.norm(rg.mat) <= 1e-6


def test_stationary_start_returns_immediately():
    cfg, ch = _aligned_instance()
    M = ProductManifold.sphere(cfg)
    h = ch.Hbar.ravel()
    v = np.sqrt(cfg.P[0]) * h.conj() / np.linalg.norm(h)
    init = PointV(mat=v[:, None], dims=M.dims)
    rep = sphere_rcg(ch, cfg, params=SolverParams(max_iters=50), init=init)
    assert rep.stop_reason == "stationary_start"
    assert rep.converged
    assert len(rep.trace) == 1
    assert rep.trace[0].grad_norm < 1e-14


def test_zero_weight_user_matches_single_user(ch_small, cfg_small):
    weighted = SystemConfig(C=2, L=8, K=2, N_r=2, d=2, P=(10.0, 10.0),
                            sigma2=(1.0, 1.0), omega=(1.0, 0.0))
    rp2 = build_reduced(ch_small, weighted)
    best2 = max(solve(rp2, params=SolverParams(max_iters=2000, wsr_tol=1e-7),
                      init=s).wsr_bits for s in range(3))

    solo = SystemConfig.homogeneous(C=2, L=8, K=1, N_r=2, d=2,
                                    P=10.0, sigma2=1.0, omega=1.0)
    blocks = ch_small.blocks[:1]
    from clusterbeam import ChannelSet
    rp1 = build_reduced(ChannelSet(blocks=blocks), solo)
    best1 = max(solve(rp1, params=SolverParams(max_iters=2000, wsr_tol=1e-7),
                      init=s).wsr_bits for s in range(3))
    # the indifferent user parks its power where the weighted user cannot see it
    assert best2 == pytest.approx(best1, rel=1e-3)


def test_line_search_failure_sets_flag(rp_small):
    # with no tolerance stop, descent eventually stalls at machine precision and
    # the ladder cannot find an acceptable step; that is reported, not raised
    rep = solve(rp_small, params=SolverParams(max_iters=5000, wsr_tol=0.0), init=11)
    assert rep.stop_reason == "line_search"
    assert rep.line_search_failed
    assert not rep.converged


def test_solve_accepts_point_init(rp_small):
    M = ProductManifold.ellipsoid(rp_small)
    X0 = random_point(M, 12)
    rep = solve(rp_small, params=SolverParams(max_iters=30), init=X0)
    assert rep.trace[0].wsr_bits == pytest.approx(
        wsr_V(lift(X0, rp_small), None, None, diagnostics=False).wsr_nats / LN2
        if False else rep.trace[0].wsr_bits)
    # explicit form: trace starts from the supplied point
    from clusterbeam import wsr_X
    assert rep.trace[0].wsr_bits == pytest.approx(
        wsr_X(X0, rp_small, diagnostics=False).wsr_nats / LN2, rel=1e-12)
