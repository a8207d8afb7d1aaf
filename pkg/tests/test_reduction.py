import numpy as np
import pytest

from clusterbeam import (
    DimensionMismatch,
    Dims,
    PointV,
    PointX,
    build_reduced,
    cluster_powers,
    crandn,
    draw_unit_channels,
    herm,
    lift,
    project_to_subspace,
    reduced_powers,
    SystemConfig,
)


def random_X(rp, seed=0):
    rng = np.random.default_rng(seed)
    d = rp.dims
    return PointX(mat=crandn(rng, d.C * d.x_block_rows, d.cols), dims=d)


def random_V(dims, seed=0):
    rng = np.random.default_rng(seed)
    return PointV(mat=crandn(rng, dims.C * dims.L, dims.cols), dims=dims)


def test_dims_from_config(cfg_small):
    d = Dims.from_config(cfg_small)
    assert d.N_t == cfg_small.C * cfg_small.L
    assert d.x_block_rows == cfg_small.K * cfg_small.N_r
    assert d.cols == cfg_small.K * cfg_small.d


def test_reduced_shapes(rp_small, cfg_small):
    C, K, N_r, L, d = (cfg_small.C, cfg_small.K, cfg_small.N_r,
                       cfg_small.L, cfg_small.d)
    assert len(rp_small.Q) == C
    for Q in rp_small.Q:
        assert Q.shape == (K * N_r, K * N_r)
    assert rp_small.Gbar.shape == (K * N_r, C * K * N_r)
    for G in rp_small.G:
        assert G.shape == (N_r, C * K * N_r)


def test_q_hermitian_positive(rp_small):
    for Q in rp_small.Q:
        assert np.linalg.norm(Q - herm(Q)) <= 1e-12 * np.linalg.norm(Q)
        assert np.min(np.linalg.eigvalsh(Q)) > 0.0


def test_gbar_stacks_user_rows(rp_small, ch_small, cfg_small):
    N_r = cfg_small.N_r
    for k in range(cfg_small.K):
        assert np.array_equal(rp_small.Gbar[k * N_r:(k + 1) * N_r], rp_small.G[k])
    # each cluster block of G_k is H_k^(c) (H^(c))^H
    h = cfg_small.K * cfg_small.N_r
    for k in range(cfg_small.K):
        for c in range(cfg_small.C):
            expect = ch_small.block(k, c) @ ch_small.cluster(c).conj().T
            got = rp_small.G[k][:, c * h:(c + 1) * h]
            assert np.allclose(got, expect, rtol=1e-13)


def test_lift_matches_blocks(rp_small, ch_small):
    X = random_X(rp_small, seed=3)
    V = lift(X, rp_small)
    for c in range(rp_small.dims.C):
        expect = ch_small.cluster(c).conj().T @ X.cluster(c)
        assert np.allclose(V.cluster(c), expect, rtol=1e-13)


def test_roundtrip_x_to_v_to_x(rp_small):
    X = random_X(rp_small, seed=1)
    X2 = project_to_subspace(lift(X, rp_small), rp_small)
    scale = np.linalg.norm(X.mat)
    assert np.linalg.norm(X2.mat - X.mat) <= 1e-8 * scale


def test_power_identity(rp_small):
    X = random_X(rp_small, seed=2)
    V = lift(X, rp_small)
    pv = cluster_powers(V)
    px = reduced_powers(X, rp_small)
    assert np.allclose(pv, px, rtol=1e-9)


def test_projection_ignores_null_component(rp_small, ch_small, cfg_small):
    rng = np.random.default_rng(7)
    V = random_V(rp_small.dims, seed=5)
    X_ref = project_to_subspace(V, rp_small)
    # add a per-cluster component orthogonal to the channel rows
    mat = V.mat.copy()
    L = cfg_small.L
    for c in range(cfg_small.C):
        Hc = ch_small.cluster(c)
        # null space of Hc: columns of U beyond the row rank
        _, _, vh = np.linalg.svd(Hc)
        null = vh[cfg_small.K * cfg_small.N_r:].conj().T
        mat[c * L:(c + 1) * L] += null @ crandn(rng, null.shape[1], V.mat.shape[1])
    X_shifted = project_to_subspace(PointV(mat=mat, dims=rp_small.dims), rp_small)
    assert np.linalg.norm(X_shifted.mat - X_ref.mat) <= 1e-8 * np.linalg.norm(X_ref.mat)


def test_lifted_projection_is_identity_on_subspace(rp_small):
    # V already in the span of the channel rows reproduces itself
    V = lift(random_X(rp_small, seed=9), rp_small)
    V2 = lift(project_to_subspace(V, rp_small), rp_small)
    assert np.linalg.norm(V2.mat - V.mat) <= 1e-8 * np.linalg.norm(V.mat)


def test_view_lockstep(rp_small):
    X = random_X(rp_small, seed=4)
    h = rp_small.dims.x_block_rows
    d = rp_small.dims.d
    X.mat[h:2 * h, :] *= 2.0          # mutate cluster 1 through the flat matrix
    assert np.array_equal(X.cluster(1), X.mat[h:2 * h])
    assert np.array_equal(X.user(1), X.mat[:, d:2 * d])


def test_blocked_shape_validation(rp_small):
    with pytest.raises(DimensionMismatch):
        PointX(mat=np.zeros((5, rp_small.dims.cols), complex), dims=rp_small.dims)
    with pytest.raises(DimensionMismatch):
        PointV(mat=np.zeros((rp_small.dims.C * rp_small.dims.L, 3), complex),
               dims=rp_small.dims)


def test_reduced_problem_carries_parameters(rp_small, cfg_small):
    assert np.array_equal(rp_small.P, np.asarray(cfg_small.P))
    assert np.array_equal(rp_small.sigma2, np.asarray(cfg_small.sigma2))
    assert np.array_equal(rp_small.omega, np.asarray(cfg_small.omega))


def test_build_reduced_larger_system():
    cfg = SystemConfig.homogeneous(C=4, L=16, K=4, N_r=2, d=2, seed=1)
    ch = draw_unit_channels(cfg)
    rp = build_reduced(ch, cfg)
    X = random_X(rp, seed=0)
    V = lift(X, rp)
    assert np.allclose(cluster_powers(V), reduced_powers(X, rp), rtol=1e-9)
