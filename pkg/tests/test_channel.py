import numpy as np
import pytest

from clusterbeam import (
    ChannelSet,
    NonPositiveDistance,
    RankDeficient,
    SystemConfig,
    draw_channels,
    draw_unit_channels,
    in_hexagon,
    large_scale_gains,
    load_channels,
    load_point,
    make_topology,
    pathloss_db,
    save_channels,
    save_point,
)

# Frozen oracle: 128.1 + 37.6*log10(0.4) evaluated in extended precision.
PATHLOSS_400M = 113.13745567393138


def test_pathloss_reference_distances():
    assert pathloss_db(1.0) == pytest.approx(128.1, abs=1e-12)
    assert pathloss_db(0.4) == pytest.approx(PATHLOSS_400M, abs=1e-12)
    assert pathloss_db(0.4) == pytest.approx(113.138, abs=1e-3)
    assert pathloss_db(1.0, shadow_db=8.0) == pytest.approx(136.1, abs=1e-12)


def test_pathloss_decade_slope():
    # one decade in distance adds exactly the slope coefficient
    for d in (0.05, 0.2, 1.0, 3.0):
        assert pathloss_db(10 * d) - pathloss_db(d) == pytest.approx(37.6, abs=1e-9)


def test_pathloss_rejects_nonpositive():
    with pytest.raises(NonPositiveDistance):
        pathloss_db(0.0)
    with pytest.raises(NonPositiveDistance):
        pathloss_db(-0.3)


def test_hexagon_membership():
    r = 400.0
    assert in_hexagon(0.0, 0.0, r)
    assert in_hexagon(399.999, 0.0, r)          # vertex sits on the +x axis
    assert not in_hexagon(400.001, 0.0, r)
    assert in_hexagon(0.0, r * np.sqrt(3) / 2 - 1e-9, r)  # edge midpoint above origin
    assert not in_hexagon(0.0, r * np.sqrt(3) / 2 + 1e-6, r)
    assert not in_hexagon(350.0, 170.0, r)       # beyond the slanted edge


def test_cluster_ring_layout():
    cfg = SystemConfig.homogeneous(C=4, L=4, K=1, N_r=2, d=2)
    topo = make_topology(cfg, trial=0)
    radius = np.linalg.norm(topo.cluster_xy, axis=1)
    assert np.allclose(radius, cfg.cell_radius_m / 2)
    angles = np.arctan2(topo.cluster_xy[:, 1], topo.cluster_xy[:, 0])
    expected = np.array([0.0, np.pi / 2, np.pi, -np.pi / 2])
    assert np.allclose(np.exp(1j * angles), np.exp(1j * expected), atol=1e-12)


def test_users_inside_hexagon():
    cfg = SystemConfig.homogeneous(C=2, L=32, K=16, N_r=2, d=2, seed=5)
    topo = make_topology(cfg, trial=3)
    for x, y in topo.user_xy:
        assert in_hexagon(x, y, cfg.cell_radius_m)


def test_topology_deterministic():
    cfg = SystemConfig.homogeneous(C=2, L=8, K=4, N_r=2, d=2, seed=9)
    a = make_topology(cfg, trial=1)
    b = make_topology(cfg, trial=1)
    c = make_topology(cfg, trial=2)
    assert np.array_equal(a.user_xy, b.user_xy)
    assert not np.array_equal(a.user_xy, c.user_xy)


def test_channel_substreams_independent_of_k():
    # adding a user must not perturb the draws of existing users
    small = SystemConfig.homogeneous(C=2, L=8, K=2, N_r=2, d=2, seed=4)
    big = SystemConfig.homogeneous(C=2, L=8, K=3, N_r=2, d=2, seed=4)
    ch_small = draw_unit_channels(small, trial=0)
    ch_big = draw_unit_channels(big, trial=0)
    for k in range(small.K):
        for c in range(small.C):
            assert np.array_equal(ch_small.block(k, c), ch_big.block(k, c))


def test_channel_determinism_across_trials():
    cfg = SystemConfig.homogeneous(C=2, L=8, K=2, N_r=2, d=2, seed=0)
    a = draw_unit_channels(cfg, trial=0)
    b = draw_unit_channels(cfg, trial=0)
    c = draw_unit_channels(cfg, trial=1)
    assert np.array_equal(a.blocks, b.blocks)
    assert not np.array_equal(a.blocks, c.blocks)


def test_small_scale_unit_energy():
    cfg = SystemConfig.homogeneous(C=1, L=100, K=1, N_r=100, d=1)
    ch = draw_unit_channels(cfg, trial=0)
    # 1e4 complex entries, mean |E|^2 within 3% of one
    assert abs(np.mean(np.abs(ch.blocks) ** 2) - 1.0) < 0.03


def test_large_scale_gains_follow_pathloss():
    cfg = SystemConfig.homogeneous(C=2, L=8, K=3, N_r=2, d=2, seed=6)
    topo = make_topology(cfg, trial=0)
    gains, shadows = large_scale_gains(cfg, topo, trial=0)
    dist_km = topo.distances_m() / 1000.0
    expected = 10.0 ** (-(128.1 + 37.6 * np.log10(dist_km) + shadows) / 10.0)
    assert np.allclose(gains, expected, rtol=1e-12)


def test_draw_channels_scales_with_gain():
    from clusterbeam.channel import _TAG_FADING, _stream
    from clusterbeam import crandn

    cfg = SystemConfig.homogeneous(C=2, L=8, K=2, N_r=2, d=2, seed=2)
    topo = make_topology(cfg, trial=0)
    ch = draw_channels(cfg, topo, trial=0)
    gains, _ = large_scale_gains(cfg, topo, trial=0)
    for k in range(cfg.K):
        for c in range(cfg.C):
            # replay the stream: shadowing draw first, then the fading block
            rng = _stream(cfg.seed, 0, _TAG_FADING, k, c)
            rng.normal(0.0, 8.0)
            E = crandn(rng, cfg.N_r, cfg.L)
            assert np.allclose(ch.block(k, c), np.sqrt(gains[k, c]) * E, rtol=1e-12)


def test_channelset_views(ch_small, cfg_small):
    K, C, N_r, L = cfg_small.K, cfg_small.C, cfg_small.N_r, cfg_small.L
    for k in range(K):
        row = ch_small.user(k)
        assert row.shape == (N_r, C * L)
        for c in range(C):
            assert np.array_equal(row[:, c * L:(c + 1) * L], ch_small.block(k, c))
    for c in range(C):
        col = ch_small.cluster(c)
        assert col.shape == (K * N_r, L)
        for k in range(K):
            assert np.array_equal(col[k * N_r:(k + 1) * N_r], ch_small.block(k, c))
    assert ch_small.Hbar.shape == (K * N_r, C * L)


def test_channelset_rejects_rank_deficient():
    cfg = SystemConfig.homogeneous(C=1, L=8, K=2, N_r=2, d=2)
    ch = draw_unit_channels(cfg, trial=0)
    blocks = ch.blocks.copy()
    blocks[1, 0] = blocks[0, 0]  # duplicate one user's rows inside the cluster
    with pytest.raises(RankDeficient):
        ChannelSet(blocks=blocks)


def test_container_roundtrip(tmp_path, cfg_small, ch_small):
    path = tmp_path / "ch.bin"
    save_channels(path, cfg_small, ch_small, trial=7)
    cfg2, ch2, trial = load_channels(path)
    assert trial == 7
    assert cfg2 == cfg_small
    assert np.array_equal(ch2.blocks, ch_small.blocks)
    # byte-identical on rewrite
    path2 = tmp_path / "ch2.bin"
    save_channels(path2, cfg2, ch2, trial=7)
    assert path.read_bytes() == path2.read_bytes()


def test_point_container_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    mat = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    path = tmp_path / "p.bin"
    save_point(path, mat, kind="point_v", meta={"note": "x"})
    kind, mat2, meta = load_point(path)
    assert kind == "point_v"
    assert meta["note"] == "x"
    assert np.array_equal(mat, mat2)


def test_point_container_rejects_bad_kind(tmp_path):
    with pytest.raises(ValueError):
        save_point(tmp_path / "p.bin", np.zeros((2, 2), complex), kind="nonsense")


def test_container_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ValueError):
        load_channels(path)


def test_config_validation():
    with pytest.raises(ValueError):
        SystemConfig.homogeneous(C=2, L=2, K=4, N_r=2, d=2)   # N_t < C*K*N_r
    with pytest.raises(ValueError):
        SystemConfig.homogeneous(C=1, L=2, K=1, N_r=1, d=4)   # d > min(N_t, N_r)
    with pytest.raises(ValueError):
        SystemConfig.homogeneous(C=1, L=8, K=1, N_r=2, d=2, P=-1.0)
    with pytest.raises(ValueError):
        SystemConfig(C=1, L=8, K=2, N_r=2, d=2, P=(1.0,),
                     sigma2=(1.0,), omega=(1.0, 1.0))          # sigma2 length


def test_config_seed_replacement(cfg_small):
    other = cfg_small.with_seed(99)
    assert other.seed == 99
    assert other.C == cfg_small.C
    assert cfg_small.seed == 0
