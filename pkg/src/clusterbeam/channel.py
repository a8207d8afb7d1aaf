r"""Clustered downlink channel generation and serialization.

Geometry: C antenna clusters of L antennas each sit on a ring around the cell
center; K users are dropped uniformly inside a hexagonal cell. Each user/cluster
link has a large-scale gain beta_k^(c) built from the pathloss law
128.1 + 37.6 log10(d_km) + psi dB (psi is lognormal shadowing) and small-scale
Rayleigh fading H_k^(c) = sqrt(beta) E with E having i.i.d. unit-variance
circularly symmetric complex Gaussian entries.

Distances are meters internally (the pathloss law takes kilometers); powers are
watts. Generation is deterministic per (config, seed, trial): every (trial,
user, cluster) triple owns its own RNG substream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, NonPositiveDistance, NotPositiveDefinite, RankDeficient
from .linalg import cholesky, crandn

# substream tags; keep stable, they define the bit-exact output
_TAG_TOPOLOGY = 1
_TAG_FADING = 2

# rank test: smallest Cholesky pivot^2 of H^(c) H^(c)^H must exceed this times its trace
_RANK_PIVOT_RTOL = 1e-12

SHADOW_STD_DB = 8.0


def _stream(*key: int) -> np.random.Generator:
    """Deterministic named substream."""
    return np.random.default_rng(np.random.SeedSequence(key))


@dataclass(frozen=True)
class SystemConfig:
    """Static system description.

    C clusters of L antennas (N_t = L*C transmit antennas total), K users with
    N_r receive antennas and d streams each. P holds per-cluster power budgets
    in watts, sigma2 per-user noise powers in watts, omega per-user rate
    weights.
    """

    C: int
    L: int
    K: int
    N_r: int
    d: int
    P: tuple[float, ...]
    sigma2: tuple[float, ...]
    omega: tuple[float, ...]
    cell_radius_m: float = 400.0
    ring_radius_m: float | None = None  # cluster ring; None means cell_radius_m / 2
    min_user_dist_m: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "P", tuple(float(p) for p in np.atleast_1d(self.P)))
        object.__setattr__(self, "sigma2", tuple(float(s) for s in np.atleast_1d(self.sigma2)))
        object.__setattr__(self, "omega", tuple(float(w) for w in np.atleast_1d(self.omega)))
        if min(self.C, self.L, self.K, self.N_r, self.d) < 1:
            raise ValueError("C, L, K, N_r, d must all be at least 1")
        if self.d > min(self.N_t, self.N_r):
            raise ValueError(f"d={self.d} exceeds min(N_t, N_r)={min(self.N_t, self.N_r)}")
        if self.N_t < self.C * self.K * self.N_r:
            raise ValueError(
                f"N_t={self.N_t} must be at least C*K*N_r={self.C * self.K * self.N_r}"
            )
        if len(self.P) != self.C:
            raise ValueError(f"P has {len(self.P)} entries, expected C={self.C}")
        if len(self.sigma2) != self.K:
            raise ValueError(f"sigma2 has {len(self.sigma2)} entries, expected K={self.K}")
        if len(self.omega) != self.K:
            raise ValueError(f"omega has {len(self.omega)} entries, expected K={self.K}")
        for name, vals in (("P", self.P), ("sigma2", self.sigma2)):
            if any(not np.isfinite(v) or v <= 0.0 for v in vals):
                raise ValueError(f"{name} entries must be strictly positive and finite")
        if any(not np.isfinite(w) or w < 0.0 for w in self.omega):
            raise ValueError("omega entries must be nonnegative and finite")
        if not any(w > 0.0 for w in self.omega):
            raise ValueError("at least one omega entry must be positive")
        if self.cell_radius_m <= 0.0:
            raise ValueError("cell_radius_m must be positive")
        if self.ring_radius_m is not None and self.ring_radius_m <= 0.0:
            raise ValueError("ring_radius_m must be positive when given")
        if self.min_user_dist_m < 0.0:
            raise ValueError("min_user_dist_m must be nonnegative")

    @property
    def N_t(self) -> int:
        return self.L * self.C

    @property
    def ring_radius(self) -> float:
        return self.cell_radius_m / 2.0 if self.ring_radius_m is None else self.ring_radius_m

    @classmethod
    def homogeneous(cls, C, L, K, N_r, d, P=1.0, sigma2=1.0, omega=1.0, **kwargs):
        """Same budget/noise/weight for every cluster and user."""
        return cls(
            C=C, L=L, K=K, N_r=N_r, d=d,
            P=(float(P),) * C, sigma2=(float(sigma2),) * K, omega=(float(omega),) * K,
            **kwargs,
        )

    def with_seed(self, seed: int) -> "SystemConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class Topology:
    """Planar positions in meters: clusters on the ring, users in the hexagon."""

    cluster_xy: np.ndarray  # (C, 2)
    user_xy: np.ndarray     # (K, 2)

    def distances_m(self) -> np.ndarray:
        """User-to-cluster distance matrix, shape (K, C)."""
        diff = self.user_xy[:, None, :] - self.cluster_xy[None, :, :]
        return np.sqrt(np.sum(diff**2, axis=-1))

    def scaled(self, factor: float) -> "Topology":
        return Topology(self.cluster_xy * factor, self.user_xy * factor)


def in_hexagon(x, y, r) -> np.ndarray:
    """Membership test for the regular hexagon of circumradius r, vertex on +x."""
    s3 = np.sqrt(3.0)
    return (
        (np.abs(np.asarray(y)) <= s3 / 2.0 * r)
        & (np.abs(s3 * np.asarray(x) + y) <= s3 * r)
        & (np.abs(s3 * np.asarray(x) - y) <= s3 * r)
    )


def make_topology(cfg: SystemConfig, trial: int = 0) -> Topology:
    """Place clusters equidistant on the ring (360/C degree spacing) and drop
    users uniformly in the hexagonal cell via rejection sampling."""
    angles = 2.0 * np.pi * np.arange(cfg.C) / cfg.C
    ring = cfg.ring_radius
    cluster_xy = np.column_stack([ring * np.cos(angles), ring * np.sin(angles)])

    rng = _stream(cfg.seed, trial, _TAG_TOPOLOGY)
    users = np.empty((cfg.K, 2))
    for k in range(cfg.K):
        for _ in range(100_000):
            x, y = rng.uniform(-cfg.cell_radius_m, cfg.cell_radius_m, size=2)
            if not in_hexagon(x, y, cfg.cell_radius_m):
                continue
            if cfg.min_user_dist_m > 0.0:
                dists = np.sqrt(np.sum((cluster_xy - [x, y]) ** 2, axis=1))
                if np.min(dists) < cfg.min_user_dist_m:
                    continue
            users[k] = (x, y)
            break
        else:
            raise RuntimeError("hexagon rejection sampling failed; check radii")
    return Topology(cluster_xy=cluster_xy, user_xy=users)


def pathloss_db(d_km: float, shadow_db: float = 0.0) -> float:
    """Pathloss 128.1 + 37.6 log10(d_km) + shadow_db, in dB."""
    if d_km <= 0.0:
        raise NonPositiveDistance(f"distance must be positive, got {d_km} km")
    return 128.1 + 37.6 * np.log10(d_km) + shadow_db


@dataclass(frozen=True)
class ChannelSet:
    """All per-user-per-cluster blocks H_k^(c) plus their stackings.

    `blocks` has shape (K, C, N_r, L). The per-user stack H_k (N_r x N_t) and
    per-cluster stack H^(c) (K*N_r x L) are materialized once at construction;
    they are exact block copies by construction. Every H^(c) must have full row
    rank K*N_r, verified through a Gram Cholesky with pivot threshold
    1e-12 * trace.
    """

    blocks: np.ndarray
    _users: tuple = field(init=False, repr=False)
    _clusters: tuple = field(init=False, repr=False)

    def __post_init__(self):
        b = np.ascontiguousarray(np.asarray(self.blocks, dtype=np.complex128))
        if b.ndim != 4:
            raise DimensionMismatch(f"blocks must be (K, C, N_r, L), got shape {b.shape}")
        if not (np.all(np.isfinite(b.real)) and np.all(np.isfinite(b.imag))):
            raise ValueError("channel blocks contain non-finite entries")
        object.__setattr__(self, "blocks", b)
        K, C, N_r, L = b.shape
        users = tuple(np.hstack(list(b[k])) for k in range(K))
        clusters = tuple(b[:, c].reshape(K * N_r, L) for c in range(C))
        object.__setattr__(self, "_users", users)
        object.__setattr__(self, "_clusters", clusters)
        for c, Hc in enumerate(clusters):
            _check_row_rank(Hc, c)

    @property
    def K(self) -> int:
        return self.blocks.shape[0]

    @property
    def C(self) -> int:
        return self.blocks.shape[1]

    @property
    def N_r(self) -> int:
        return self.blocks.shape[2]

    @property
    def L(self) -> int:
        return self.blocks.shape[3]

    def block(self, k: int, c: int) -> np.ndarray:
        """H_k^(c), shape (N_r, L)."""
        return self.blocks[k, c]

    def user(self, k: int) -> np.ndarray:
        """H_k = [H_k^(1) ... H_k^(C)], shape (N_r, N_t)."""
        return self._users[k]

    def cluster(self, c: int) -> np.ndarray:
        """H^(c) = [H_1^(c); ...; H_K^(c)], shape (K*N_r, L)."""
        return self._clusters[c]

    @property
    def Hbar(self) -> np.ndarray:
        """All user stacks vertically, shape (K*N_r, N_t)."""
        return np.vstack(self._users)


def _check_row_rank(Hc: np.ndarray, c: int) -> None:
    gram = Hc @ Hc.conj().T
    gram = 0.5 * (gram + gram.conj().T)
    tr = float(np.real(np.trace(gram)))
    try:
        fac = cholesky(gram)
    except NotPositiveDefinite as exc:
        raise RankDeficient(f"cluster {c} stack lost full row rank") from exc
    pivots = np.real(np.diagonal(fac.lower)) ** 2
    if np.min(pivots) < _RANK_PIVOT_RTOL * tr:
        raise RankDeficient(
            f"cluster {c} stack is numerically rank deficient "
            f"(pivot ratio {np.min(pivots) / tr:.3e})"
        )


def large_scale_gains(cfg: SystemConfig, topo: Topology,
                      trial: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Linear gains beta_k^(c) and the shadowing draws, both shape (K, C).

    Consumes the first draw of each (trial, user, cluster) fading substream, so
    gains and fading stay paired deterministically.
    """
    dists = topo.distances_m()
    beta = np.empty((cfg.K, cfg.C))
    shadows = np.empty((cfg.K, cfg.C))
    for k in range(cfg.K):
        for c in range(cfg.C):
            rng = _stream(cfg.seed, trial, _TAG_FADING, k, c)
            shadows[k, c] = rng.normal(0.0, SHADOW_STD_DB)
            pl = pathloss_db(dists[k, c] / 1000.0, shadows[k, c])
            beta[k, c] = 10.0 ** (-pl / 10.0)
    return beta, shadows


def draw_channels(cfg: SystemConfig, topo: Topology, trial: int = 0) -> ChannelSet:
    """Draw H_k^(c) = sqrt(beta_k^(c)) E_k^(c) with i.i.d. unit CN(0,1) fading."""
    dists = topo.distances_m()
    blocks = np.empty((cfg.K, cfg.C, cfg.N_r, cfg.L), dtype=np.complex128)
    for k in range(cfg.K):
        for c in range(cfg.C):
            rng = _stream(cfg.seed, trial, _TAG_FADING, k, c)
            shadow = rng.normal(0.0, SHADOW_STD_DB)
            pl = pathloss_db(dists[k, c] / 1000.0, shadow)
            beta = 10.0 ** (-pl / 10.0)
            blocks[k, c] = np.sqrt(beta) * crandn(rng, cfg.N_r, cfg.L)
    return ChannelSet(blocks=blocks)


def draw_unit_channels(cfg: SystemConfig, trial: int = 0) -> ChannelSet:
    """Unit-gain fading only (beta = 1, no geometry); handy for normalized studies."""
    blocks = np.empty((cfg.K, cfg.C, cfg.N_r, cfg.L), dtype=np.complex128)
    for k in range(cfg.K):
        for c in range(cfg.C):
            rng = _stream(cfg.seed, trial, _TAG_FADING, k, c)
            blocks[k, c] = crandn(rng, cfg.N_r, cfg.L)
    return ChannelSet(blocks=blocks)


# ---------------------------------------------------------------------------
# binary container: MAGIC, u32 header length, JSON header, little-endian payload
# of row-major complex entries stored as (re, im) float64 pairs.
# ---------------------------------------------------------------------------

MAGIC = b"CBCH\x01"


def _write_container(path, header: dict, payload: np.ndarray) -> None:
    data = np.ascontiguousarray(payload, dtype="<c16")
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.array(len(head), dtype="<u4").tobytes())
        fh.write(head)
        fh.write(data.tobytes(order="C"))


def _read_container(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a channel container (bad magic {magic!r})")
        (hlen,) = np.frombuffer(fh.read(4), dtype="<u4")
        header = json.loads(fh.read(int(hlen)).decode("utf-8"))
        flat = np.frombuffer(fh.read(), dtype="<c16")
    return header, flat


def save_channels(path, cfg: SystemConfig, ch: ChannelSet, trial: int = 0) -> None:
    """Serialize a channel set with its generating config for exact replay."""
    header = {
        "kind": "channel_set",
        "version": 1,
        "trial": int(trial),
        "shape": list(ch.blocks.shape),
        "config": _config_to_dict(cfg),
    }
    _write_container(path, header, ch.blocks)


def load_channels(path) -> tuple[SystemConfig, ChannelSet, int]:
    header, flat = _read_container(path)
    if header.get("kind") != "channel_set":
        raise ValueError(f"{path}: container holds {header.get('kind')!r}, not a channel set")
    shape = tuple(header["shape"])
    cfg = _config_from_dict(header["config"])
    return cfg, ChannelSet(blocks=flat.reshape(shape)), int(header.get("trial", 0))


def save_point(path, mat: np.ndarray, kind: str, meta: dict | None = None) -> None:
    """Serialize a precoder matrix (kind 'point_v' or 'point_x')."""
    if kind not in ("point_v", "point_x"):
        raise ValueError(f"unknown point kind {kind!r}")
    header = {"kind": kind, "version": 1, "shape": list(mat.shape), "meta": meta or {}}
    _write_container(path, header, mat)


def load_point(path) -> tuple[str, np.ndarray, dict]:
    header, flat = _read_container(path)
    kind = header.get("kind")
    if kind not in ("point_v", "point_x"):
        raise ValueError(f"{path}: container holds {kind!r}, not a point")
    return kind, flat.reshape(tuple(header["shape"])), header.get("meta", {})


def _config_to_dict(cfg: SystemConfig) -> dict:
    return {
        "C": cfg.C, "L": cfg.L, "K": cfg.K, "N_r": cfg.N_r, "d": cfg.d,
        "P": list(cfg.P), "sigma2": list(cfg.sigma2), "omega": list(cfg.omega),
        "cell_radius_m": cfg.cell_radius_m, "ring_radius_m": cfg.ring_radius_m,
        "min_user_dist_m": cfg.min_user_dist_m, "seed": cfg.seed,
    }


def _config_from_dict(d: dict) -> SystemConfig:
    return SystemConfig(
        C=d["C"], L=d["L"], K=d["K"], N_r=d["N_r"], d=d["d"],
        P=tuple(d["P"]), sigma2=tuple(d["sigma2"]), omega=tuple(d["omega"]),
        cell_radius_m=d["cell_radius_m"], ring_radius_m=d["ring_radius_m"],
        min_user_dist_m=d["min_user_dist_m"], seed=d["seed"],
    )
