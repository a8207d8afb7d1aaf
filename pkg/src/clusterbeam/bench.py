r"""Benchmark harness: seeded trial fan-out, traces, aggregates, verification.

An experiment is a YAML file with three sections (system, solver, experiment)
and a schema version; unknown keys are rejected with their field path. Every
emitted file carries the sha256 of the canonical spec plus the seed. All
methods inside a trial consume the identical channel draw, so comparisons are
paired. Trials fan out over processes when CLUSTERBEAM_WORKERS (or the workers
argument) asks for more than one; each trial owns its substreams, so results
do not depend on the worker count.

Outputs per run: one JSON-lines trace per method, CSV aggregates (mean WSR per
iteration, mean WSR versus wall time, final-WSR CDF, convergence-time table)
and, unless disabled, PNG figures rendered from the same tables. WSR columns
are bits/s/Hz; time columns are nanoseconds.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import geometry
from .baselines import ezf, sphere_rcg, wmmse_sum_power
from .channel import ChannelSet, SystemConfig, draw_channels, make_topology
from .errors import ConfigError
from .geometry import ProductManifold
from .linalg import crandn, frob_inner
from .objective import LN2, egrad_V, egrad_X, wsr_stack, wsr_V, wsr_X
from .reduction import (
    PointX,
    ReducedProblem,
    build_reduced,
    cluster_powers,
    lift,
)
from .solver import RunReport, SolverParams, TraceRow, solve

WORKERS_ENV = "CLUSTERBEAM_WORKERS"
METHODS = ("proposed", "sphere_rcg", "ezf", "wmmse")
SCHEMA_VERSION = 1

# substream tags for per-trial solver initializations
_TAG_INIT_PROPOSED = 3
_TAG_INIT_SPHERE = 4


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated experiment description."""

    system: SystemConfig
    solver: SolverParams = field(default_factory=SolverParams)
    methods: tuple = ("proposed",)
    trials: int = 1
    budget_iters: int | None = None
    budget_ns: int | None = None
    label: str = "experiment"

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.methods:
            raise ConfigError("experiment.methods: at least one method required")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(
                    f"experiment.methods: unknown method {m!r} (choose from {METHODS})"
                )
        if self.trials < 1:
            raise ConfigError("experiment.trials: must be at least 1")
        if "wmmse" in self.methods and self.system.C != 1:
            raise ConfigError("experiment.methods: wmmse requires system.C == 1")
        if self.budget_iters is not None and self.budget_iters < 1:
            raise ConfigError("experiment.budget_iters: must be at least 1")
        if self.budget_ns is not None and self.budget_ns < 1:
            raise ConfigError("experiment.budget_ns: must be at least 1")


def spec_to_dict(spec: ExperimentSpec) -> dict:
    """Canonical config-tree form: round-trips through spec_from_dict."""
    system = dataclasses.asdict(spec.system)
    for key in ("P", "sigma2", "omega"):
        system[key] = list(system[key])
    return {
        "schema": SCHEMA_VERSION,
        "label": spec.label,
        "system": system,
        "solver": dataclasses.asdict(spec.solver),
        "experiment": {
            "methods": list(spec.methods),
            "trials": spec.trials,
            "budget_iters": spec.budget_iters,
            "budget_ns": spec.budget_ns,
        },
    }


def spec_hash(spec: ExperimentSpec) -> str:
    blob = json.dumps(spec_to_dict(spec), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


_SYSTEM_KEYS = {
    "C", "L", "K", "N_r", "d", "P", "sigma2", "omega",
    "cell_radius_m", "ring_radius_m", "min_user_dist_m", "seed",
}
_SOLVER_KEYS = {
    "sigma", "p", "alpha0", "max_iters", "max_backtracks",
    "wsr_tol", "grad_tol", "warm_start",
}
_EXPERIMENT_KEYS = {"methods", "trials", "budget_iters", "budget_ns"}
_TOP_KEYS = {"schema", "label", "system", "solver", "experiment"}


def _reject_unknown(section: dict, allowed: set, path: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key (allowed: {sorted(allowed)})")


def spec_from_dict(doc: dict) -> ExperimentSpec:
    """Build a spec from a parsed config tree, rejecting unknown keys."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    _reject_unknown(doc, _TOP_KEYS, "config")
    schema = doc.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"config.schema: unsupported version {schema}")
    sys_doc = doc.get("system")
    if not isinstance(sys_doc, dict):
        raise ConfigError("config.system: required mapping")
    _reject_unknown(sys_doc, _SYSTEM_KEYS, "system")
    sys_doc = dict(sys_doc)
    for name, count_key in (("P", "C"), ("sigma2", "K"), ("omega", "K")):
        if name in sys_doc and np.isscalar(sys_doc[name]):
            n = sys_doc.get(count_key)
            if not isinstance(n, int):
                raise ConfigError(f"system.{count_key}: required to broadcast {name}")
            sys_doc[name] = [float(sys_doc[name])] * n
    try:
        system = SystemConfig(**sys_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"system: {exc}") from exc

    sol_doc = doc.get("solver", {}) or {}
    _reject_unknown(sol_doc, _SOLVER_KEYS, "solver")
    try:
        solver = SolverParams(**sol_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc

    exp_doc = doc.get("experiment", {}) or {}
    _reject_unknown(exp_doc, _EXPERIMENT_KEYS, "experiment")
    return ExperimentSpec(
        system=system,
        solver=solver,
        methods=tuple(exp_doc.get("methods", ("proposed",))),
        trials=int(exp_doc.get("trials", 1)),
        budget_iters=exp_doc.get("budget_iters"),
        budget_ns=exp_doc.get("budget_ns"),
        label=str(doc.get("label", "experiment")),
    )


def load_spec(path) -> ExperimentSpec:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return spec_from_dict(doc)


@dataclass(frozen=True)
class CdfTable:
    """Sorted final-WSR samples per method with empirical CDF points."""

    samples: dict  # method -> sorted np.ndarray of wsr_bits
    cdf: dict      # method -> np.ndarray in (0, 1]

    def __post_init__(self):
        for m, c in self.cdf.items():
            if len(c) and (np.any(np.diff(c) < 0.0) or c[0] < 0.0 or c[-1] > 1.0 + 1e-12):
                raise ValueError(f"CDF for {m} is not nondecreasing in [0, 1]")

    @classmethod
    def from_finals(cls, finals: dict) -> "CdfTable":
        samples, cdf = {}, {}
        for m, vals in finals.items():
            v = np.sort(np.asarray(vals, dtype=float))
            samples[m] = v
            cdf[m] = np.arange(1, len(v) + 1) / len(v)
        return cls(samples=samples, cdf=cdf)


def _effective_params(spec: ExperimentSpec) -> SolverParams:
    p = dataclasses.replace(spec.solver)
    if spec.budget_iters is not None:
        p = dataclasses.replace(p, max_iters=spec.budget_iters, wsr_tol=0.0)
    elif spec.budget_ns is not None:
        p = dataclasses.replace(p, wsr_tol=0.0)
    return p


def _ezf_report(ch: ChannelSet, cfg: SystemConfig, trial: int) -> RunReport:
    out = ezf(ch, cfg)
    rep = wsr_V(out.V, ch, cfg, diagnostics=False)
    row = TraceRow(trial, 0, rep.wsr_nats / LN2, 0.0, 0.0, 0, 0)
    return RunReport(
        method="ezf", V=out.V, X=None, wsr_nats=rep.wsr_nats,
        rates_nats=rep.rates_nats, trace=[row], converged=True, stop_reason="direct",
    )


def run_trial(spec: ExperimentSpec, trial: int) -> dict:
    """Run every method of the spec on one shared channel draw."""
    cfg = spec.system
    topo = make_topology(cfg, trial=trial)
    ch = draw_channels(cfg, topo, trial=trial)
    params = _effective_params(spec)
    budget_ns = spec.budget_ns
    out = {}
    rp = None
    for method in spec.methods:
        if method == "proposed":
            if rp is None:
                rp = build_reduced(ch, cfg)
            rng = np.random.default_rng(
                np.random.SeedSequence((cfg.seed, trial, _TAG_INIT_PROPOSED))
            )
            rep = solve(rp, params=params, init=geometry.random_point(
                ProductManifold.ellipsoid(rp), rng), trial=trial,
                time_budget_ns=budget_ns)
        elif method == "sphere_rcg":
            rng = np.random.default_rng(
                np.random.SeedSequence((cfg.seed, trial, _TAG_INIT_SPHERE))
            )
            M = ProductManifold.sphere(cfg)
            rep = sphere_rcg(ch, cfg, params=params, trial=trial,
                             init=geometry.random_point(M, rng),
                             time_budget_ns=budget_ns)
        elif method == "ezf":
            rep = _ezf_report(ch, cfg, trial)
        elif method == "wmmse":
            rep = wmmse_sum_power(ch, cfg, params=params, trial=trial)
        else:  # pragma: no cover - spec validation rejects this earlier
            raise ConfigError(f"unknown method {method!r}")
        out[method] = {
            "trace": [r.to_dict() for r in rep.trace],
            "wsr_bits": rep.wsr_bits,
            "converged": rep.converged,
            "stop_reason": rep.stop_reason,
        }
    return out


def _trial_job(args):
    spec_doc, trial = args
    return trial, run_trial(spec_from_dict(spec_doc), trial)


def _resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, workers)


@dataclass
class BenchResult:
    spec: ExperimentSpec
    sha: str
    finals: dict            # method -> np.ndarray of final wsr_bits per trial
    traces: dict            # method -> list of trace-row dicts (all trials)
    files: list             # paths written


def run(spec: ExperimentSpec, outdir, workers: int | None = None,
        figures: bool = True) -> BenchResult:
    """Execute the experiment and write traces, aggregates and figures."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    sha = spec_hash(spec)
    nworkers = _resolve_workers(workers)
    jobs = [(spec_to_dict(spec), t) for t in range(spec.trials)]
    if nworkers > 1 and spec.trials > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=nworkers) as ex:
            collected = dict(ex.map(_trial_job, jobs))
    else:
        collected = dict(_trial_job(j) for j in jobs)

    traces = {m: [] for m in spec.methods}
    finals = {m: [] for m in spec.methods}
    convergence = {m: [] for m in spec.methods}
    for t in range(spec.trials):
        per_method = collected[t]
        for m in spec.methods:
            res = per_method[m]
            traces[m].extend(res["trace"])
            finals[m].append(res["wsr_bits"])
            rows = res["trace"]
            convergence[m].append({
                "trial": t,
                "iters": rows[-1]["iter"],
                "elapsed_ns": int(sum(r["elapsed_ns"] for r in rows)),
                "wsr_bits": res["wsr_bits"],
                "converged": res["converged"],
            })
    finals = {m: np.asarray(v) for m, v in finals.items()}

    files = []
    provenance = {"spec_sha256": sha, "seed": spec.system.seed,
                  "schema": SCHEMA_VERSION, "label": spec.label}
    for m in spec.methods:
        path = outdir / f"trace_{m}.jsonl"
        with open(path, "w") as fh:
            fh.write(json.dumps({**provenance, "method": m}, sort_keys=True) + "\n")
            for row in traces[m]:
                fh.write(json.dumps(row) + "\n")
        files.append(path)

    head = f"# spec_sha256={sha} seed={spec.system.seed} schema={SCHEMA_VERSION}\n"

    # mean WSR per iteration, trials padded with their last value
    path = outdir / "wsr_vs_iteration.csv"
    with open(path, "w") as fh:
        fh.write(head)
        fh.write("iter," + ",".join(f"{m}_mean_wsr_bits" for m in spec.methods) + "\n")
        curves = {m: _mean_by_iteration(traces[m], spec.trials) for m in spec.methods}
        depth = max(len(c) for c in curves.values())
        for i in range(depth):
            vals = []
            for m in spec.methods:
                c = curves[m]
                vals.append(c[min(i, len(c) - 1)])
            fh.write(f"{i}," + ",".join(f"{v:.12g}" for v in vals) + "\n")
    files.append(path)

    # mean WSR versus elapsed wall time on a shared grid
    path = outdir / "wsr_vs_time.csv"
    with open(path, "w") as fh:
        fh.write(head)
        fh.write("time_ns," + ",".join(f"{m}_mean_wsr_bits" for m in spec.methods) + "\n")
        grid, columns = _mean_by_time(traces, spec.methods, spec.trials)
        for i, tns in enumerate(grid):
            fh.write(f"{int(tns)}," + ",".join(f"{columns[m][i]:.12g}" for m in spec.methods) + "\n")
    files.append(path)

    cdf = CdfTable.from_finals(finals)
    path = outdir / "cdf_wsr.csv"
    with open(path, "w") as fh:
        fh.write(head)
        fh.write("method,wsr_bits,cdf\n")
        for m in spec.methods:
            for v, c in zip(cdf.samples[m], cdf.cdf[m]):
                fh.write(f"{m},{v:.12g},{c:.12g}\n")
    files.append(path)

    path = outdir / "convergence_time.csv"
    with open(path, "w") as fh:
        fh.write(head)
        fh.write("method,trial,iters,elapsed_ns,wsr_bits,converged\n")
        for m in spec.methods:
            for row in convergence[m]:
                fh.write(
                    f"{m},{row['trial']},{row['iters']},{row['elapsed_ns']},"
                    f"{row['wsr_bits']:.12g},{int(row['converged'])}\n"
                )
    files.append(path)

    if figures:
        files.extend(render_figures(outdir, spec, traces, cdf, convergence))
    return BenchResult(spec=spec, sha=sha, finals=finals, traces=traces, files=files)


def _mean_by_iteration(rows: list, trials: int) -> np.ndarray:
    by_trial = {}
    for r in rows:
        by_trial.setdefault(r["trial"], []).append(r["wsr_bits"])
    depth = max(len(v) for v in by_trial.values())
    acc = np.zeros(depth)
    for v in by_trial.values():
        arr = np.asarray(v)
        padded = np.concatenate([arr, np.full(depth - len(arr), arr[-1])])
        acc += padded
    return acc / len(by_trial)


def _mean_by_time(traces: dict, methods, trials: int, npts: int = 101):
    horizon = 1
    for m in methods:
        for_trial = {}
        for r in traces[m]:
            for_trial.setdefault(r["trial"], 0)
            for_trial[r["trial"]] += r["elapsed_ns"]
        if for_trial:
            horizon = max(horizon, max(for_trial.values()))
    grid = np.linspace(0, horizon, npts)
    columns = {}
    for m in methods:
        by_trial = {}
        for r in traces[m]:
            by_trial.setdefault(r["trial"], []).append(r)
        acc = np.zeros(npts)
        for rows in by_trial.values():
            t = np.cumsum([r["elapsed_ns"] for r in rows])
            w = np.asarray([r["wsr_bits"] for r in rows])
            idx = np.searchsorted(t, grid, side="right") - 1
            idx = np.clip(idx, 0, len(w) - 1)
            acc += w[idx]
        columns[m] = acc / max(len(by_trial), 1)
    return grid, columns


def render_figures(outdir, spec: ExperimentSpec, traces: dict, cdf: CdfTable,
                   convergence: dict) -> list:
    """Render PNG companions for each delimited output file."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    written = []

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for m in spec.methods:
        curve = _mean_by_iteration(traces[m], spec.trials)
        ax.plot(np.arange(len(curve)), curve, label=m)
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean WSR (bits/s/Hz)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = outdir / "wsr_vs_iteration.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    grid, columns = _mean_by_time(traces, spec.methods, spec.trials)
    for m in spec.methods:
        ax.plot(grid / 1e6, columns[m], label=m)
    ax.set_xlabel("elapsed time (ms)")
    ax.set_ylabel("mean WSR (bits/s/Hz)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = outdir / "wsr_vs_time.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for m in spec.methods:
        ax.step(cdf.samples[m], cdf.cdf[m], where="post", label=m)
    ax.set_xlabel("final WSR (bits/s/Hz)")
    ax.set_ylabel("empirical CDF")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = outdir / "cdf_wsr.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    labels = list(spec.methods)
    means = [np.mean([row["elapsed_ns"] for row in convergence[m]]) / 1e6 for m in labels]
    ax.bar(labels, means)
    ax.set_ylabel("mean time to stop (ms)")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    path = outdir / "convergence_time.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written


# ---------------------------------------------------------------------------
# verification suite
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class VerifyReport:
    results: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)


def gradient_fd_error(f, grad_mat: np.ndarray, x0: np.ndarray,
                      rng: np.random.Generator, ndirs: int = 6,
                      h: float = 1e-6) -> float:
    """Worst relative error of 2*Re<grad, Delta> against central differences.

    Directions cover random coordinates (real and imaginary unit perturbations)
    plus one dense random direction. The denominator floors at the precision of
    the central difference itself (eps*|f|/h), which otherwise dominates on
    near-orthogonal directions.
    """
    floor = 16.0 * np.finfo(float).eps * abs(f(x0)) / h
    worst = 0.0
    dirs = []
    for _ in range(ndirs):
        i = rng.integers(x0.shape[0])
        j = rng.integers(x0.shape[1])
        e = np.zeros_like(x0)
        e[i, j] = 1.0
        dirs.append(e)
        e = np.zeros_like(x0)
        e[i, j] = 1.0j
        dirs.append(e)
    dense = crandn(rng, *x0.shape)
    dirs.append(dense / np.linalg.norm(dense))
    for delta in dirs:
        fd = (f(x0 + h * delta) - f(x0 - h * delta)) / (2.0 * h)
        an = 2.0 * frob_inner(grad_mat, delta)
        denom = max(abs(an), abs(fd), floor * 1e6, 1e-12)
        worst = max(worst, abs(fd - an) / denom)
    return worst


def check_q_hermitian(rp: ReducedProblem, rtol: float = 1e-10) -> CheckResult:
    worst = 0.0
    for Q in rp.Q:
        scale = np.linalg.norm(Q, "fro")
        worst = max(worst, np.linalg.norm(Q - Q.conj().T, "fro") / scale)
    return CheckResult("q_hermitian", worst <= rtol, f"worst asymmetry {worst:.3e}")


def check_gradient_fd_x(rp: ReducedProblem, seed: int = 0,
                        egrad_fn=egrad_X, tol: float = 1e-6) -> CheckResult:
    M = ProductManifold.ellipsoid(rp)
    X = geometry.random_point(M, seed)
    g = egrad_fn(X, rp)

    def f(mat):
        return float(-wsr_stack(rp.Gbar @ mat, rp.sigma2, rp.omega, rp.dims.d))

    err = gradient_fd_error(f, g.mat, X.mat, np.random.default_rng(seed))
    return CheckResult("gradient_fd_x", err <= tol, f"max rel err {err:.3e}")


def check_gradient_fd_v(ch: ChannelSet, cfg: SystemConfig, seed: int = 0,
                        tol: float = 1e-6) -> CheckResult:
    M = ProductManifold.sphere(cfg)
    V = geometry.random_point(M, seed)
    g = egrad_V(V, ch, cfg)
    Hbar = ch.Hbar

    def f(mat):
        return float(-wsr_stack(Hbar @ mat, cfg.sigma2, cfg.omega, cfg.d))

    err = gradient_fd_error(f, g.mat, V.mat, np.random.default_rng(seed))
    return CheckResult("gradient_fd_v", err <= tol, f"max rel err {err:.3e}")


def check_rate_equivalence(rp: ReducedProblem, ch: ChannelSet, cfg: SystemConfig,
                           npoints: int = 20, tol: float = 1e-9) -> CheckResult:
    M = ProductManifold.ellipsoid(rp)
    worst = 0.0
    for s in range(npoints):
        X = geometry.random_point(M, s)
        wx = wsr_X(X, rp, diagnostics=False).wsr_nats
        wv = wsr_V(lift(X, rp), ch, cfg, diagnostics=False).wsr_nats
        worst = max(worst, abs(wx - wv) / abs(wx))
    return CheckResult("rate_equivalence", worst <= tol, f"worst rel gap {worst:.3e}")


def check_manifold_ops(rp: ReducedProblem, seed: int = 0) -> CheckResult:
    M = ProductManifold.ellipsoid(rp)
    rng = np.random.default_rng(seed)
    X = geometry.random_point(M, rng)
    Z = PointX(mat=crandn(rng, *X.mat.shape), dims=M.dims)
    xi = geometry.project_tangent(X, Z, M)
    xi2 = geometry.project_tangent(X, xi, M)
    idem = np.linalg.norm(xi2.mat - xi.mat) / max(np.linalg.norm(xi.mat), 1e-300)
    tang = geometry.tangency_residual(X, xi, M)
    Y = geometry.retract(X, xi, 0.37, M)
    feas = geometry.feasibility_residual(Y, M)
    e3 = np.linalg.norm(geometry.retract(X, xi, 1e-3, M).mat - (X.mat + 1e-3 * xi.mat))
    e4 = np.linalg.norm(geometry.retract(X, xi, 1e-4, M).mat - (X.mat + 1e-4 * xi.mat))
    ratio = e3 / max(e4, 1e-300)
    ok = idem <= 1e-10 and tang <= 1e-8 and feas <= 1e-10 and 50.0 <= ratio <= 200.0
    return CheckResult(
        "manifold_ops", ok,
        f"idempotence {idem:.2e}, tangency {tang:.2e}, feasibility {feas:.2e}, "
        f"first-order ratio {ratio:.1f}",
    )


def check_descent_and_power(rp: ReducedProblem, seed: int = 0) -> CheckResult:
    params = SolverParams(max_iters=40, wsr_tol=1e-6)
    feas = []
    rep = solve(rp, params=params, init=seed,
                callback=lambda st: feas.append(
                    geometry.feasibility_residual(st.Y, ProductManifold.ellipsoid(rp))))
    wsr = [r.wsr_bits for r in rep.trace]
    monotone = all(b >= a - 1e-12 for a, b in zip(wsr, wsr[1:]))
    pv = cluster_powers(rep.V)
    tight = np.max(np.abs(pv - rp.P) / rp.P)
    ok = monotone and max(feas, default=0.0) <= 1e-8 and tight <= 1e-8
    return CheckResult(
        "descent_and_power", ok,
        f"monotone {monotone}, worst feasibility {max(feas, default=0.0):.2e}, "
        f"power tightness {tight:.2e}",
    )


def check_ezf(ch: ChannelSet, cfg: SystemConfig) -> CheckResult:
    out = ezf(ch, cfg)
    ratios = out.cluster_power / np.asarray(cfg.P)
    power_ok = abs(np.max(ratios) - 1.0) <= 1e-9 and np.all(ratios <= 1.0 + 1e-9)
    worst_leak = 0.0
    for k in range(cfg.K):
        Hk = ch.user(k)
        own = np.linalg.norm(Hk @ out.V.user(k))
        for j in range(cfg.K):
            if j != k:
                worst_leak = max(worst_leak, np.linalg.norm(Hk @ out.V.user(j)) / own)
    ok = power_ok and worst_leak <= 1e-8
    return CheckResult("ezf", ok, f"max power ratio {np.max(ratios):.12f}, "
                                  f"worst interference {worst_leak:.2e}")


def check_determinism(rp: ReducedProblem) -> CheckResult:
    params = SolverParams(max_iters=15, wsr_tol=0.0)
    a = solve(rp, params=params, init=5)
    b = solve(rp, params=params, init=5)
    strip = lambda rows: [
        {k: v for k, v in r.to_dict().items() if k != "elapsed_ns"} for r in rows
    ]
    same = json.dumps(strip(a.trace)) == json.dumps(strip(b.trace))
    return CheckResult("determinism", same, "identical traces" if same else "traces differ")


def verify(seed: int = 7) -> VerifyReport:
    """Run the cross-module invariant suite on a fresh desk-scale instance."""
    from .channel import draw_unit_channels

    cfg = SystemConfig.homogeneous(C=2, L=8, K=2, N_r=2, d=2, P=10.0,
                                   sigma2=1.0, omega=1.0, seed=seed)
    ch = draw_unit_channels(cfg)
    rp = build_reduced(ch, cfg)
    results = [
        check_q_hermitian(rp),
        check_gradient_fd_x(rp, seed=seed),
        check_gradient_fd_v(ch, cfg, seed=seed),
        check_rate_equivalence(rp, ch, cfg),
        check_manifold_ops(rp, seed=seed),
        check_descent_and_power(rp, seed=seed),
        check_ezf(ch, cfg),
        check_determinism(rp),
    ]
    return VerifyReport(results=results)
