"""Command line entry points: gen, solve, bench, verify."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import geometry
from .baselines import sphere_rcg, wmmse_sum_power
from .channel import draw_channels, make_topology, save_channels, load_channels, save_point
from .geometry import ProductManifold
from .reduction import build_reduced
from .solver import solve, write_trace


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment YAML")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="clusterbeam",
        description="Per-cluster beamforming experiments: generate channels, "
                    "solve single instances, run benches, verify invariants.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="draw a channel realization and save it")
    _add_config(g)
    g.add_argument("--out", required=True, help="output channel container")
    g.add_argument("--trial", type=int, default=0)

    s = sub.add_parser("solve", help="solve one instance and print the result")
    _add_config(s)
    s.add_argument("--channels", help="load a saved channel container instead of drawing")
    s.add_argument("--method", default="proposed",
                   choices=["proposed", "sphere_rcg", "ezf", "wmmse"])
    s.add_argument("--trial", type=int, default=0)
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--trace", help="write the iteration trace to this JSONL path")
    s.add_argument("--save-precoder", help="write the final precoder to this path")

    b = sub.add_parser("bench", help="run a multi-trial experiment")
    _add_config(b)
    b.add_argument("--outdir", required=True)
    b.add_argument("--workers", type=int, help=f"overrides {bench_mod.WORKERS_ENV}")
    b.add_argument("--no-figures", action="store_true",
                   help="skip PNG rendering, keep the CSV/JSONL outputs")
    b.add_argument("--trials", type=int, help="override experiment.trials")
    b.add_argument("--methods", help="comma-separated override of experiment.methods")
    b.add_argument("--seed", type=int, help="override the config seed")

    v = sub.add_parser("verify", help="run the invariant suite")
    v.add_argument("--verbose", action="store_true")
    return p


def _load_spec(args) -> bench_mod.ExperimentSpec:
    spec = bench_mod.load_spec(args.config)
    if getattr(args, "seed", None) is not None:
        spec = dataclasses.replace(spec, system=spec.system.with_seed(args.seed))
    return spec


def _cmd_gen(args) -> int:
    spec = _load_spec(args)
    cfg = spec.system
    topo = make_topology(cfg, trial=args.trial)
    ch = draw_channels(cfg, topo, trial=args.trial)
    save_channels(args.out, cfg, ch, trial=args.trial)
    print(f"wrote {args.out}: C={cfg.C} L={cfg.L} K={cfg.K} N_r={cfg.N_r} "
          f"trial={args.trial} seed={cfg.seed}")
    return 0


def _cmd_solve(args) -> int:
    spec = _load_spec(args)
    cfg = spec.system
    if args.channels:
        cfg_loaded, ch, trial = load_channels(args.channels)
        cfg = cfg_loaded
        if args.trial != trial:
            trial = args.trial
    else:
        trial = args.trial
        topo = make_topology(cfg, trial=trial)
        ch = draw_channels(cfg, topo, trial=trial)

    params = spec.solver
    if args.method == "proposed":
        rp = build_reduced(ch, cfg)
        rep = solve(rp, params=params, init=cfg.seed, trial=trial)
    elif args.method == "sphere_rcg":
        M = ProductManifold.sphere(cfg)
        rep = sphere_rcg(ch, cfg, params=params, trial=trial,
                         init=geometry.random_point(M, cfg.seed))
    elif args.method == "ezf":
        rep = bench_mod._ezf_report(ch, cfg, trial)
    else:
        rep = wmmse_sum_power(ch, cfg, params=params, trial=trial)

    print(f"method={rep.method} trial={trial} wsr_bits={rep.wsr_bits:.6f} "
          f"iters={rep.iters} stop={rep.stop_reason}")
    for k, r in enumerate(rep.rates_nats):
        print(f"  user {k}: rate_bits={r / np.log(2):.6f}")
    if args.trace:
        write_trace(args.trace, rep.trace,
                    provenance={"spec_sha256": bench_mod.spec_hash(spec),
                                "seed": cfg.seed, "method": rep.method})
        print(f"trace -> {args.trace}")
    if args.save_precoder:
        save_point(args.save_precoder, rep.V.mat, kind="point_v",
                   meta={"method": rep.method, "trial": trial, "seed": cfg.seed})
        print(f"precoder -> {args.save_precoder}")
    return 0


def _cmd_bench(args) -> int:
    spec = _load_spec(args)
    if args.trials is not None:
        spec = dataclasses.replace(spec, trials=args.trials)
    if args.methods:
        spec = dataclasses.replace(
            spec, methods=tuple(m.strip() for m in args.methods.split(",") if m.strip()))
    result = bench_mod.run(spec, args.outdir, workers=args.workers,
                           figures=not args.no_figures)
    print(f"spec {result.sha[:12]} | {spec.trials} trials | {', '.join(spec.methods)}")
    for m in spec.methods:
        v = result.finals[m]
        print(f"  {m:12s} mean={np.mean(v):8.4f} bits/s/Hz  "
              f"min={np.min(v):8.4f}  max={np.max(v):8.4f}")
    print(f"outputs in {Path(args.outdir).resolve()}")
    return 0


def _cmd_verify(args) -> int:
    report = bench_mod.verify()
    for r in report.results:
        tag = "PASS" if r.passed else "FAIL"
        if args.verbose or not r.passed:
            print(f"{tag} {r.name}: {r.detail}")
        else:
            print(f"{tag} {r.name}")
    print(f"{sum(r.passed for r in report.results)}/{len(report.results)} checks passed")
    return 0 if report.passed else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"gen": _cmd_gen, "solve": _cmd_solve,
                "bench": _cmd_bench, "verify": _cmd_verify}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
