"""Command-line entry point: ``splitpoint <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import plots
from .baselines import SelectorKind, exhaustive_optimal, naive_select
from .delaymodel import ResourceState, TrainingConfig, resource_for_operating_point
from .montecarlo import MonteCarloConfig, calibrate_client_speed, parse_grid, run_gain_grid
from .netprofile import FlopConvention, build_profile, load_architecture, reference_architecture
from .ocla import RegionStore, SplitRegionTable, offline_phase, select_cut_layer
from .simrunner import (
    SEED_ENV,
    SampledResources,
    SimulationConfig,
    attach_loss_trace,
    load_loss_trace,
    load_simulation_config,
    simulate_training,
)

log = logging.getLogger("splitpoint")


def _seed(value: int) -> int:
    return int(os.environ.get(SEED_ENV, value))


def _profile(args):
    arch = load_architecture(args.arch) if args.arch else reference_architecture()
    conv = FlopConvention(mac_flops=args.mac_flops, activation_flops=args.activation_flops)
    return build_profile(arch, conv, args.scalar_bits)


def _table(args, profile, dataset_size=None) -> SplitRegionTable:
    d = args.dk if dataset_size is None else dataset_size
    if getattr(args, "table", None):
        return SplitRegionTable.load(args.table)
    if args.db:
        return RegionStore(args.db).get_or_build(profile, d)
    return offline_phase(profile, d).table


def _emit(args, payload, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, default=_json_default))
    else:
        print(text)


def _json_default(o):
    if isinstance(o, float) and math.isinf(o):
        return None
    return str(o)


def _write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _fmt_table(table: SplitRegionTable) -> str:
    lines = [f"{'layer':>5}  {'theta_low':>12}  {'theta_high':>12}   (bits/FLOP)"]
    for e in table.entries:
        lines.append(f"{e.layer:>5}  {e.low:>12.6g}  {e.high:>12.6g}")
    return "\n".join(lines)


def cmd_profile(args) -> int:
    p = _profile(args)
    if args.out:
        _write(args.out, p.to_csv())
    if args.plot:
        table = offline_phase(p, args.dk).table if p.n_layers > 1 else None
        plots.plot_profile(p, Path(args.plot) / "profile.png", table)
    _emit(args, p.rows(), p.to_csv().rstrip())
    return 0


def cmd_prune(args) -> int:
    p = _profile(args)
    r = offline_phase(p, args.dk)
    payload = {"after_step1": list(r.step1.layers), "after_step2": list(r.step2.layers), "step2_passes": r.step2.passes}
    if args.out:
        _write(args.out, json.dumps(payload, indent=2) + "\n")
    _emit(args, payload, f"after step 1: {list(r.step1.layers)}\nafter step 2: {list(r.step2.layers)} ({r.step2.passes} passes)")
    return 0


def cmd_regions(args) -> int:
    p = _profile(args)
    table = _table(args, p)
    if args.out:
        table.save(args.out)
    _emit(args, table.to_dict(), _fmt_table(table))
    return 0


def cmd_select(args) -> int:
    p = _profile(args)
    if args.theta is not None:
        res = resource_for_operating_point(args.theta)
    elif None not in (args.fk, args.fs, args.rate):
        res = ResourceState(args.fk, args.fs, args.rate)
    else:
        raise ValueError("give either --theta or all of --fk, --fs, --R")
    strategy = SelectorKind.parse(args.strategy)
    if strategy.kind == "ocla":
        layer = select_cut_layer(_table(args, p), res)
    elif strategy.kind == "exhaustive":
        layer = exhaustive_optimal(p, res, TrainingConfig(dataset_size=args.dk, batch_size=args.bk))[0]
    else:
        layer = naive_select(strategy, p)
    payload = {"strategy": str(strategy), "layer": layer, "theta": res.operating_point}
    _emit(args, payload, str(layer))
    return 0


def cmd_calibrate(args) -> int:
    p = _profile(args)
    fk = calibrate_client_speed(_table(args, p), args.layer, args.mean_rate, args.mean_speed_gap)
    _emit(args, {"layer": args.layer, "client_speed": fk}, f"{fk:.6g}")
    return 0


def cmd_mc_gain(args) -> int:
    args.mean_rate = args.mean_rate or 20e6
    args.mean_speed_gap = args.mean_speed_gap or 0.03
    p = _profile(args)
    table = _table(args, p)
    fk = args.fk or calibrate_client_speed(table, args.calibrate_layer, args.mean_rate, args.mean_speed_gap)
    r_grid = parse_grid(args.r_grid or args.grid)
    b_grid = parse_grid(args.beta_grid or args.grid)
    cfg = MonteCarloConfig(
        client_speed=fk, iterations=args.iterations, samples=args.samples, r_cvs=r_grid, beta_cvs=b_grid,
        mean_rate=args.mean_rate, mean_speed_gap=args.mean_speed_gap, naive_layer=args.naive_layer,
        seed=_seed(args.seed), training=TrainingConfig(dataset_size=args.dk, batch_size=args.bk),
    )
    surface = run_gain_grid(p, table, cfg, workers=args.workers)
    if args.out:
        _write(args.out, surface.to_csv())
    if args.plot:
        plots.plot_gain_surface(surface, Path(args.plot) / "gain_surface.png")
    payload = {"client_speed": fk, "rejections": int(surface.rejections.sum()), "cells": surface.rows()}
    if args.out:
        g = surface.gain
        text = (f"{g.size} cells written to {args.out}; gain min {g.min():.4g}, max {g.max():.4g}; "
                f"client speed {fk:.6g} FLOP/s")
    else:
        text = surface.to_csv().rstrip()
    _emit(args, payload, text)
    return 0


def cmd_simulate(args) -> int:
    p = _profile(args)
    overrides = {k: v for k, v in {"r_cv": args.r_cv, "beta_cv": args.beta_cv, "mean_rate": args.mean_rate,
                                   "mean_speed_gap": args.mean_speed_gap}.items() if v is not None}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        base = Path(args.config).parent
    else:
        doc = {"training": {}, "resources": {"kind": "sampled"}}
        base = None
    training = doc.setdefault("training", {})
    for key, val in (("n_rounds", args.rounds), ("n_clients", args.clients), ("dataset_size", args.dk_sim),
                     ("batch_size", args.bk_sim), ("batch_mode", args.batch_mode)):
        if val is not None:
            training[key] = val
    if args.seed is not None:
        doc["seed"] = args.seed
    if doc.get("resources", {}).get("kind", "sampled") == "sampled":
        doc["resources"] = {**doc.get("resources", {}), **overrides}
        if args.fk:
            doc["resources"]["client_speed"] = args.fk

    base_cfg = load_simulation_config(doc, base, mc_defaults={"client_speed": 1.0})
    tc = base_cfg.training
    table = _table(args, p, tc.effective_dataset_size)
    if isinstance(base_cfg.resources, SampledResources) and not doc["resources"].get("client_speed"):
        fk = calibrate_client_speed(table, args.calibrate_layer, base_cfg.resources.mc.mean_rate,
                                    base_cfg.resources.mc.mean_speed_gap)
        base_cfg = replace(base_cfg, resources=replace(base_cfg.resources, mc=replace(base_cfg.resources.mc, client_speed=fk)))

    selectors = [SelectorKind.parse(s) for s in (args.selector or [doc.get("selector", "ocla")])]
    timelines = [simulate_training(p, table, replace(base_cfg, selector=s)) for s in selectors]

    trace = load_loss_trace(args.loss_trace) if args.loss_trace else None
    curves = {tl.selector: attach_loss_trace(tl, trace) for tl in timelines} if trace else {}

    if args.out:
        out = Path(args.out)
        for tl in timelines:
            target = out if len(timelines) == 1 else out.with_name(f"{out.stem}.{tl.selector.replace(':', '-')}{out.suffix}")
            _write(target, tl.to_csv())
            if curves:
                rows = ["seconds,loss,accuracy"] + [f"{s!r},{l!r},{a!r}" for s, l, a in curves[tl.selector]]
                _write(target.with_name(target.stem + ".curve.csv"), "\n".join(rows) + "\n")
    if args.plot:
        plots.plot_timelines(timelines, Path(args.plot) / "cumulative_delay.png")
        if curves:
            plots.plot_loss_curves(curves, Path(args.plot) / "loss_vs_time.png")
            plots.plot_loss_curves(curves, Path(args.plot) / "accuracy_vs_time.png", column=2, ylabel="training accuracy")

    payload = {tl.selector: {"total_seconds": tl.total, "round_cumulative": tl.round_cumulative().tolist()} for tl in timelines}
    text = "\n".join(f"{tl.selector:>12}: {tl.total:.6g} s over {len(tl.events)} epochs" for tl in timelines)
    _emit(args, payload, text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--arch", help="architecture JSON (default: bundled 8-layer 1-D CNN)")
    common.add_argument("--dk", type=int, default=9992, help="client dataset size in samples")
    common.add_argument("--bk", type=int, default=100, help="batch size")
    common.add_argument("--scalar-bits", type=int, default=32)
    common.add_argument("--mac-flops", type=int, default=2, help="FLOPs per multiply-add")
    common.add_argument("--activation-flops", type=int, default=0, help="FLOPs per activation output")
    common.add_argument("--table", help="region table JSON to use instead of rebuilding")
    common.add_argument("--db", help="region-table store (JSON) to read from and populate")
    common.add_argument("--out", help="write CSV/JSON result here")
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="splitpoint", description="Cut-layer optimisation for split learning")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("profile", parents=[common], help="per-layer FLOPs, activations, parameters")
    sp.add_argument("--plot", metavar="DIR")
    sp.set_defaults(func=cmd_profile)

    sp = sub.add_parser("prune", parents=[common], help="candidate cut layers after both pruning steps")
    sp.set_defaults(func=cmd_prune)

    sp = sub.add_parser("regions", parents=[common], help="split-region table")
    sp.set_defaults(func=cmd_regions)

    sp = sub.add_parser("select", parents=[common], help="pick the cut layer for given resources")
    sp.add_argument("--strategy", default="ocla", help="ocla | exhaustive | naive:<layer>")
    sp.add_argument("--theta", type=float, help="operating point in bits/FLOP")
    sp.add_argument("--fk", type=float, help="client FLOP/s")
    sp.add_argument("--fs", type=float, help="server FLOP/s")
    sp.add_argument("--R", dest="rate", type=float, help="link rate in bit/s")
    sp.set_defaults(func=cmd_select)

    mc_opts = argparse.ArgumentParser(add_help=False)
    mc_opts.add_argument("--fk", type=float, help="client FLOP/s (default: calibrated)")
    mc_opts.add_argument("--calibrate-layer", type=int, default=3, help="layer whose region the mean operating point targets")
    mc_opts.add_argument("--mean-rate", type=float, help="mean link rate, bit/s (default 20e6)")
    mc_opts.add_argument("--mean-speed-gap", type=float, help="mean of client/server speed ratio (default 0.03)")
    mc_opts.add_argument("--plot", metavar="DIR")

    sp = sub.add_parser("simulate", parents=[common, mc_opts], help="sequential multi-client training timeline")
    sp.add_argument("--config", help="simulation config JSON")
    sp.add_argument("--selector", action="append", help="ocla | exhaustive | naive:<layer>; repeat to compare")
    sp.add_argument("--rounds", type=int)
    sp.add_argument("--clients", type=int)
    sp.add_argument("--dataset-size", dest="dk_sim", type=int)
    sp.add_argument("--batch-size", dest="bk_sim", type=int)
    sp.add_argument("--batch-mode", choices=["ceil", "exact"])
    sp.add_argument("--r-cv", type=float)
    sp.add_argument("--beta-cv", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--loss-trace", help="CSV epoch,loss,accuracy measured elsewhere")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("mc-gain", parents=[common, mc_opts], help="Monte Carlo gain surface over cv grid")
    sp.add_argument("--grid", default="0.01:0.5:10", help="lo:hi:n or comma list, used for both axes")
    sp.add_argument("--r-grid")
    sp.add_argument("--beta-grid")
    sp.add_argument("--iterations", type=int, default=200)
    sp.add_argument("--samples", type=int, default=300)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--naive-layer", type=int, default=3)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_mc_gain)

    sp = sub.add_parser("calibrate-fk", parents=[common], help="client speed centring the mean operating point in a region")
    sp.add_argument("--layer", type=int, default=3)
    sp.add_argument("--mean-rate", type=float, default=20e6)
    sp.add_argument("--mean-speed-gap", type=float, default=0.03)
    sp.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"splitpoint {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
