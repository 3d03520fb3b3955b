"""Command line: ``codesign {gen,fit-analytic,train,eval,sweep,report}``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 partial sweep failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .bundle import load_bundle, save_bundle
from .codec import codec_bundle, codec_from_bundle
from .errors import ConfigError, DivergenceError, ParseError, SolverError
from .forecaster import forecaster, load_model, save_model
from .scenarios import NAMES, builtin, load_scenario
from .timeseries import save_csv

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PARTIAL = 0, 2, 3, 4
log = logging.getLogger("codesign")


def parse_int_list(text):
    """``"1,2,5-8"`` -> [1, 2, 5, 6, 7, 8]."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty list {text!r}")
    return out


def parse_float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _common(p):
    p.add_argument("--scenario", choices=NAMES, default="lqr-mpc")
    p.add_argument("--config", help="scenario JSON overriding the builtin")
    p.add_argument("--seed", type=int, default=None, help="data and initialization seed (default 0)")
    p.add_argument("--out-dir", default="runs")
    p.add_argument("-v", "--verbose", action="store_true")


def _scheme(p, many=False):
    if many:
        p.add_argument("--scheme", default=",".join(harness.SCHEMES),
                       help="comma-separated subset of " + ", ".join(harness.SCHEMES))
        p.add_argument("--z", type=parse_int_list, default=[1, 2, 3, 4, 5, 6, 7, 8, 9, 10])
        p.add_argument("--lambda", dest="lam", type=parse_float_list, default=[harness.DEFAULT_WEIGHT])
    else:
        p.add_argument("--scheme", choices=harness.SCHEMES, default="task-aware")
        p.add_argument("--z", type=int, default=4)
        p.add_argument("--lambda", dest="lam", type=float, default=None)


def build_parser():
    ap = argparse.ArgumentParser(prog="codesign", description="Task-aware forecast compression for MPC.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", help="write train/test series as CSV")
    _common(p)

    p = sub.add_parser("fit-analytic", help="closed-form codec on the training series")
    _common(p)
    _scheme(p)

    p = sub.add_parser("train", help="train a forecaster against the fixed controller")
    _common(p)
    _scheme(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--loss", choices=("total", "surrogate"))
    p.add_argument("--unroll", action="store_true")

    p = sub.add_parser("eval", help="evaluate a saved codec or model on the test series")
    _common(p)
    p.add_argument("--model", required=True, help="codec bundle (.txt) or checkpoint (.npz)")
    p.add_argument("--scheme", choices=harness.SCHEMES, default="task-aware")
    p.add_argument("--lambda", dest="lam", type=float, default=None)

    p = sub.add_parser("sweep", help="cross product of schemes, Z, lambda and seeds")
    _common(p)
    _scheme(p, many=True)
    p.add_argument("--seeds", type=parse_int_list)
    p.add_argument("--epochs", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--keep-rollouts", action="store_true")

    p = sub.add_parser("report", help="summarize a sweep directory")
    p.add_argument("--out-dir", default="runs")
    p.add_argument("--tolerance", type=float, default=0.05)
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _spec(args):
    if getattr(args, "config", None):
        spec = load_scenario(args.config)
    else:
        spec = builtin(args.scenario)
    if args.seed is not None:
        spec = spec.with_(generator=replace(spec.generator, seed=args.seed))
    args.seed = spec.generator.seed
    return spec


def cmd_gen(args):
    spec = _spec(args)
    out = Path(args.out_dir)
    for split in ("train", "test"):
        save_csv(spec.data(split), out / split)
    spec.save(out / "scenario.json")
    print(f"wrote {out}/train, {out}/test and scenario.json")
    return EXIT_OK


def _cell_json(cell, out, name):
    out.mkdir(parents=True, exist_ok=True)
    rep = harness.MetricsReport([cell])
    (out / name).write_text(rep.to_json())
    return rep


def cmd_fit(args):
    spec = _spec(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    codec = harness.fit_codec(spec, args.scheme, args.z, args.lam)
    path = out / f"codec_{args.scheme}_Z{args.z}.txt"
    save_bundle(codec_bundle(codec), path)
    harness.write_spectrum_csv(codec, out / f"spectrum_{args.scheme}_Z{args.z}.csv")
    cell = harness.run_experiment(spec, args.scheme, args.z, args.lam, args.seed, analytic=True)
    _cell_json(cell, out, f"fit_{args.scheme}_Z{args.z}.json")
    print(f"{path}: cost {cell.mean_cost:.6g} (baseline {cell.baseline:.6g}, ratio {cell.ratio:.4f}), "
          f"gain {cell.gain:g}x")
    return EXIT_OK


def cmd_train(args):
    spec = _spec(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        model, tlog = harness.train_model(spec, args.scheme, args.z, args.lam, args.seed, epochs=args.epochs,
                                          lr=args.lr, loss_kind=args.loss, unroll=args.unroll,
                                          logger=log.info, log_every=10)
    except DivergenceError as exc:
        if exc.model is not None:
            save_model(exc.model, out / "last_good.npz")
        raise SolverError(str(exc)) from exc
    path = out / f"model_{args.scheme}_Z{args.z}.npz"
    save_model(model, path)
    tlog.save(out / f"trainlog_{args.scheme}_Z{args.z}.csv")
    print(f"{path}: final loss {tlog.loss[-1]:.6g}")
    return EXIT_OK


def cmd_eval(args):
    spec = _spec(args)
    out = Path(args.out_dir)
    path = Path(args.model)
    lam = harness.scheme_lambda(args.scheme, args.lam)
    if path.suffix == ".npz":
        model = load_model(path)
        Z, fc = model.Z, forecaster(model)
        cell = harness.CellResult(spec.name, args.scheme, Z, lam, args.seed, harness.compression_gain(spec.p, spec.H, Z))
        harness.evaluate_forecaster(spec, fc, seed=args.seed, cell=cell)
    else:
        codec = codec_from_bundle(load_bundle(path))
        Z = codec.Z
        cell = harness.CellResult(spec.name, args.scheme, Z, lam, args.seed, harness.compression_gain(spec.p, spec.H, Z))
        if spec.evaluation == "full-horizon":
            harness.evaluate_full_horizon(spec, codec, cell=cell)
        else:
            harness.evaluate_forecaster(spec, harness.codec_forecaster(codec, spec.p), seed=args.seed, cell=cell)
    _cell_json(cell, out, f"eval_{path.stem}.json")
    print(f"cost {cell.mean_cost:.6g} baseline {cell.baseline:.6g} ratio {cell.ratio:.4f}")
    return EXIT_OK


def cmd_sweep(args):
    spec = _spec(args)
    schemes = [s.strip() for s in args.scheme.split(",") if s.strip()]
    for s in schemes:
        harness.scheme_lambda(s, 1.0)
    seeds = args.seeds or [args.seed]
    out = Path(args.out_dir)
    rep = harness.sweep(spec, args.z, args.lam, schemes, seeds, workers=args.workers,
                        out_dir=out if args.keep_rollouts else None, epochs=args.epochs, logger=log.info)
    rep.save(out)
    if not args.no_plots:
        from .plots import write_report_plots

        write_report_plots(rep, out)
    _print_min_z(rep)
    if rep.failed:
        for c in rep.failed:
            print(f"FAILED {c.scheme} Z={c.Z} seed={c.seed}: {c.error}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _print_min_z(rep, tolerance=0.05):
    for label, z in sorted(harness.report_min_z(rep, tolerance).items()):
        print(f"min Z within {tolerance:.0%}: {label}: {z}")


def cmd_report(args):
    rep = harness.load_report(args.out_dir)
    print("scheme,Z,lambda,seed,gain,mean_cost,baseline,ratio")
    for c in rep.ok_cells():
        print(f"{c.scheme},{c.Z},{c.lambda_f},{c.seed},{c.gain:g},{c.mean_cost:.6g},{c.baseline:.6g},{c.ratio:.4f}")
    _print_min_z(rep, args.tolerance)
    if not args.no_plots:
        from .plots import write_report_plots

        write_report_plots(rep, args.out_dir)
    return EXIT_PARTIAL if rep.failed else EXIT_OK


COMMANDS = {"gen": cmd_gen, "fit-analytic": cmd_fit, "train": cmd_train, "eval": cmd_eval,
            "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except (ConfigError, ParseError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
