"""Closed-form codec sweep on lqr-mpc or lqr-full: report, plots and min-Z table.

    python scripts/run_lqr_sweep.py --scenario lqr-full --z 1-40 --seeds 0,1,2 --out runs/lqr_full
"""
import argparse
import logging

from codesign.cli import parse_int_list
from codesign.harness import report_min_z, sweep
from codesign.plots import write_report_plots
from codesign.scenarios import builtin


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", choices=("lqr-mpc", "lqr-full"), default="lqr-mpc")
    ap.add_argument("--z", type=parse_int_list, default=list(range(1, 31)))
    ap.add_argument("--seeds", type=parse_int_list, default=[0])
    ap.add_argument("--lambda", dest="lam", type=float, default=1.0)
    ap.add_argument("--n-test", type=int, help="override the number of test series")
    ap.add_argument("--out", default="runs/lqr_sweep")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    spec = builtin(args.scenario)
    if args.n_test:
        spec = spec.with_(n_test=args.n_test)
    rep = sweep(spec, args.z, [args.lam], seeds=args.seeds, out_dir=args.out, logger=logging.info)
    write_report_plots(rep, args.out)
    for label, z in sorted(report_min_z(rep).items()):
        print(f"{label}: min Z within 5% = {z}")


if __name__ == "__main__":
    main()
