"""Train one forecaster on a canned scenario and evaluate it on the test series.

    python scripts/train_scenario.py --scenario taxi --scheme task-aware --z 4 --epochs 200
"""
import argparse
import logging
from pathlib import Path

from codesign.forecaster import forecaster, save_model
from codesign.harness import CellResult, MetricsReport, compression_gain, evaluate_forecaster, scheme_lambda, \
    train_model
from codesign.scenarios import NAMES, builtin


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", choices=NAMES, default="taxi")
    ap.add_argument("--scheme", default="task-aware")
    ap.add_argument("--z", type=int, default=4)
    ap.add_argument("--lambda", dest="lam", type=float)
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/train")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    spec = builtin(args.scenario, seed=args.seed)
    model, log = train_model(spec, args.scheme, args.z, args.lam, args.seed, epochs=args.epochs, lr=args.lr,
                             logger=logging.info, log_every=25)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.npz")
    log.save(out / "trainlog.csv")
    lam = scheme_lambda(args.scheme, args.lam)
    cell = CellResult(spec.name, args.scheme, args.z, lam, args.seed, compression_gain(spec.p, spec.H, args.z))
    evaluate_forecaster(spec, forecaster(model), seed=args.seed, cell=cell)
    MetricsReport([cell]).save(out)
    print(f"test cost {cell.mean_cost:.6g}, baseline {cell.baseline:.6g}, ratio {cell.ratio:.4f}")


if __name__ == "__main__":
    main()
