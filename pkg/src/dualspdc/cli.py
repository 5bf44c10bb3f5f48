"""Command-line entry point.

Exit codes: 0 success, 1 configuration or argument error, 2 phase-matching
non-convergence, 3 interferometer lock failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .config import load_config
from .errors import ConfigError, InvalidArgumentError, NoPhaseMatchError, SellmeierRangeError

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_LOCK = 0, 1, 2, 3

log = logging.getLogger("dualspdc")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="JSON config file (defaults to the packaged config)")
    p.add_argument("--seed", type=int, help="base seed for Monte Carlo runs")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and written files")
    p.add_argument("--analytic-only", action="store_true", help="skip Monte Carlo, closed-form values only")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="dualspdc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    fs = sub.add_parser("fringe-scan", parents=[common], help="coincidences versus analyzer-2 angle")
    fs.add_argument("--theta1", type=float, help="analyzer-1 angle in degrees")
    sub.add_parser("iris-sweep", parents=[common], help="visibility and flux versus iris diameter")
    sub.add_parser("tuning-sweep", parents=[common], help="signal/idler wavelengths versus temperature")
    bt = sub.add_parser("bell-test", parents=[common], help="CHSH S from 16 coincidence measurements")
    bt.add_argument("--duration", type=float, help="seconds per analyzer setting")
    bt.add_argument("--visibility", type=float, help="override the distinguishability parameter V")
    ls = sub.add_parser("lock-sim", parents=[common], help="side-lock time series of the pump interferometer")
    ls.add_argument("--duration", type=float, help="simulated seconds")
    return parser


def run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    out = args.out if args.out is not None else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if args.seed is None else args.seed

    if args.command == "fringe-scan":
        res = ex.fringe_scan(cfg, args.theta1, seed, args.analytic_only)
        paths = ex.write_fringe_scan(res, cfg, out)
        s = res.summary()
        log.info("visibility analytic %.4f, MC %s", s["visibility_analytic"], s["visibility_mc"])
    elif args.command == "iris-sweep":
        paths = ex.write_iris_sweep(ex.iris_sweep(cfg, seed, args.analytic_only), cfg, out)
    elif args.command == "tuning-sweep":
        res = ex.tuning_sweep(cfg, seed, args.analytic_only)
        paths = ex.write_tuning_sweep(res, cfg, out)
        if not res.all_converged:
            print("error: some tuning points did not converge (flagged in output)", file=sys.stderr)
            return EXIT_PHYSICS
    elif args.command == "bell-test":
        res = ex.bell_test(cfg, seed, args.analytic_only, args.duration, args.visibility)
        paths = ex.write_bell_test(res, cfg, out)
        if res.S is None:
            print(f"S (analytic) = {res.S_analytic:.4f}")
        else:
            print(f"S = {res.S:.4f} +/- {res.S_err:.4f} ({res.sigma_above_classical:.1f} sigma above 2)")
    elif args.command == "lock-sim":
        result, seed = ex.lock_sim(cfg, seed, args.duration)
        paths = ex.write_lock_sim(result, seed, cfg, out)
        print(f"residual phase RMS = {result.residual_rms:.4g} rad")
        if result.lock_failure:
            print("error: interferometer lock failed", file=sys.stderr)
            return EXIT_LOCK
    else:  # pragma: no cover - argparse enforces the choices
        raise AssertionError(args.command)

    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return run(args)
    except (ConfigError, InvalidArgumentError, SellmeierRangeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoPhaseMatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS


if __name__ == "__main__":
    sys.exit(main())
