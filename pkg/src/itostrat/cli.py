"""Command-line entry point: ``itostrat {simulate,converge,crossvar,corrector,validate}``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments as ex
from .config import load_config
from .errors import ConfigError, NonFiniteError

log = logging.getLogger("itostrat")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _parser():
    p = argparse.ArgumentParser(prog="itostrat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("simulate", "run both schemes and write diagnostics, final fields and a manifest"),
        ("converge", "dyadic strong-error table for the scheme pair"),
        ("crossvar", "bracket vs corrector-integral comparison table"),
        ("corrector", "assemble the conversion drift on the initial state"),
        ("validate", "sampled operator-hypothesis checks and the c_i^2 tail report"),
    ]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, metavar="PATH", help="experiment INI file")
        sp.add_argument("--seed", type=int, default=None, metavar="N", help="override the config seed")
        sp.add_argument("--workers", type=int, default=1, metavar="N", help="worker processes (output is identical)")
        sp.add_argument("--out", default=None, metavar="DIR", help="output directory (default: config 'out')")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _dispatch(args):
    cfg = load_config(args.config).with_overrides(seed=args.seed, out=args.out)
    out = cfg.out
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    if args.command == "simulate":
        res = ex.run_simulate(cfg, out, args.workers)
        print(f"wrote {len(res['artifacts'])} artifacts; manifest {res['manifest']}")
    elif args.command == "converge":
        res = ex.run_converge(cfg, out, args.workers)
        for dt, pair, err, slope in res["rows"]:
            print(f"{pair:20s} dt={dt:.3e}  error={err:.4e}  slope={slope:.3f}")
    elif args.command == "crossvar":
        res = ex.run_crossvar(cfg, out, args.workers)
        for s in res["summary"]:
            print(f"mode {s['mode']}: sup relative error {s['sup_relative_error']:.4e}, "
                  f"mismatch max |mean|/se {s['sup_mismatch_z']:.2f}")
    elif args.command == "corrector":
        res = ex.run_corrector(cfg, out)
        rep = res["report"]
        for i, v in enumerate(rep.mode_norms):
            print(f"summand {i}: {v:.6e}")
    else:
        res = ex.run_validate(cfg, out)
        for line in ex.tail_report_lines(res["report"]):
            print(line)
        if args.verbose:
            print(json.dumps(res["report"], indent=2, default=ex._json_default))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
