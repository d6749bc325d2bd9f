"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 acceptance failure.
"""

import argparse
import json
import logging
import sys

import numpy as np

from .config import ConfigError, load_config
from .inversion import ProtocolError
from .process import DetailedBalanceError
from . import runner

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPT = 0, 2, 3, 4


def _parser():
    p = argparse.ArgumentParser(
        prog="dimerqpt",
        description="Polarization-controlled 2D photon-echo simulation and process tomography "
        "of an excitonic dimer.",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate spectra and write them to a directory")
    s.add_argument("--config", help="configuration file (defaults are used when omitted)")
    s.add_argument("--out", help="output directory (overrides [output] directory)")
    s.add_argument("--dry-run", action="store_true", help="validate and write the manifest only")
    s.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    s.add_argument("--ascii", action="store_true", help="print a text preview of one spectrum")

    i = sub.add_parser("invert", help="recover the dipole angle and chi from spectra")
    i.add_argument("--in", dest="in_dir", required=True, help="directory written by simulate")
    i.add_argument("--out", required=True, help="output directory")
    i.add_argument("--no-figures", action="store_true", help="skip PNG figures")

    t = sub.add_parser("stability", help="condition number of the inversion against angle")
    t.add_argument("--phi-min", type=float, default=0.0, help="radians")
    t.add_argument("--phi-max", type=float, default=float(np.pi), help="radians")
    t.add_argument("--steps", type=int, default=181)
    t.add_argument("--threshold", type=float, default=15.0)
    t.add_argument("--out", help="CSV path (stdout when omitted)")
    t.add_argument("--plot", help="optional PNG path")

    r = sub.add_parser("roundtrip", help="simulate, invert and check against the oracle")
    r.add_argument("--config", help="configuration file")
    r.add_argument("--out", help="also write the simulated data here")
    return p


def _run(args):
    if args.command == "simulate":
        cfg = load_config(args.config)
        man = runner.cmd_simulate(cfg, args.out, args.dry_run, not args.no_figures, args.ascii)
        print(f"wrote {man['output']['directory']}"
              + (" (dry run)" if args.dry_run else f" ({len(man['files'])} entries)"))
        return EXIT_OK

    if args.command == "invert":
        report = runner.cmd_invert(args.in_dir, args.out, not args.no_figures)
        print(f"phi = {report.phi_deg:.4f} deg, kappa = {report.reconstruction.kappa:.4g}")
        for f in report.flags:
            print(f"flag: {f}")
        return EXIT_OK

    if args.command == "stability":
        try:
            rows = runner.stability_table(args.phi_min, args.phi_max, args.steps, args.threshold)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        text = runner.write_stability(rows, args.out)
        if args.out is None:
            sys.stdout.write(text)
        if args.plot:
            from .plotting import plot_kappa

            plot_kappa([r[0] for r in rows], np.array([r[3] for r in rows]), args.plot,
                       args.threshold)
        return EXIT_OK

    if args.command == "roundtrip":
        cfg = load_config(args.config)
        res = runner.roundtrip(cfg, args.out)
        print(json.dumps(res, indent=2, default=runner._json_default))
        return EXIT_OK if runner.roundtrip_passed(res) else EXIT_ACCEPT
    raise AssertionError(args.command)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigError, DetailedBalanceError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProtocolError as exc:
        print(f"protocol failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
