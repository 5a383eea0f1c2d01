"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import logging
import sys

from . import config as cfgmod
from . import experiments
from .errors import ConfigError, DecompositionError, NumericalError, SaturationError

log = logging.getLogger("copulatail")


def _parser():
    p = argparse.ArgumentParser(prog="copulatail",
                                description="Rare-event importance sampling experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run an experiment and write CSV/JSON")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output prefix (overrides the config)")
    r.add_argument("--format", choices=("csv", "json", "both"), default="both")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    t = sub.add_parser("rates", help="theoretical second-moment rates only")
    t.add_argument("config")
    t.add_argument("-o", "--output", help="write CSV/JSON here instead of stdout")
    d = sub.add_parser("discover", help="dominating-point discovery only; prints JSON")
    d.add_argument("config")
    d.add_argument("-o", "--output", help="write the JSON to this file")
    return p


def _print_csv(res):
    print(",".join(res.columns))
    for row in res.rows:
        print(",".join(experiments._csv_cell(row.get(c, "")) for c in res.columns))


def _run(args):
    raw = cfgmod.load(args.config)
    if args.verb == "validate":
        cfg = cfgmod.validate(raw)
        print(f"ok: {cfg['experiment']} config, hash {cfgmod.config_hash(raw)}")
        return 0
    if args.verb == "rates":
        res = experiments.rates_table(raw)
        if args.output:
            for path in experiments.emit(res, args.output):
                print(path)
        else:
            _print_csv(res)
        return 0
    if args.verb == "discover":
        text = experiments.to_json(experiments.discover(raw))
        if args.output:
            with open(args.output, "w") as fh:
                fh.write(text)
            print(args.output)
        else:
            sys.stdout.write(text)
        return 0
    res = experiments.run_experiment(raw)
    prefix = args.output or res.config["output"]
    formats = ("csv", "json") if args.format == "both" else (args.format,)
    for path in experiments.emit(res, prefix, formats):
        print(path)
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return _run(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (NumericalError, SaturationError, DecompositionError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
