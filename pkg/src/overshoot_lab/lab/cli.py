"""``overshoot-lab`` command line.

Exit codes: 0 all criteria pass, 1 a criterion failed, 2 bad config,
3 step guard exhausted.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError, GuardExceeded
from .experiments import CATALOG
from .runner import EXIT_CONFIG, EXIT_GUARD, load, execute


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="overshoot-lab", description="Seeded experiments on overshoot Markov chains.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("--config", required=True, help="path to a JSON config (or an inline JSON object)")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--out", default=None, help="output directory")
    r.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("list", help="print the experiment catalog")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        width = max(len(k) for k in CATALOG)
        for name, exp in CATALOG.items():
            print(f"{name:<{width}}  {exp.claim}")
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load(args.config, args.seed, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, results = execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardExceeded as exc:
        print(f"guard exhausted: {exc}", file=sys.stderr)
        return EXIT_GUARD
    for c in results["criteria"]:
        mark = "PASS" if c["passed"] else "FAIL"
        print(f"{mark} {results['experiment']}.{c['name']} value={c['value']} threshold={c['threshold']}")
    print(f"results written to {cfg.out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
