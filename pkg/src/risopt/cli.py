"""Command-line entry point: ``risopt {convergence,angle-sweep,beampattern,calibrate}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import re
import sys

import numpy as np

from risopt.errors import RisError
from risopt.experiments import (
    ANGLE_GRIDS,
    EXPERIMENTS,
    PRESETS,
    VARIANTS,
    ExperimentConfig,
    load_config,
    run,
)
from risopt.evaluator import SNR_REFERENCES


_PI_TERM = re.compile(r"^(?P<num>[0-9.]*)\*?pi(?:/(?P<den>[0-9.]+))?$")


def _number(item: str) -> float:
    try:
        return float(item)
    except ValueError:
        pass
    match = _PI_TERM.match(item.replace(" ", ""))
    if not match:
        raise argparse.ArgumentTypeError(f"not a number: {item!r}")
    num = float(match["num"]) if match["num"] else 1.0
    den = float(match["den"]) if match["den"] else 1.0
    return num * math.pi / den


def _floats(text: str) -> tuple[float, ...]:
    """Comma-separated numbers; multiples of pi such as ``pi/8`` or ``3pi/8`` are accepted."""
    out = tuple(_number(item.strip()) for item in text.split(",") if item.strip())
    if not out:
        raise argparse.ArgumentTypeError("expected at least one value")
    return out


def _variants(text: str) -> tuple[str, ...]:
    items = tuple(v.strip() for v in text.split(",") if v.strip())
    bad = [v for v in items if v not in VARIANTS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown variants {bad}; choose from {VARIANTS}")
    return items


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors are also reported as a JSON line."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(json.dumps({"status": "error", "type": "UsageError", "message": message}),
              file=sys.stderr)
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="risopt", description=__doc__)
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", help="JSON config file; command-line flags override it")
        p.add_argument("--preset", choices=PRESETS)
        p.add_argument("--dx", type=_floats, help="RIS spacings in wavelengths, e.g. 0.5,0.25")
        p.add_argument("--sigma", type=_floats, help="position uncertainty radii in metres")
        p.add_argument("--variants", type=_variants, help=f"subset of {','.join(VARIANTS)}")
        p.add_argument("--trials", type=int, help="Monte Carlo trials per rate point")
        p.add_argument("--csi-realizations", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--interferer-grid", choices=ANGLE_GRIDS)
        p.add_argument("--interferer-angles", type=_floats, help="explicit angles (rad)")
        p.add_argument("--max-iterations", type=int)
        p.add_argument("--epsilon", type=float, help="trust radius")
        p.add_argument("--n-starts", type=int)
        p.add_argument("--snr-reference", choices=SNR_REFERENCES)
        p.add_argument("--snr-db", type=float)
        p.add_argument("--workers", type=int)
        p.add_argument("--cache-dir")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


_FLAG_FIELDS = ("preset", "dx", "sigma", "variants", "trials", "csi_realizations", "seed", "out",
                "interferer_grid", "interferer_angles", "max_iterations", "epsilon", "n_starts",
                "snr_reference", "snr_db", "workers", "cache_dir")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base = load_config(args.scenario) if args.scenario else ExperimentConfig()
    changes = {"experiment": args.experiment}
    for name in _FLAG_FIELDS:
        value = getattr(args, name)
        if value is not None:
            changes[name] = value
    return dataclasses.replace(base, **changes)


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if not isinstance(getattr(obj, f.name), np.ndarray)}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        result = run(config)
    except (RisError, ValueError, OSError) as exc:
        print(json.dumps({"status": "error", "type": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2
    print(json.dumps({"status": "ok", "experiment": config.experiment, "out": config.out,
                      "result": _jsonable(result)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
