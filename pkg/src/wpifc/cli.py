"""Command-line entry point: ``simulate --config cfg.json --experiment pmax-sweep ...``."""
from __future__ import annotations

import argparse
import logging
import sys

from .experiments import KINDS, SUMMARY_COLUMNS, Experiment, run_experiment
from .model import ConfigError, default_config, load_config

log = logging.getLogger("wpifc")


def _points(text):
    if text is None:
        return None
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        try:
            out.append(int(tok) if tok.lstrip("-").isdigit() else float(tok))
        except ValueError:
            out.append(tok)
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="simulate", description=__doc__)
    ap.add_argument("--config", help="JSON config file (defaults to the built-in 5-pair setup)")
    ap.add_argument("--experiment", choices=KINDS, default="single")
    ap.add_argument("--seeds", type=int, default=1, help="ensemble size; seeds are 0..n-1 offset by --seed0")
    ap.add_argument("--seed0", type=int, default=0)
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--problem", choices=("sum", "maxmin"), default="sum")
    ap.add_argument("--eh", choices=("linear", "nonlinear"), default=None)
    ap.add_argument("--csi", choices=("perfect", "imperfect"), default="perfect")
    ap.add_argument("--baseline", action="store_true", help="also run the power-only baseline")
    ap.add_argument("--evaluation", choices=("truth", "expected"), default="truth",
                    help="how robust/non-robust designs are scored (true channels or average-sense model)")
    ap.add_argument("--points", help="comma-separated sweep points overriding the defaults")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config) if args.config else default_config()
        if args.seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        exp = Experiment(
            kind=args.experiment, config=cfg, seeds=tuple(range(args.seed0, args.seed0 + args.seeds)),
            out=args.out, problem=args.problem, eh=args.eh, csi=args.csi, baseline=args.baseline, evaluation=args.evaluation,
            points=_points(args.points),
        )
    except (ConfigError, ValueError, OSError) as err:
        print(f"simulate: {err}", file=sys.stderr)
        return 2
    rows, summary = run_experiment(exp)
    failures = sum(r["status"] != "ok" for r in rows)
    for s in summary:
        log.info(" ".join(f"{c}={s[c]}" for c in SUMMARY_COLUMNS))
    print(f"{len(rows)} runs ({failures} failed) written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
