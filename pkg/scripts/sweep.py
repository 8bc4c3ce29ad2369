"""Run one of the standard studies and print the ensemble means.

    python3 scripts/sweep.py pmax-sweep --seeds 20 --out results/pmax
    python3 scripts/sweep.py rho-sweep --problem maxmin --evaluation expected --out results/rho
"""
import argparse

from wpifc.experiments import KINDS, Experiment, run_experiment
from wpifc.model import default_config, load_config


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--problem", default="sum", choices=("sum", "maxmin"))
    ap.add_argument("--evaluation", default="truth", choices=("truth", "expected"))
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else default_config()
    exp = Experiment(args.kind, cfg, seeds=tuple(range(args.seeds)), out=args.out,
                     problem=args.problem, evaluation=args.evaluation)
    _, summary = run_experiment(exp)
    print(f"{'point':>10} {'variant':>10} {'runs':>5} {'objective':>12} {'tau':>8} {'loss':>8}")
    for s in summary:
        obj = s["mean_objective"]
        tau = s["mean_tau"]
        loss = s["mean_loss"]
        print(f"{str(s['point_value']):>10} {s['variant']:>10} {s['runs']:>5} "
              f"{obj if obj is None else f'{obj:12.5f}':>12} {tau if tau is None else f'{tau:8.4f}':>8} "
              f"{'' if loss is None else f'{loss:8.4f}':>8}")


if __name__ == "__main__":
    main()
