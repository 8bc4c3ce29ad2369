"""Compare both optimizers against the brute-force oracle on a few K=2 draws."""
import sys

from wpifc import default_config, draw_channels, grid_oracle, run_maxmin, run_sum_throughput
from wpifc.oracle import EmptyFeasibleSet
from wpifc.rate import build_coefficients, throughput

n = int(sys.argv[1]) if len(sys.argv) > 1 else 3
cfg = default_config(2)
seed, done = 0, 0
while done < n:
    ch = draw_channels(cfg, seed)
    coeffs = build_coefficients(ch, cfg, "perfect")
    for problem, fn, red in (("sum", run_sum_throughput, sum), ("maxmin", run_maxmin, min)):
        try:
            ref, ref_d = grid_oracle(cfg, ch, problem)
        except EmptyFeasibleSet:
            print(f"seed {seed}: infeasible draw, skipped")
            break
        d, _ = fn(cfg, ch)
        val = red(throughput(d.p, d.tau, coeffs))
        print(f"seed {seed} {problem:6s} ours={val:.6f} oracle={ref:.6f} "
              f"rel={abs(val - ref) / ref:.1e} tau={d.tau:.5f}/{ref_d.tau:.5f}")
    else:
        done += 1
    seed += 1
