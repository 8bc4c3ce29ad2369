"""One K=5 realization: sum and max-min designs side by side, with the outer trace."""
import sys

import numpy as np

from wpifc import default_config, draw_channels, run_maxmin, run_sum_throughput
from wpifc.rate import build_coefficients, throughput

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = default_config()
ch = draw_channels(cfg, seed)
coeffs = build_coefficients(ch, cfg, "perfect")

np.set_printoptions(precision=4, suppress=True)
for name, fn in (("sum", run_sum_throughput), ("max-min", run_maxmin)):
    design, trace = fn(cfg, ch)
    r = throughput(design.p, design.tau, coeffs)
    print(f"{name:8s} tau={design.tau:.4f}  sum={r.sum():.4f}  min={r.min():.4f}  rates={r}")
    print(f"         outer objective: {np.array(trace.objectives)}  ({trace.reason})")
