"""Run all five policies over a few seeds of the bundled pre-5G scenario.

Takes a minute or so; the CLI's `apalloc compare` does the same over ten
seeds in parallel.
"""

import numpy as np

from apalloc.sim import run
from apalloc.sim.io import load_experiment

exp = load_experiment("bundled:pre5g")
seeds = exp.seeds[:3]
print(f"{'policy':12s} {'loss %':>8s} {'handovers':>10s} {'ms each':>8s}")
for policy in ("real", "predicted", "distributed", "terminal", "closest"):
    ms = [run(exp.build(s), policy, exp.controller, seed=s) for s in seeds]
    print(f"{policy:12s} {np.mean([m.loss_percent for m in ms]):8.2f} "
          f"{np.mean([m.handover_count for m in ms]):10.1f} {ms[0].mean_handover_ms:8.1f}")
