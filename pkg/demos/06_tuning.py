"""How much a warm start from the previous tick buys within a small budget."""

from apalloc.sim.io import load_experiment
from apalloc.sim.tuning import capture_instances, sweep

exp = load_experiment("bundled:pre5g")
seed = exp.seeds[0]
instances = capture_instances(exp.build(seed), exp.controller, seed, every=10)
points = sweep(instances, ["empty", "previous"], [0, 1, 2, 5, 10, 20, 40], seed)
top = max(p.mean_fitness for p in points)
print(f"{len(instances)} decisions sampled from seed {seed}")
for p in points:
    bar = "#" * int(40 * p.mean_fitness / top)
    print(f"{p.init_mode:8s} {p.iterations:3d} iterations {p.mean_fitness / top:7.4f} {bar}")
