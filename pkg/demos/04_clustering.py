"""Split the bundled campus into AP clusters for the distributed controller."""

import numpy as np

from apalloc.cluster import kmeans, silhouette_select
from apalloc.sim import generate_scenario
from apalloc.sim.io import load_experiment

exp = load_experiment("bundled:pre5g")
sc = generate_scenario(exp.scenario.with_seed(1))
k, scores = silhouette_select(sc.ap_pos, range(2, 7))
for kk, s in scores.items():
    print(f"k={kk}: silhouette {s:.3f}{'  <- chosen' if kk == k else ''}")

res = kmeans(sc.ap_pos, k, seed=0)
for c in range(k):
    members = res.labels == c
    print(f"cluster {c}: {members.sum():3d} APs around ({res.centroids[c][0]:5.1f}, "
          f"{res.centroids[c][1]:5.1f}), {int((~sc.ap_elephant[members]).sum())} mouse APs")
print("inertia by Lloyd step:", np.round(res.inertia_history, 1))
