"""Score assignments and see which constraint each bad one breaks.

One elephant AP (10 Mb/s) and one mouse AP (50 kb/s), three terminals:
a video viewer and two messaging users.
"""

import numpy as np

from apalloc.model import Assignment, Problem, is_feasible, total_fitness

q = np.array([[0.020, 0.000],    # video viewer only reaches the elephant AP
              [0.018, 0.022],    # messaging user sees both
              [0.015, 0.021]])
rate = np.array([2.58e6, 12.58e3, 12.58e3])
problem = Problem(q, rate, elephant=[True, False, False], ap_elephant=[True, False],
                  capacity=[10e6, 50e3], tau=0.01)

candidates = {
    "everyone where they belong": [0, 1, 1],
    "messaging user escapes to the elephant AP": [0, 0, 1],
    "video on the mouse AP": [1, 1, 1],
    "nobody connected": [-1, -1, -1],
}
for label, ap in candidates.items():
    a = Assignment(np.array(ap))
    check = is_feasible(a, problem)
    status = "ok" if check else "violates " + ", ".join(sorted(check.constraints()))
    print(f"{label:45s} fitness {total_fitness(a, q, rate):10.2f}  {status}")
