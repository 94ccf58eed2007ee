"""Train the per-terminal flow chain and read its predictions."""

from apalloc.model import PRE5G_FLOW_TYPES
from apalloc.predictor import RandomUnderOver, f_score, predict_next, train

names = {f.id: f.name for f in PRE5G_FLOW_TYPES}
history = {
    1: [0, 5, 0, 5, 0, 5, 0, 5],          # video, then social, over and over
    2: [4, 4, 7, 4, 4, 7, 4],             # voip habit with some file syncing
    3: [2],                               # one flow only, no transitions yet
}
chain = train(history, flow_types=PRE5G_FLOW_TYPES)
for t in history:
    p = predict_next(chain, t)
    guess = "unknown" if p is None else f"{p.flow_type.name} at {p.expected_rate / 1e3:.1f} kb/s"
    print(f"terminal {t}: last {names[history[t][-1]]:16s} next -> {guess}")

# the pooled chain answers for terminal 3 from everybody else
p = predict_next(chain, 3, use_pooled=True)
print("terminal 3 with pooled fallback ->", None if p is None else p.flow_type.name)

per_class, macro = f_score(chain, [0, 5, 0, 5, 0], terminal=1)
print("F on an alternating test sequence:", macro)

balanced = train(history, RandomUnderOver(seed=3), PRE5G_FLOW_TYPES)
print("balanced weights for terminal 2:", dict(balanced.weights[2]))
