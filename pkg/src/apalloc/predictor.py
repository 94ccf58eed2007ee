"""Per-terminal Markov chain over flow types.

Each observed succession a -> b in a terminal's flow history adds one unit
to the edge weight w[a -> b]. The next flow type is the heaviest outgoing
edge of the terminal's last flow type, ties going to the lowest class id.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .history import FlowHistoryStore
from .model import FlowType


@dataclass(frozen=True)
class RandomUnderOver:
    """Resample successions so every next-class count equals the median."""

    seed: int = 0


class Prediction(NamedTuple):
    flow_type: FlowType
    expected_rate: float


@dataclass(frozen=True)
class TransitionChain:
    weights: Mapping[int, Mapping[tuple[int, int], int]]
    last_flow_type: Mapping[int, int]
    flow_types: Mapping[int, FlowType] = field(default_factory=dict)
    pooled: Mapping[tuple[int, int], int] = field(default_factory=dict)

    def weight(self, terminal: int, a: int, b: int) -> int:
        return self.weights.get(terminal, {}).get((a, b), 0)

    def outgoing(self, terminal: int | None, a: int) -> dict[int, int]:
        w = self.pooled if terminal is None else self.weights.get(terminal, {})
        return {b: c for (src, b), c in w.items() if src == a}

    def terminals(self) -> list[int]:
        return sorted(set(self.weights) | set(self.last_flow_type))

    def scaled(self, factor: int) -> "TransitionChain":
        """Copy with every weight multiplied by ``factor``."""
        return TransitionChain(
            {t: {k: v * factor for k, v in w.items()} for t, w in self.weights.items()},
            dict(self.last_flow_type), self.flow_types,
            {k: v * factor for k, v in self.pooled.items()})

    def dump(self, fh: IO[str]):
        """Tab-separated edge list; last flow types as ``#last`` lines."""
        fh.write("terminal\tfrom\tto\tweight\n")
        for t in sorted(self.weights):
            for (a, b), w in sorted(self.weights[t].items()):
                fh.write(f"{t}\t{a}\t{b}\t{w}\n")
        for t, a in sorted(self.last_flow_type.items()):
            fh.write(f"#last\t{t}\t{a}\n")

    @classmethod
    def load(cls, fh: IO[str], flow_types: Iterable[FlowType] = ()) -> "TransitionChain":
        weights: dict[int, dict[tuple[int, int], int]] = {}
        last: dict[int, int] = {}
        for n, line in enumerate(fh):
            parts = line.rstrip("\n").split("\t")
            if n == 0 and parts[0] == "terminal" or not line.strip():
                continue
            if parts[0] == "#last":
                last[int(parts[1])] = int(parts[2])
                continue
            t, a, b, w = map(int, parts)
            weights.setdefault(t, {})[(a, b)] = w
        return cls(weights, last, {f.id: f for f in flow_types}, _pool(weights))


def _pool(weights) -> dict[tuple[int, int], int]:
    pooled: Counter = Counter()
    for w in weights.values():
        pooled.update(w)
    return dict(sorted(pooled.items()))


def balance_successions(pairs: Sequence[tuple[int, int]], rng: np.random.Generator) -> list[tuple[int, int]]:
    """Under-sample majority and over-sample minority next-classes to the median count."""
    if not pairs:
        return []
    by_class: dict[int, list[int]] = {}
    for k, (_, b) in enumerate(pairs):
        by_class.setdefault(b, []).append(k)
    target = max(1, int(round(float(np.median([len(v) for v in by_class.values()])))))
    chosen: list[int] = []
    for b in sorted(by_class):
        idx = np.asarray(by_class[b])
        if len(idx) > target:
            chosen.extend(rng.choice(idx, size=target, replace=False).tolist())
        elif len(idx) < target:
            chosen.extend(idx.tolist())
            chosen.extend(rng.choice(idx, size=target - len(idx), replace=True).tolist())
        else:
            chosen.extend(idx.tolist())
    return [pairs[k] for k in sorted(chosen)]


def successions(sequence: Sequence[int]) -> list[tuple[int, int]]:
    return list(zip(sequence[:-1], sequence[1:]))


def train(history: FlowHistoryStore | Mapping[int, Sequence[int]],
          balance: RandomUnderOver | None = None,
          flow_types: Iterable[FlowType] = ()) -> TransitionChain:
    """Count successions per terminal, optionally after class balancing.

    ``history`` is either a flow store or a plain ``{terminal: [types]}`` map.
    Balancing draws from a generator seeded by (seed, terminal), so a
    terminal's chain does not depend on which other terminals are trained.
    """
    if isinstance(history, FlowHistoryStore):
        seqs = {t: history.sequence(t) for t in history.terminals()}
    else:
        seqs = {int(t): list(s) for t, s in history.items()}
    weights: dict[int, dict[tuple[int, int], int]] = {}
    last: dict[int, int] = {}
    for t in sorted(seqs):
        seq = seqs[t]
        if not seq:
            continue
        pairs = successions(seq)
        if balance is not None:
            pairs = balance_successions(pairs, np.random.default_rng([balance.seed, t]))
        weights[t] = dict(sorted(Counter(pairs).items()))
        last[t] = seq[-1]
    return TransitionChain(weights, last, {f.id: f for f in flow_types}, _pool(weights))


def _argmax(out: Mapping[int, int]) -> int | None:
    if not out:
        return None
    best = max(out.values())
    return min(b for b, w in out.items() if w == best)


def next_type(chain: TransitionChain, terminal: int, last: int | None = None,
              use_pooled: bool = False) -> int | None:
    """Most likely next class id, or None when the chain has nothing to say."""
    if last is None:
        last = chain.last_flow_type.get(terminal)
    if last is None:
        return None
    b = _argmax(chain.outgoing(terminal, last))
    if b is None and use_pooled:
        b = _argmax(chain.outgoing(None, last))
    return b


def fallback_type(flow_types: Iterable[FlowType]) -> FlowType:
    """Cold-start guess: the mouse class with the smallest mean rate."""
    mice = [f for f in flow_types if not f.is_elephant]
    if not mice:
        raise ValueError("no mouse flow type to fall back on")
    return min(mice, key=lambda f: (f.mean_rate, f.id))


def expected_rate(flow_type: FlowType, history: FlowHistoryStore | None) -> float:
    avg = history.average_rate(flow_type.id) if history is not None else None
    return flow_type.mean_rate if avg is None else avg


def predict_next(chain: TransitionChain, terminal: int, history: FlowHistoryStore | None = None,
                 last: int | None = None, use_pooled: bool = False) -> Prediction | None:
    """Predicted next flow type with its expected rate; None if unknown.

    The rate comes from the history's class average when available, else
    from the flow type's nominal mean rate.
    """
    b = next_type(chain, terminal, last, use_pooled)
    if b is None:
        return None
    ft = chain.flow_types.get(b)
    if ft is None:
        raise KeyError(f"flow type {b} missing from chain.flow_types")
    return Prediction(ft, expected_rate(ft, history))


def f_score(chain: TransitionChain, sequence: Sequence[int], terminal: int | None = None,
            use_pooled: bool = False) -> tuple[dict[int, float], float]:
    """One-step-ahead F1 of the chain on a labelled sequence.

    Returns per-class F1 and their macro average over every class that
    occurs as an actual or predicted label. ``terminal=None`` scores the
    pooled chain.
    """
    pairs = successions(list(sequence))
    if not pairs:
        raise ValueError("test sequence needs at least one transition")
    preds = []
    for a, _ in pairs:
        if terminal is None:
            preds.append(_argmax(chain.outgoing(None, a)))
        else:
            preds.append(next_type(chain, terminal, a, use_pooled))
    actual = [b for _, b in pairs]
    classes = sorted(set(actual) | {p for p in preds if p is not None})
    per_class = {}
    for c in classes:
        tp = sum(1 for p, y in zip(preds, actual) if p == c and y == c)
        fp = sum(1 for p, y in zip(preds, actual) if p == c and y != c)
        fn = sum(1 for p, y in zip(preds, actual) if p != c and y == c)
        per_class[c] = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    return per_class, float(np.mean(list(per_class.values())))
