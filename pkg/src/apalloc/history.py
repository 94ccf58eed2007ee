"""Controller-side flow and link-quality history.

``FlowHistoryStore`` keeps each terminal's past flows (type, start, end) and
running per-class average rates. ``PositionStore`` keeps the last reported
link quality of every terminal/AP pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import IO, Iterable, Iterator, Mapping

import numpy as np

from .model import LinkQuality


@dataclass(frozen=True)
class FlowRecord:
    terminal: int
    flow_type: int
    start_time: float
    end_time: float | None = None
    observed_mean_rate: float | None = None

    def __post_init__(self):
        if self.end_time is not None and self.end_time < self.start_time:
            raise ValueError(f"end_time {self.end_time} < start_time {self.start_time}")
        if self.observed_mean_rate is not None and self.observed_mean_rate < 0:
            raise ValueError("observed_mean_rate must be >= 0")

    @property
    def is_open(self) -> bool:
        return self.end_time is None

    def to_json(self) -> str:
        return json.dumps({
            "terminal": self.terminal,
            "flow_type": self.flow_type,
            "start_time": self.start_time,
            "end_time": self.end_time,
            "observed_mean_rate": self.observed_mean_rate,
        })

    @classmethod
    def from_json(cls, line: str) -> "FlowRecord":
        d = json.loads(line)
        return cls(int(d["terminal"]), int(d["flow_type"]), float(d["start_time"]),
                   None if d.get("end_time") is None else float(d["end_time"]),
                   None if d.get("observed_mean_rate") is None else float(d["observed_mean_rate"]))


class FlowHistoryStore:
    """Append-only per-terminal flow history with per-class mean rates.

    Only records carrying an observed rate contribute to the class averages.
    """

    def __init__(self, records: Iterable[FlowRecord] = ()):
        self._records: dict[int, list[FlowRecord]] = {}
        self._rate_sum: dict[int, float] = {}
        self._rate_count: dict[int, int] = {}
        for rec in records:
            self.record_flow(rec)

    def record_flow(self, record: FlowRecord) -> "FlowHistoryStore":
        seq = self._records.setdefault(record.terminal, [])
        if seq and record.start_time < seq[-1].start_time:
            raise ValueError(
                f"terminal {record.terminal}: start_time {record.start_time} precedes "
                f"last recorded start {seq[-1].start_time}")
        seq.append(record)
        self._account(record)
        return self

    def close_flow(self, terminal: int, end_time: float,
                   observed_mean_rate: float | None = None) -> FlowRecord:
        """Fill in the end (and rate) of the terminal's latest open record."""
        seq = self._records.get(terminal)
        if not seq or not seq[-1].is_open:
            raise KeyError(f"terminal {terminal} has no open flow")
        closed = replace(seq[-1], end_time=end_time, observed_mean_rate=observed_mean_rate)
        seq[-1] = closed
        self._account(closed)
        return closed

    def _account(self, rec: FlowRecord):
        if rec.observed_mean_rate is None:
            return
        c = rec.flow_type
        self._rate_sum[c] = self._rate_sum.get(c, 0.0) + rec.observed_mean_rate
        self._rate_count[c] = self._rate_count.get(c, 0) + 1

    def records(self, terminal: int) -> list[FlowRecord]:
        return list(self._records.get(terminal, ()))

    def sequence(self, terminal: int) -> list[int]:
        return [r.flow_type for r in self._records.get(terminal, ())]

    def last(self, terminal: int) -> FlowRecord | None:
        seq = self._records.get(terminal)
        return seq[-1] if seq else None

    def terminals(self) -> list[int]:
        return sorted(self._records)

    def average_rate(self, flow_type: int) -> float | None:
        n = self._rate_count.get(flow_type, 0)
        return self._rate_sum[flow_type] / n if n else None

    def average_rates(self) -> dict[int, float]:
        return {c: self._rate_sum[c] / n for c, n in sorted(self._rate_count.items())}

    def __iter__(self) -> Iterator[FlowRecord]:
        for t in self.terminals():
            yield from self._records[t]

    def __len__(self):
        return sum(len(s) for s in self._records.values())

    def __eq__(self, other):
        if not isinstance(other, FlowHistoryStore):
            return NotImplemented
        return self._records == other._records and self.average_rates() == other.average_rates()

    def dump(self, fh: IO[str]):
        """Write one JSON record per line, terminals in ascending order."""
        for rec in self:
            fh.write(rec.to_json() + "\n")

    @classmethod
    def load(cls, fh: IO[str]) -> "FlowHistoryStore":
        return cls(FlowRecord.from_json(line) for line in fh if line.strip())


class PositionStore:
    """Latest link quality per (terminal, AP), latest timestamp wins."""

    def __init__(self):
        self._q: dict[int, dict[int, tuple[float, float]]] = {}
        self._pos: dict[int, tuple[float, float, float]] = {}

    def update_link_quality(self, lq: LinkQuality) -> "PositionStore":
        if not lq.q > 0:
            raise ValueError(f"link quality must be positive, got {lq.q!r}")
        row = self._q.setdefault(lq.terminal, {})
        prev = row.get(lq.ap)
        if prev is None or lq.timestamp >= prev[1]:
            row[lq.ap] = (float(lq.q), float(lq.timestamp))
        return self

    def report(self, terminal: int, qualities: Mapping[int, float], timestamp: float):
        """Replace a terminal's visible-AP set with a fresh measurement.

        Ignored if older than what is already stored for that terminal.
        """
        row = self._q.get(terminal)
        if row and max(t for _, t in row.values()) > timestamp:
            return self
        for j, q in qualities.items():
            if not q > 0:
                raise ValueError(f"link quality must be positive, got {q!r}")
        self._q[terminal] = {int(j): (float(q), float(timestamp)) for j, q in qualities.items()}
        return self

    def quality(self, terminal: int, ap: int) -> float | None:
        entry = self._q.get(terminal, {}).get(ap)
        return None if entry is None else entry[0]

    def qualities(self, terminal: int) -> dict[int, float]:
        return {j: q for j, (q, _) in sorted(self._q.get(terminal, {}).items())}

    def neighborhood(self, terminal: int, tau: float, mouse_aps=None) -> set[int]:
        """APs with stored q > tau; restricted to ``mouse_aps`` when given."""
        omega = {j for j, (q, _) in self._q.get(terminal, {}).items() if q > tau}
        if mouse_aps is not None:
            omega &= set(mouse_aps)
        return omega

    def update_position(self, terminal: int, x: float, y: float, timestamp: float):
        prev = self._pos.get(terminal)
        if prev is None or timestamp >= prev[2]:
            self._pos[terminal] = (float(x), float(y), float(timestamp))
        return self

    def position(self, terminal: int) -> tuple[float, float] | None:
        p = self._pos.get(terminal)
        return None if p is None else (p[0], p[1])

    def matrix(self, terminals: Iterable[int], ap_index: Mapping[int, int], n_aps: int) -> np.ndarray:
        """Dense (len(terminals), n_aps) quality matrix, 0 where nothing is stored."""
        terminals = list(terminals)
        q = np.zeros((len(terminals), n_aps))
        for r, t in enumerate(terminals):
            for j, (v, _) in self._q.get(t, {}).items():
                col = ap_index.get(j)
                if col is not None:
                    q[r, col] = v
        return q
