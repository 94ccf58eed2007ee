"""Experiment configs, topology files and trace files.

A trace is the adapter point for recorded data: flow starts and ends plus
position samples per terminal, with negative times marking prior history.
"""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import IO

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .engine import RunConfig
from .scenario import (ScenarioConfig, ScenarioModel, Session, Topology, generate_scenario)

TOPOLOGY_FIELDS = ("ap_id", "x", "y", "kind", "capacity_bps")
TRACE_FIELDS = ("time_s", "terminal_id", "event", "class_id", "rate_bps", "x", "y")
BUNDLED_PREFIX = "bundled:"


class InputError(ValueError):
    """Malformed or missing input data (config, topology or trace)."""


def _f(v: float) -> str:
    return repr(float(v))


# -- topology -----------------------------------------------------------------

def write_topology(fh: IO[str], scenario: ScenarioModel):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TOPOLOGY_FIELDS)
    for a, (x, y), e, c in zip(scenario.ap_ids, scenario.ap_pos, scenario.ap_elephant,
                               scenario.capacity):
        w.writerow([int(a), _f(x), _f(y), "elephant" if e else "mouse", _f(c)])


def read_topology(fh: IO[str]) -> Topology:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or set(TOPOLOGY_FIELDS) - set(reader.fieldnames):
        raise InputError(f"topology needs columns {', '.join(TOPOLOGY_FIELDS)}")
    ids, pos, eleph, cap = [], [], [], []
    for n, row in enumerate(reader, start=2):
        try:
            kind = row["kind"].strip().lower()
            if kind not in ("elephant", "mouse"):
                raise ValueError(f"kind must be elephant or mouse, got {row['kind']!r}")
            c = float(row["capacity_bps"])
            if not c >= 0:
                raise ValueError("capacity must be >= 0")
            ids.append(int(row["ap_id"]))
            pos.append((float(row["x"]), float(row["y"])))
            eleph.append(kind == "elephant")
            cap.append(c)
        except (TypeError, ValueError) as exc:
            raise InputError(f"topology line {n}: {exc}") from None
    try:
        return Topology(np.array(ids, dtype=np.int64), np.array(pos, dtype=float).reshape(-1, 2),
                        np.array(eleph, dtype=bool), np.array(cap, dtype=float))
    except ValueError as exc:
        raise InputError(str(exc)) from None


# -- trace ----------------------------------------------------------------------

def write_trace(fh: IO[str], scenario: ScenarioModel):
    """Every session as start/end events plus one position sample per tick."""
    rows = []
    for s in list(scenario.history) + list(scenario.sessions):
        rows.append((s.start, s.terminal, 1, ["flow_start", s.flow_type, _f(s.rate), "", ""]))
        rows.append((s.end, s.terminal, 0, ["flow_end", s.flow_type, "", "", ""]))
    for k in range(scenario.n_ticks):
        for i, t in enumerate(scenario.terminal_ids):
            x, y = scenario.positions[k, i]
            if np.isfinite(x) and np.isfinite(y):
                rows.append((k * scenario.tick, int(t), 2, ["pos", "", "", _f(x), _f(y)]))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for t, term, _, rest in rows:
        w.writerow([_f(t), term, *rest])


def _interpolate(times: np.ndarray, xy: np.ndarray, at: np.ndarray) -> np.ndarray:
    order = np.argsort(times, kind="stable")
    times, xy = times[order], xy[order]
    return np.stack([np.interp(at, times, xy[:, 0]), np.interp(at, times, xy[:, 1])], axis=1)


def read_trace(fh: IO[str], cfg: ScenarioConfig, topology: Topology, seed: int = 0) -> ScenarioModel:
    """Build a scenario from a trace over a fixed topology.

    Positions are linearly interpolated to the tick grid and held constant
    before the first and after the last sample; terminals never sampled stay
    out of range. Flows starting before t=0 form the prior history.
    """
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or set(TRACE_FIELDS) - set(reader.fieldnames):
        raise InputError(f"trace needs columns {', '.join(TRACE_FIELDS)}")
    n_classes = len(cfg.kind.flow_types)
    open_flows: dict[int, tuple[float, int, float]] = {}
    flows: list[Session] = []
    samples: dict[int, list[tuple[float, float, float]]] = {}
    terminals: set[int] = set()
    for n, row in enumerate(reader, start=2):
        try:
            t = float(row["time_s"])
            term = int(row["terminal_id"])
            ev = row["event"].strip()
            if not math.isfinite(t):
                raise ValueError("time must be finite")
            terminals.add(term)
            if ev == "flow_start":
                c = int(row["class_id"])
                if not 0 <= c < n_classes:
                    raise ValueError(f"class_id {c} outside 0..{n_classes - 1}")
                if term in open_flows:
                    raise ValueError(f"terminal {term} starts a flow while one is open")
                open_flows[term] = (t, c, float(row["rate_bps"]))
            elif ev == "flow_end":
                if term not in open_flows:
                    raise ValueError(f"terminal {term} ends a flow that never started")
                start, c, rate = open_flows.pop(term)
                if t < start:
                    raise ValueError("flow ends before it starts")
                flows.append(Session(term, c, start, t, rate))
            elif ev == "pos":
                samples.setdefault(term, []).append((t, float(row["x"]), float(row["y"])))
            else:
                raise ValueError(f"unknown event {ev!r}")
        except (TypeError, ValueError) as exc:
            raise InputError(f"trace line {n}: {exc}") from None
    end = cfg.duration
    for term, (start, c, rate) in open_flows.items():
        flows.append(Session(term, c, start, max(start, end), rate))
    ids = np.array(sorted(terminals), dtype=np.int64)
    T = cfg.n_ticks
    positions = np.full((T, len(ids), 2), np.nan)
    grid = np.arange(T) * cfg.tick
    for k, term in enumerate(ids):
        pts = samples.get(int(term))
        if pts:
            arr = np.array(pts)
            positions[:, k] = _interpolate(arr[:, 0], arr[:, 1:], grid)
    flows.sort(key=lambda s: (s.terminal, s.start))
    history = [s for s in flows if s.start < 0]
    sessions = [s for s in flows if s.start >= 0]
    return ScenarioModel(cfg.kind, cfg.kind.flow_types, topology.ap_ids, topology.positions,
                         topology.elephant, topology.capacity, cfg.coverage_radius, ids, cfg.tick,
                         positions, sessions, history, seed)


# -- experiment configs ---------------------------------------------------------------

@dataclass(frozen=True)
class Experiment:
    """A parsed config file: scenario knobs, controller knobs, optional data files."""

    name: str
    scenario: ScenarioConfig
    controller: RunConfig
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
    topology_file: Path | None = None
    trace_file: Path | None = None

    def build(self, seed: int) -> ScenarioModel:
        """The scenario for ``seed``: generated, or read from the data files."""
        cfg = self.scenario.with_seed(seed)
        topology = None
        if self.topology_file is not None:
            topology = _open(self.topology_file, read_topology)
        if self.trace_file is not None:
            if topology is None:
                raise InputError("a trace_file needs a topology_file")
            return _open(self.trace_file, lambda fh: read_trace(fh, cfg, topology, seed))
        return generate_scenario(cfg, topology)


def _open(path: Path, fn):
    try:
        with open(path, newline="") as fh:
            return fn(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"1..10"`` (inclusive) or a comma list like ``"1,4,7"``."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split("..", 1))
            if hi < lo:
                raise ValueError
            return tuple(range(lo, hi + 1))
        seeds = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ValueError(f"bad seed list {text!r}; use 'A..B' or 'a,b,c'") from None
    if not seeds:
        raise ValueError("empty seed list")
    return seeds


def _section(data: dict, name: str, cls) -> dict:
    sec = dict(data.get(name, {}))
    known = {f.name for f in fields(cls)}
    unknown = set(sec) - known
    if unknown:
        raise InputError(f"[{name}] has unknown keys: {', '.join(sorted(unknown))}")
    return sec


def _anchor(path: Path, text: str, message: str) -> str:
    """Prefix ``message`` with the line of the first config key it names."""
    lines = text.splitlines()
    for word in sorted(set(w.strip("'\",.:;[]()") for w in message.split()), key=len, reverse=True):
        if not word.isidentifier():
            continue
        for n, line in enumerate(lines, start=1):
            if line.split("=", 1)[0].strip() == word:
                return f"{path}:{n}: {message}"
    return f"{path}: {message}"


def bundled_path(name: str) -> Path:
    return Path(__file__).resolve().parent.parent / "data" / f"{name}.toml"


def bundled_names() -> list[str]:
    return sorted(p.stem for p in bundled_path("x").parent.glob("*.toml"))


def load_experiment(source: str | Path) -> Experiment:
    """Read a TOML config; ``bundled:<name>`` selects a shipped one."""
    source = str(source)
    if source.startswith(BUNDLED_PREFIX):
        name = source[len(BUNDLED_PREFIX):]
        path = bundled_path(name)
        if not path.is_file():
            raise InputError(f"no bundled config {name!r}; have {', '.join(bundled_names())}")
    else:
        path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"{path}: {exc}") from None
    try:
        unknown = set(data) - {"name", "scenario", "controller", "run", "data"}
        if unknown:
            raise InputError(f"unknown sections: {', '.join(sorted(unknown))}")
        scenario = ScenarioConfig.from_dict(_section(data, "scenario", ScenarioConfig))
        controller = RunConfig(**_section(data, "controller", RunConfig))
        run_sec = dict(data.get("run", {}))
        seeds = run_sec.pop("seeds", "1..10")
        if run_sec:
            raise InputError(f"[run] has unknown keys: {', '.join(sorted(run_sec))}")
        seeds = parse_seeds(seeds) if isinstance(seeds, str) else tuple(int(s) for s in seeds)
        files = dict(data.get("data", {}))
        extra = set(files) - {"topology_file", "trace_file"}
        if extra:
            raise InputError(f"[data] has unknown keys: {', '.join(sorted(extra))}")
    except (InputError, TypeError, ValueError) as exc:
        raise InputError(_anchor(path, text, str(exc))) from None
    base = path.resolve().parent
    resolve = lambda v: None if v is None else (base / v)
    return Experiment(str(data.get("name", path.stem)), scenario, controller, seeds,
                      resolve(files.get("topology_file")), resolve(files.get("trace_file")))
