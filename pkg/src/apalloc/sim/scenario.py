"""Synthetic access-network scenarios: AP topology, user sessions, mobility."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from ..model import FIVEG_FLOW_TYPES, PRE5G_FLOW_TYPES, AccessPoint, FlowType, Tag

log = logging.getLogger(__name__)

D_MIN = 0.1


class ScenarioKind(enum.Enum):
    PRE5G = "pre5g"
    FIVEG = "5g"

    @property
    def technology(self) -> str:
        return "wifi" if self is ScenarioKind.PRE5G else "5g"

    @property
    def flow_types(self) -> tuple[FlowType, ...]:
        return PRE5G_FLOW_TYPES if self is ScenarioKind.PRE5G else FIVEG_FLOW_TYPES


def rssi_dbm(d):
    """Indoor log-distance RSSI used in place of measured values."""
    d = np.maximum(np.asarray(d, dtype=float), D_MIN)
    return np.clip(-40.0 - 25.0 * np.log10(d), -95.0, -40.0)


def pathloss_db(d):
    """Linear macroscopic pathloss of a 5G small cell."""
    d = np.maximum(np.asarray(d, dtype=float), D_MIN)
    return 75.85 + 37.3 * np.log10(d)


def radio_quality(kind: ScenarioKind, d, coverage_radius: float = 20.0):
    """Link quality at distance ``d``; larger is better, 0 beyond coverage."""
    d = np.asarray(d, dtype=float)
    if kind is ScenarioKind.PRE5G:
        q = -1.0 / rssi_dbm(d)
    else:
        q = 1.0 / pathloss_db(d)
    q = np.where(d > coverage_radius, 0.0, q)
    return float(q) if q.ndim == 0 else q


def tau_for(kind: ScenarioKind, coverage_radius: float = 20.0) -> float:
    """Threshold equal to the quality at the coverage edge."""
    d = float(coverage_radius)
    return float(-1.0 / rssi_dbm(d)) if kind is ScenarioKind.PRE5G else float(1.0 / pathloss_db(d))


def quality_matrix(kind, terminal_pos, ap_pos, coverage_radius) -> np.ndarray:
    d = np.sqrt(((terminal_pos[:, None, :] - ap_pos[None, :, :]) ** 2).sum(axis=2))
    return radio_quality(kind, d, coverage_radius)


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs of a synthetic scenario. Capacities in bits/s, times in s, lengths in m."""

    kind: ScenarioKind = ScenarioKind.PRE5G
    area: tuple[float, float] = (700.0, 500.0)
    ap_count: int = 834
    mouse_fraction: float = 0.6
    mouse_capacity: float | None = None
    elephant_capacity: float | None = None
    coverage_radius: float = 20.0
    # "uniform" over the area, or "campus": uniform inside a grid of buildings
    layout: str = "uniform"
    campus_grid: tuple[int, int] = (2, 2)
    street_width: float = 15.0
    user_count: int = 90
    tick: float = 1.0
    duration: float = 600.0
    # mobility
    hotspot_count: int = 12
    hotspot_spread: float = 6.0
    speed_range: tuple[float, float] = (0.5, 1.5)
    pause_range: tuple[float, float] = (60.0, 600.0)
    # usage
    favorite_prob: float = 0.85
    elephant_share: float = 0.25
    idle_mean: float = 40.0
    session_mean: dict = field(default_factory=lambda: {"elephant": 180.0, "mouse": 60.0})
    rate_sigma: float = 0.15
    history_sessions: int = 150
    rng_seed: int = 0

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", ScenarioKind(self.kind))
        if not 0.0 <= self.mouse_fraction <= 1.0:
            raise ValueError("mouse_fraction must lie in [0, 1]")
        if self.ap_count < 0 or self.user_count < 0:
            raise ValueError("counts must be >= 0")
        if self.tick <= 0 or self.duration < 0:
            raise ValueError("tick must be > 0 and duration >= 0")
        defaults = {ScenarioKind.PRE5G: (50e3, 10e6), ScenarioKind.FIVEG: (10e6, 10e9)}[self.kind]
        if self.mouse_capacity is None:
            object.__setattr__(self, "mouse_capacity", defaults[0])
        if self.elephant_capacity is None:
            object.__setattr__(self, "elephant_capacity", defaults[1])
        if self.layout not in ("uniform", "campus"):
            raise ValueError("layout must be 'uniform' or 'campus'")
        object.__setattr__(self, "campus_grid", tuple(int(v) for v in self.campus_grid))
        for name in ("area", "speed_range", "pause_range"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.tick))

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, rng_seed=seed)


@dataclass(frozen=True)
class Session:
    terminal: int
    flow_type: int
    start: float
    end: float
    rate: float


@dataclass(eq=False)
class ScenarioModel:
    """Static topology plus the ground-truth trace of a scenario."""

    kind: ScenarioKind
    flow_types: tuple[FlowType, ...]
    ap_ids: np.ndarray
    ap_pos: np.ndarray
    ap_elephant: np.ndarray
    capacity: np.ndarray
    coverage_radius: float
    terminal_ids: np.ndarray
    tick: float
    positions: np.ndarray  # (ticks, users, 2); NaN where unknown
    sessions: list[Session]
    history: list[Session]
    seed: int = 0

    @property
    def tau(self) -> float:
        return tau_for(self.kind, self.coverage_radius)

    @property
    def n_ticks(self) -> int:
        return self.positions.shape[0]

    @property
    def n_users(self) -> int:
        return len(self.terminal_ids)

    @property
    def n_aps(self) -> int:
        return len(self.ap_ids)

    def access_points(self) -> list[AccessPoint]:
        return [AccessPoint(int(a), Tag.ELEPHANT if e else Tag.MOUSE, (float(x), float(y)),
                            float(c), self.coverage_radius)
                for a, (x, y), e, c in zip(self.ap_ids, self.ap_pos, self.ap_elephant, self.capacity)]

    def flow_type(self, class_id: int) -> FlowType:
        return self.flow_types[class_id]

    def true_quality(self, tick: int) -> np.ndarray:
        pos = self.positions[tick]
        q = quality_matrix(self.kind, np.nan_to_num(pos, nan=1e12), self.ap_pos, self.coverage_radius)
        q[~np.isfinite(pos).all(axis=1)] = 0.0
        return q

    def activity(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-tick active class (-1 idle) and rate for each user."""
        T, n = self.n_ticks, self.n_users
        cls = np.full((T, n), -1, dtype=np.int64)
        rate = np.zeros((T, n))
        col = {int(t): k for k, t in enumerate(self.terminal_ids)}
        for s in self.sessions:
            lo = max(0, math.ceil(s.start / self.tick - 1e-9))
            hi = min(T, math.ceil(s.end / self.tick - 1e-9))
            if hi > lo:
                cls[lo:hi, col[s.terminal]] = s.flow_type
                rate[lo:hi, col[s.terminal]] = s.rate
        return cls, rate


def _usage_matrix(rng, flow_types: Sequence[FlowType], favorite_prob: float, elephant_share: float):
    """Per-user next-class matrix with one favourite successor per class."""
    C = len(flow_types)
    eleph = np.array([f.is_elephant for f in flow_types])
    pop = np.where(eleph, elephant_share / max(eleph.sum(), 1),
                   (1 - elephant_share) / max((~eleph).sum(), 1))
    pop = pop / pop.sum()
    P = np.empty((C, C))
    for a in range(C):
        fav = rng.choice(C, p=pop)
        P[a] = (1 - favorite_prob) * pop
        P[a, fav] += favorite_prob
    return P


def _sessions_for_user(rng, terminal: int, cfg: ScenarioConfig, P: np.ndarray,
                       start_class: int, t0: float, t1: float | None, count: int | None):
    flow_types = cfg.kind.flow_types
    out = []
    t, c = t0, start_class
    while (t1 is None or t < t1) and (count is None or len(out) < count):
        t += rng.exponential(cfg.idle_mean)
        ft = flow_types[c]
        dur = max(cfg.tick, rng.exponential(cfg.session_mean["elephant" if ft.is_elephant else "mouse"]))
        if t1 is not None and t >= t1:
            break
        rate = ft.mean_rate * float(np.exp(rng.normal(-0.5 * cfg.rate_sigma ** 2, cfg.rate_sigma)))
        out.append(Session(terminal, c, t, t + dur, rate))
        t += dur
        c = int(rng.choice(len(flow_types), p=P[c]))
    return out, c


def _trajectory(rng, cfg: ScenarioConfig, hotspots: np.ndarray, n_ticks: int) -> np.ndarray:
    def waypoint():
        h = hotspots[rng.integers(len(hotspots))]
        p = h + rng.normal(0.0, cfg.hotspot_spread, 2)
        return np.clip(p, 0.0, cfg.area)

    pos = np.empty((n_ticks, 2))
    here = waypoint()
    k = 0
    pause_left = rng.uniform(0.0, cfg.pause_range[1])
    while k < n_ticks:
        steps = max(1, int(round(pause_left / cfg.tick)))
        pos[k:k + steps] = here
        k += steps
        if k >= n_ticks:
            break
        there = waypoint()
        speed = rng.uniform(*cfg.speed_range)
        steps = max(1, int(math.ceil(np.linalg.norm(there - here) / (speed * cfg.tick))))
        frac = (np.arange(1, steps + 1) / steps)[:, None]
        seg = here + frac * (there - here)
        pos[k:k + steps] = seg[:n_ticks - k]
        k += steps
        here = there
        pause_left = rng.uniform(*cfg.pause_range)
    return pos


def _place_aps(rng, cfg: ScenarioConfig):
    """AP positions plus the (centre, half-size) of every building."""
    W, H = cfg.area
    l = cfg.ap_count
    if cfg.layout == "uniform":
        return rng.uniform((0.0, 0.0), (W, H), size=(l, 2)), None
    rows, cols = cfg.campus_grid
    bw = (W - (cols - 1) * cfg.street_width) / cols
    bh = (H - (rows - 1) * cfg.street_width) / rows
    if bw <= 0 or bh <= 0:
        raise ValueError("streets leave no room for buildings")
    b = rng.permutation(np.arange(l) % (rows * cols))  # equal share per building
    corner = np.stack([(b % cols) * (bw + cfg.street_width),
                       (b // cols) * (bh + cfg.street_width)], axis=1)
    k = np.arange(rows * cols)
    centres = np.stack([(k % cols) * (bw + cfg.street_width) + bw / 2,
                        (k // cols) * (bh + cfg.street_width) + bh / 2], axis=1)
    return corner + rng.uniform((0.0, 0.0), (bw, bh), size=(l, 2)), (centres, np.array([bw, bh]) / 2)


def _hotspots(rng, cfg: ScenarioConfig, ap_pos: np.ndarray, buildings) -> np.ndarray:
    """Crowd centres: random AP sites, or the inner half of each building in turn."""
    h = max(1, cfg.hotspot_count)
    if buildings is not None:
        centres, half = buildings
        k = np.arange(h) % len(centres)
        return centres[k] + rng.uniform(-half / 2, half / 2, size=(h, 2))
    if len(ap_pos) == 0:
        return rng.uniform((0, 0), cfg.area, size=(h, 2))
    return ap_pos[rng.choice(len(ap_pos), size=min(h, len(ap_pos)), replace=False)]


@dataclass(frozen=True)
class Topology:
    """A fixed AP deployment, e.g. read from a topology file."""

    ap_ids: np.ndarray
    positions: np.ndarray
    elephant: np.ndarray
    capacity: np.ndarray

    def __post_init__(self):
        if not (len(self.ap_ids) == len(self.positions) == len(self.elephant) == len(self.capacity)):
            raise ValueError("topology columns differ in length")
        if len(np.unique(self.ap_ids)) != len(self.ap_ids):
            raise ValueError("duplicate AP ids in topology")


def generate_scenario(cfg: ScenarioConfig, topology: Topology | None = None) -> ScenarioModel:
    """Draw a scenario from ``cfg``; identical seeds give identical scenarios.

    With ``topology`` the AP deployment is taken as given and only users,
    sessions and mobility are drawn.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    topo_rng, user_rng = rng.spawn(2)
    W, H = cfg.area
    if topology is None:
        l = cfg.ap_count
        ap_ids = np.arange(l)
        ap_pos, buildings = _place_aps(topo_rng, cfg)
        ap_elephant = ~(topo_rng.random(l) < cfg.mouse_fraction)
        capacity = np.where(ap_elephant, cfg.elephant_capacity, cfg.mouse_capacity).astype(float)
    else:
        ap_ids = np.asarray(topology.ap_ids, dtype=np.int64)
        ap_pos = np.asarray(topology.positions, dtype=float).reshape(-1, 2)
        ap_elephant = np.asarray(topology.elephant, dtype=bool)
        capacity = np.asarray(topology.capacity, dtype=float)
        l, buildings = len(ap_ids), None
    if l and W * H < l * math.pi * cfg.coverage_radius ** 2 / 50:
        log.warning("area %.0fx%.0f is very small for %d APs of radius %.0f m",
                    W, H, l, cfg.coverage_radius)

    n = cfg.user_count
    T = cfg.n_ticks
    hotspots = _hotspots(topo_rng, cfg, ap_pos, buildings)
    positions = np.empty((T, n, 2))
    sessions, history = [], []
    for i, urng in enumerate(user_rng.spawn(n)):
        P = _usage_matrix(urng, cfg.kind.flow_types, cfg.favorite_prob, cfg.elephant_share)
        c0 = int(urng.integers(len(cfg.kind.flow_types)))
        past, c = _sessions_for_user(urng, i, cfg, P, c0, 0.0, None, cfg.history_sessions)
        if past:
            # shift the prior history so it ends just before t=0
            offset = past[-1].end + urng.exponential(cfg.idle_mean)
            past = [replace(s, start=s.start - offset, end=s.end - offset) for s in past]
        history.extend(past)
        now, _ = _sessions_for_user(urng, i, cfg, P, c, 0.0, cfg.duration, None)
        sessions.extend(now)
        positions[:, i] = _trajectory(urng, cfg, hotspots, T)
    return ScenarioModel(cfg.kind, cfg.kind.flow_types, ap_ids, ap_pos, ap_elephant,
                         capacity, cfg.coverage_radius, np.arange(n), cfg.tick, positions,
                         sessions, history, cfg.rng_seed)
