"""Core domain types: flow classes, access points, assignments and the
per-event assignment problem, plus the fitness and feasibility checks.

An assignment is stored as one integer per terminal (the AP column, or -1
when unassigned). That makes "at most one AP per terminal" structural; a raw
0/1 matrix can still be passed to :func:`is_feasible` when that constraint
itself has to be checked.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

UNASSIGNED = -1


class Tag(enum.Enum):
    ELEPHANT = "elephant"
    MOUSE = "mouse"


@dataclass(frozen=True)
class FlowType:
    """Application class with its average rate in bits/second."""

    id: int
    name: str
    tag: Tag
    mean_rate: float

    def __post_init__(self):
        if not self.mean_rate > 0:
            raise ValueError(f"mean_rate must be positive, got {self.mean_rate!r}")

    @property
    def is_elephant(self) -> bool:
        return self.tag is Tag.ELEPHANT


PRE5G_FLOW_TYPES: tuple[FlowType, ...] = (
    FlowType(0, "video_streaming", Tag.ELEPHANT, 2.58e6),
    FlowType(1, "social_av", Tag.MOUSE, 44.79e3),
    FlowType(2, "news", Tag.MOUSE, 43.45e3),
    FlowType(3, "sports", Tag.MOUSE, 17.73e3),
    FlowType(4, "voip", Tag.MOUSE, 16.07e3),
    FlowType(5, "social", Tag.MOUSE, 12.58e3),
    FlowType(6, "email", Tag.MOUSE, 12.58e3),
    FlowType(7, "sharing_sync", Tag.MOUSE, 12.58e3),
)

FIVEG_FLOW_TYPES: tuple[FlowType, ...] = (
    FlowType(0, "vr_entertainment", Tag.ELEPHANT, 2.5e9),
    FlowType(1, "hq_messaging", Tag.MOUSE, 2e6),
)


@dataclass(frozen=True)
class AccessPoint:
    id: int
    kind: Tag
    position: tuple[float, float]
    spare_capacity: float
    coverage_radius: float = 20.0

    def __post_init__(self):
        if self.spare_capacity < 0:
            raise ValueError("spare_capacity must be >= 0")
        if self.coverage_radius <= 0:
            raise ValueError("coverage_radius must be > 0")

    @property
    def is_elephant(self) -> bool:
        return self.kind is Tag.ELEPHANT


@dataclass(frozen=True)
class Terminal:
    id: int
    position: tuple[float, float] | None = None
    flow: FlowType | None = None
    rate: float | None = None


@dataclass(frozen=True)
class LinkQuality:
    terminal: int
    ap: int
    q: float
    timestamp: float = 0.0


# Handover execution times per radio technology, in ms.
ZETA_MS = {"wifi": 34.7, "lte": 30.0, "5g": 15.3}
# Median detection + notification + command latency of an SDN controller, ms.
CHI_BETA_DELTA_MS = 45.2
# Upper bound on the decision time per optimizer iteration, ms.
GAMMA_PER_ITERATION_MS = 0.04


@dataclass(frozen=True)
class HandoverModel:
    """Composed handover time: signalling + decision + execution."""

    chi_beta_delta: float = CHI_BETA_DELTA_MS
    zeta: float = ZETA_MS["wifi"]
    gamma: float = 5 * GAMMA_PER_ITERATION_MS

    def __post_init__(self):
        if min(self.chi_beta_delta, self.zeta, self.gamma) < 0:
            raise ValueError("handover time components must be >= 0")

    @classmethod
    def for_technology(cls, technology: str, gamma: float | None = None, iterations: int = 5):
        if gamma is None:
            gamma = iterations * GAMMA_PER_ITERATION_MS
        return cls(zeta=ZETA_MS[technology], gamma=gamma)

    def total(self, network_side: bool = True) -> float:
        """Total ms; terminal-driven handovers skip the controller round-trip."""
        if not network_side:
            return self.zeta
        return self.chi_beta_delta + self.gamma + self.zeta


class InitMode(enum.Enum):
    EMPTY = "empty"
    PREVIOUS = "previous"


@dataclass(frozen=True)
class OptimizerConfig:
    """Local search settings.

    ``picks_per_iteration`` is the number of random picks each worker makes
    between coordination steps; ``None`` means one pick per terminal (a
    sweep). ``epsilon`` enables the early stop on small improvements.
    """

    tau: float = 0.0
    iterations: int = 5
    init_mode: InitMode = InitMode.PREVIOUS
    epsilon: float | None = None
    parallel_width: int = 3
    picks_per_iteration: int | None = None
    rng_seed: int | None = None

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.parallel_width < 1:
            raise ValueError("parallel_width must be >= 1")
        if self.picks_per_iteration is not None and self.picks_per_iteration < 1:
            raise ValueError("picks_per_iteration must be >= 1")


def _readonly(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Assignment:
    """Terminal -> AP column map for one event (``-1`` = unassigned)."""

    ap: np.ndarray
    event: int = 0

    def __post_init__(self):
        ap = _readonly(self.ap, np.int64)
        if ap.ndim != 1:
            raise ValueError("assignment vector must be 1-D")
        if ap.size and ap.min() < UNASSIGNED:
            raise ValueError("AP indices must be >= -1")
        object.__setattr__(self, "ap", ap)

    @classmethod
    def empty(cls, n: int, event: int = 0) -> "Assignment":
        return cls(np.full(n, UNASSIGNED, dtype=np.int64), event)

    @classmethod
    def from_matrix(cls, L, event: int = 0) -> "Assignment":
        L = np.asarray(L)
        if L.ndim != 2:
            raise ValueError("L must be a 2-D 0/1 matrix")
        rows = (L != 0).sum(axis=1)
        if np.any(rows > 1):
            bad = np.flatnonzero(rows > 1).tolist()
            raise ValueError(f"terminals {bad} are linked to more than one AP")
        ap = np.where(rows == 1, np.argmax(L != 0, axis=1), UNASSIGNED)
        return cls(ap, event)

    def to_matrix(self, n_aps: int) -> np.ndarray:
        L = np.zeros((len(self.ap), n_aps), dtype=np.int8)
        rows = np.flatnonzero(self.ap >= 0)
        L[rows, self.ap[rows]] = 1
        return L

    def links(self) -> Iterator[tuple[int, int]]:
        for i in np.flatnonzero(self.ap >= 0):
            yield int(i), int(self.ap[i])

    @property
    def n_assigned(self) -> int:
        return int(np.count_nonzero(self.ap >= 0))

    def __len__(self):
        return len(self.ap)

    def __eq__(self, other):
        if not isinstance(other, Assignment):
            return NotImplemented
        return np.array_equal(self.ap, other.ap)

    def __hash__(self):
        return hash(self.ap.tobytes())


@dataclass(frozen=True, eq=False)
class Problem:
    """One instance of the assignment problem at a given event.

    Attributes:
        q: (n, l) link qualities; 0 means no usable link.
        rate: (n,) estimated rate of each terminal's flow, bits/s.
        elephant: (n,) True for terminals in the elephant demand class.
        ap_elephant: (l,) True for elephant APs.
        capacity: (l,) room for new flows at each AP, bits/s.
        tau: quality threshold; a link is usable iff q > tau.
        terminal_ids, ap_ids: labels for the rows / columns.
    """

    q: np.ndarray
    rate: np.ndarray
    elephant: np.ndarray
    ap_elephant: np.ndarray
    capacity: np.ndarray
    tau: float = 0.0
    terminal_ids: np.ndarray = field(default=None)
    ap_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        q = _readonly(self.q, float)
        if q.ndim != 2:
            q = q.reshape(len(np.atleast_1d(self.rate)), -1)
        n, l = q.shape
        rate = _readonly(self.rate, float)
        elephant = _readonly(self.elephant, bool)
        ap_elephant = _readonly(self.ap_elephant, bool)
        capacity = _readonly(self.capacity, float)
        if rate.shape != (n,) or elephant.shape != (n,):
            raise ValueError(f"rate/elephant must have shape ({n},)")
        if ap_elephant.shape != (l,) or capacity.shape != (l,):
            raise ValueError(f"ap_elephant/capacity must have shape ({l},)")
        if np.any(rate < 0) or np.any(capacity < 0):
            raise ValueError("rates and capacities must be >= 0")
        tids = np.arange(n) if self.terminal_ids is None else self.terminal_ids
        aids = np.arange(l) if self.ap_ids is None else self.ap_ids
        for name, value in [("q", q), ("rate", rate), ("elephant", elephant),
                            ("ap_elephant", ap_elephant), ("capacity", capacity),
                            ("terminal_ids", _readonly(tids, np.int64)),
                            ("ap_ids", _readonly(aids, np.int64))]:
            object.__setattr__(self, name, value)
        if len(self.terminal_ids) != n or len(self.ap_ids) != l:
            raise ValueError("id arrays do not match problem dimensions")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def l(self) -> int:
        return self.q.shape[1]

    def neighborhood(self, i: int) -> np.ndarray:
        """APs whose link to terminal ``i`` beats the threshold."""
        return np.flatnonzero(self.q[i] > self.tau)

    def mouse_neighborhood(self, i: int) -> np.ndarray:
        return np.flatnonzero((self.q[i] > self.tau) & ~self.ap_elephant)

    def compatible(self) -> np.ndarray:
        """(n, l) mask of links allowed by the quality and type constraints."""
        usable = self.q > self.tau
        return usable & ~(self.elephant[:, None] & ~self.ap_elephant[None, :])

    def subproblem(self, rows: Sequence[int], cols: Sequence[int]) -> "Problem":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        return Problem(self.q[np.ix_(rows, cols)], self.rate[rows], self.elephant[rows],
                       self.ap_elephant[cols], self.capacity[cols], self.tau,
                       self.terminal_ids[rows], self.ap_ids[cols])

    def masked(self, mask: np.ndarray) -> "Problem":
        """Same problem with links outside ``mask`` made unusable."""
        q = np.where(mask, self.q, 0.0)
        return Problem(q, self.rate, self.elephant, self.ap_elephant, self.capacity,
                       self.tau, self.terminal_ids, self.ap_ids)

    def with_capacity(self, capacity) -> "Problem":
        return Problem(self.q, self.rate, self.elephant, self.ap_elephant, capacity,
                       self.tau, self.terminal_ids, self.ap_ids)


def capacity_tol(capacity) -> np.ndarray | float:
    """Slack allowed on capacity comparisons to absorb float accumulation."""
    return 1e-9 * np.maximum(capacity, 1.0)


def total_fitness(assignment, q, rate) -> float:
    """Sum of q_ij * r_ij over the set links of ``assignment``.

    ``rate`` may be per terminal (n,) or per link (n, l).
    """
    if isinstance(assignment, Assignment):
        ap = assignment.ap
    else:
        L = np.asarray(assignment)
        ap = Assignment.from_matrix(L).ap if L.ndim == 2 else L
    q = np.asarray(q, dtype=float)
    rate = np.asarray(rate, dtype=float)
    rows = np.flatnonzero(ap >= 0)
    if rows.size == 0:
        return 0.0
    cols = ap[rows]
    if np.any(cols >= q.shape[1]):
        raise ValueError("assignment references an AP outside the quality map")
    qv = q[rows, cols]
    rv = rate[rows, cols] if rate.ndim == 2 else rate[rows]
    if np.any(np.isnan(qv)) or np.any(np.isnan(rv)):
        raise ValueError("missing quality or rate for an assigned link")
    return float(np.sum(qv * rv))


class Violation(NamedTuple):
    constraint: str  # quality | single | type | capacity | escape
    terminal: int | None
    ap: int | None
    detail: str = ""


@dataclass(frozen=True)
class Feasibility:
    ok: bool
    violations: tuple[Violation, ...] = ()

    def __bool__(self):
        return self.ok

    def constraints(self) -> set[str]:
        return {v.constraint for v in self.violations}


def ap_loads(ap: np.ndarray, rate: np.ndarray, n_aps: int) -> np.ndarray:
    rows = ap >= 0
    return np.bincount(ap[rows], weights=rate[rows], minlength=n_aps).astype(float)


def is_feasible(assignment, problem: Problem) -> Feasibility:
    """Check every assignment constraint, listing all violations found."""
    violations: list[Violation] = []
    if isinstance(assignment, Assignment):
        ap = assignment.ap
    else:
        L = np.asarray(assignment)
        if L.ndim == 2:
            rows = (L != 0).sum(axis=1)
            for i in np.flatnonzero(rows > 1):
                violations.append(Violation("single", int(i), None, f"{rows[i]} links"))
            ap = np.where(rows >= 1, np.argmax(L != 0, axis=1), UNASSIGNED)
        else:
            ap = L.astype(np.int64)
    if len(ap) != problem.n:
        raise ValueError(f"assignment has {len(ap)} rows, problem has {problem.n}")
    if np.any(ap >= problem.l):
        raise ValueError("assignment references an AP outside the problem")

    q, tau = problem.q, problem.tau
    for i, j in ((int(i), int(ap[i])) for i in np.flatnonzero(ap >= 0)):
        if not q[i, j] > tau:
            violations.append(Violation("quality", i, j, f"q={q[i, j]:.6g} <= tau={tau:.6g}"))
        if problem.elephant[i] and not problem.ap_elephant[j]:
            violations.append(Violation("type", i, j, "elephant terminal on mouse AP"))

    load = ap_loads(ap, problem.rate, problem.l)
    over = load > problem.capacity + capacity_tol(problem.capacity)
    for j in np.flatnonzero(over):
        violations.append(Violation("capacity", None, int(j),
                                    f"load {load[j]:.6g} > R={problem.capacity[j]:.6g}"))

    room = problem.capacity - load
    tol = capacity_tol(problem.capacity)
    mouse_ap = ~problem.ap_elephant
    linked = ap >= 0
    escaped = np.flatnonzero(linked & ~problem.elephant & problem.ap_elephant[np.where(linked, ap, 0)])
    for i in escaped:
        open_aps = np.flatnonzero(mouse_ap & (q[i] > tau) & (room - problem.rate[i] > tol))
        if open_aps.size:
            a = int(open_aps[0])
            violations.append(Violation("escape", int(i), int(ap[i]),
                                        f"mouse AP {a} still has room {room[a]:.6g}"))
    return Feasibility(not violations, tuple(violations))
