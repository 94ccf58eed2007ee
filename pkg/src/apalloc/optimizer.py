"""Randomized parallel local search for the AP assignment problem.

Each iteration, every worker starts from the shared best assignment and makes
a batch of random picks: clear terminal i, draw a feasible AP from its
neighborhood, keep the move only if the fitness strictly improves. The
coordination step then adopts the best worker's result.

Workers are simulated one after another with pre-drawn random numbers, so a
run is reproducible from its seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO

import numpy as np
from numba import njit

from .model import (UNASSIGNED, Assignment, InitMode, OptimizerConfig, Problem,
                    ap_loads, capacity_tol, is_feasible, total_fitness)


class InfeasibleAssignmentError(ValueError):
    pass


class InstanceTooLargeError(ValueError):
    pass


@dataclass
class SearchResult:
    assignment: Assignment
    fitness: float
    iterations: int
    reassignments: int
    trace: list[tuple[int, float, int]] = field(default_factory=list)


def _csr(mask: np.ndarray):
    """Row pointers and column indices of a boolean matrix."""
    rows, cols = np.nonzero(mask)
    ptr = np.zeros(mask.shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=mask.shape[0]), out=ptr[1:])
    return ptr, cols.astype(np.int64)


@dataclass(frozen=True)
class _Compiled:
    """Problem flattened into CSR arrays for the kernel."""

    q: np.ndarray
    rate: np.ndarray
    mouse_t: np.ndarray
    ap_eleph: np.ndarray
    cap: np.ndarray
    tol: np.ndarray
    cptr: np.ndarray
    cidx: np.ndarray
    cqr: np.ndarray
    mptr: np.ndarray
    midx: np.ndarray
    rptr: np.ndarray
    ridx: np.ndarray

    @classmethod
    def build(cls, p: Problem) -> "_Compiled":
        # problems are immutable, so the flattened form is cached on them
        cached = p.__dict__.get("_compiled")
        if cached is None:
            cached = cls._flatten(p)
            object.__setattr__(p, "_compiled", cached)
        return cached

    @classmethod
    def _flatten(cls, p: Problem) -> "_Compiled":
        usable = p.q > p.tau
        cptr, cidx = _csr(p.compatible())
        rows = np.repeat(np.arange(p.n), np.diff(cptr))
        cqr = p.q[rows, cidx] * p.rate[rows]
        mouse_nb = usable & ~p.ap_elephant[None, :] & ~p.elephant[:, None]
        mptr, midx = _csr(mouse_nb)
        rptr, ridx = _csr(mouse_nb.T)
        return cls(p.q, p.rate.astype(np.float64), ~p.elephant, p.ap_elephant.copy(),
                   p.capacity.astype(np.float64), capacity_tol(p.capacity).astype(np.float64),
                   cptr, cidx, cqr, mptr, midx, rptr, ridx)

    def values(self, ap: np.ndarray) -> np.ndarray:
        """Per-terminal q*r of the links in ``ap``."""
        val = np.zeros(len(ap))
        rows = np.flatnonzero(ap >= 0)
        val[rows] = self.q[rows, ap[rows]] * self.rate[rows]
        return val


@njit(cache=True)
def _sweep(assign, load, val, picks, us, rate, mouse_t, ap_eleph, cap, tol,
           cptr, cidx, cqr, mptr, midx, rptr, ridx, buf):
    moves = 0
    for s in range(picks.shape[0]):
        i = picks[s]
        cur = assign[i]
        r = rate[i]
        if cur >= 0:
            load[cur] -= r
        # Vacating a mouse AP frees room that may revoke an escapee's right
        # to stay on an elephant AP.
        can_leave = True
        if cur >= 0 and not ap_eleph[cur]:
            room = cap[cur] - load[cur]
            for k in range(rptr[cur], rptr[cur + 1]):
                t = ridx[k]
                if t != i:
                    at = assign[t]
                    if at >= 0 and ap_eleph[at] and room - rate[t] > tol[cur]:
                        can_leave = False
                        break
        may_escape = True
        if mouse_t[i]:
            for k in range(mptr[i], mptr[i + 1]):
                a = midx[k]
                if cap[a] - load[a] - r > tol[a]:
                    may_escape = False
                    break
        m = 0
        for k in range(cptr[i], cptr[i + 1]):
            j = cidx[k]
            if j != cur:
                if not can_leave:
                    continue
                if load[j] + r > cap[j] + tol[j]:
                    continue
                if mouse_t[i] and ap_eleph[j] and not may_escape:
                    continue
            buf[m] = k
            m += 1
        moved = False
        if m > 0:
            pos = int(us[s] * m)
            if pos >= m:
                pos = m - 1
            k = buf[pos]
            if cqr[k] > val[i]:
                j = cidx[k]
                assign[i] = j
                load[j] += r
                val[i] = cqr[k]
                moves += 1
                moved = True
        if not moved and cur >= 0:
            load[cur] += r
    return moves


def _feasible_slots(c: _Compiled, ap: np.ndarray, load: np.ndarray, i: int) -> list[int]:
    """Compatible APs that unassigned terminal ``i`` could join right now."""
    out = []
    r = c.rate[i]
    for k in range(c.cptr[i], c.cptr[i + 1]):
        j = c.cidx[k]
        if load[j] + r > c.cap[j] + c.tol[j]:
            continue
        if c.mouse_t[i] and c.ap_eleph[j]:
            mouse = c.midx[c.mptr[i]:c.mptr[i + 1]]
            if np.any(c.cap[mouse] - load[mouse] - r > c.tol[mouse]):
                continue
        out.append(int(k))
    return out


def initial_assignment(problem: Problem, mode: InitMode = InitMode.EMPTY,
                       prev: Assignment | None = None) -> Assignment:
    """Starting point for the search.

    In PREVIOUS mode, links of ``prev`` that broke (out of range, wrong type,
    AP overloaded, or an escape that is no longer justified) are dropped and
    each dropped terminal is reconnected to its best-quality AP that can
    still take it, if any.
    """
    n = problem.n
    if mode is InitMode.EMPTY or n == 0:
        return Assignment.empty(n)
    if prev is None:
        raise ValueError("PREVIOUS init needs the previous assignment")
    if len(prev) != n:
        raise ValueError(f"previous assignment has {len(prev)} rows, problem has {n}")
    c = _Compiled.build(problem)
    compat = problem.compatible()
    ap = prev.ap.copy()
    ap[ap >= problem.l] = UNASSIGNED
    dropped = []
    for i in np.flatnonzero(ap >= 0):
        if not compat[i, ap[i]]:
            dropped.append(int(i))
            ap[i] = UNASSIGNED

    load = np.zeros(problem.l)
    for i in np.flatnonzero(ap >= 0):
        j = ap[i]
        if load[j] + c.rate[i] > c.cap[j] + c.tol[j]:
            dropped.append(int(i))
            ap[i] = UNASSIGNED
        else:
            load[j] += c.rate[i]

    for i in np.flatnonzero(ap >= 0):
        j = ap[i]
        if c.mouse_t[i] and c.ap_eleph[j]:
            mouse = c.midx[c.mptr[i]:c.mptr[i + 1]]
            if np.any(c.cap[mouse] - load[mouse] - c.rate[i] > c.tol[mouse]):
                dropped.append(int(i))
                ap[i] = UNASSIGNED
                load[j] -= c.rate[i]

    for i in sorted(dropped):
        slots = _feasible_slots(c, ap, load, i)
        if slots:
            k = max(slots, key=lambda k: (c.cqr[k], -c.cidx[k]))
            ap[i] = c.cidx[k]
            load[ap[i]] += c.rate[i]
    result = Assignment(ap, prev.event)
    check = is_feasible(result, problem)
    if not check:  # pragma: no cover - repair is constructive
        raise AssertionError(f"repair produced an infeasible start: {check.violations[:3]}")
    return result


def local_search(problem: Problem, config: OptimizerConfig = OptimizerConfig(),
                 initial: Assignment | None = None, rng: np.random.Generator | None = None,
                 check: bool = False) -> SearchResult:
    """Maximize total q*r subject to the assignment constraints.

    Args:
        problem: instance to solve.
        config: iteration budget, worker count, picks per iteration, epsilon.
        initial: feasible starting point; empty when omitted.
        rng: random source; defaults to one seeded with ``config.rng_seed``.
        check: assert feasibility after every coordination step.

    Raises:
        InfeasibleAssignmentError: ``initial`` violates a constraint.
    """
    n = problem.n
    start = Assignment.empty(n) if initial is None else initial
    if len(start) != n:
        raise ValueError("initial assignment does not match the problem")
    feas = is_feasible(start, problem)
    if not feas:
        raise InfeasibleAssignmentError(f"initial assignment is infeasible: {feas.violations}")
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    c = _Compiled.build(problem)
    best = start.ap.copy()
    best_val = c.values(best)
    best_fit = float(best_val.sum())
    trace = [(0, best_fit, 0)]
    if n == 0 or config.iterations == 0:
        return SearchResult(start, best_fit, 0, 0, trace)

    W = config.parallel_width
    P = config.picks_per_iteration or n
    buf = np.empty(max(1, int(np.diff(c.cptr).max(initial=0))), dtype=np.int64)
    used = 0
    for it in range(1, config.iterations + 1):
        picks = rng.integers(0, n, size=(W, P))
        us = rng.random((W, P))
        base_load = ap_loads(best, c.rate, problem.l)
        round_best, round_val, round_fit = best, best_val, best_fit
        for w in range(W):
            assign, load, val = best.copy(), base_load.copy(), best_val.copy()
            _sweep(assign, load, val, picks[w], us[w], c.rate, c.mouse_t, c.ap_eleph,
                   c.cap, c.tol, c.cptr, c.cidx, c.cqr, c.mptr, c.midx, c.rptr, c.ridx, buf)
            fit = float(val.sum())
            if fit > round_fit:
                round_best, round_val, round_fit = assign, val, fit
        improvement = round_fit - best_fit
        best, best_val, best_fit = round_best, round_val, round_fit
        used = it
        reassigned = int(np.count_nonzero(best != start.ap))
        trace.append((it, best_fit, reassigned))
        if check:
            feas = is_feasible(best, problem)
            if not feas:
                raise AssertionError(f"iteration {it} left the feasible region: {feas.violations}")
        if config.epsilon is not None and abs(improvement) < config.epsilon:
            break
    final = Assignment(best, start.event)
    return SearchResult(final, total_fitness(final, problem.q, problem.rate), used,
                        int(np.count_nonzero(best != start.ap)), trace)


def write_trace(trace, fh: IO[str]):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["iteration", "best_fitness", "reassignments"])
    for it, fit, moves in trace:
        w.writerow([it, repr(float(fit)), moves])


MAX_ORACLE_TERMINALS = 8
MAX_ORACLE_APS = 5


def brute_force_oracle(problem: Problem, chunk: int = 200_000) -> tuple[float, Assignment]:
    """Exhaustive optimum over every assignment with at most one AP per row.

    Constraints are re-derived here in vectorized form rather than calling
    the search kernel. Ties keep the first assignment in enumeration order.
    """
    n, l = problem.n, problem.l
    if n > MAX_ORACLE_TERMINALS or l > MAX_ORACLE_APS:
        raise InstanceTooLargeError(f"oracle limited to n<={MAX_ORACLE_TERMINALS}, "
                                    f"l<={MAX_ORACLE_APS}; got n={n}, l={l}")
    if n == 0:
        return 0.0, Assignment.empty(0)
    q, rate, cap = problem.q, problem.rate, problem.capacity
    tol = capacity_tol(cap)
    usable = q > problem.tau
    qr = np.hstack([q * rate[:, None], np.zeros((n, 1))])  # column l = unassigned
    total = (l + 1) ** n
    best_fit, best_code = -1.0, 0
    radix = (l + 1) ** np.arange(n)
    for lo in range(0, total, chunk):
        codes = np.arange(lo, min(total, lo + chunk))
        A = (codes[:, None] // radix[None, :]) % (l + 1)  # value l means unassigned
        ok = np.ones(len(codes), dtype=bool)
        load = np.zeros((len(codes), l))
        for i in range(n):
            col = A[:, i]
            linked = col < l
            cj = np.minimum(col, l - 1)
            ok &= ~linked | usable[i, cj]
            if problem.elephant[i]:
                ok &= ~linked | problem.ap_elephant[cj]
            for j in range(l):
                load[:, j] += rate[i] * (col == j)
        ok &= np.all(load <= cap + tol, axis=1)
        for i in range(n):
            if problem.elephant[i]:
                continue
            col = A[:, i]
            on_eleph = (col < l) & problem.ap_elephant[np.minimum(col, l - 1)]
            for a in range(l):
                if problem.ap_elephant[a] or not usable[i, a]:
                    continue
                ok &= ~(on_eleph & (cap[a] - load[:, a] - rate[i] > tol[a]))
        fit = qr[np.arange(n)[None, :], A].sum(axis=1)
        fit = np.where(ok, fit, -1.0)
        k = int(np.argmax(fit))
        if fit[k] > best_fit:
            best_fit, best_code = float(fit[k]), int(codes[k])
    digits = (best_code // radix) % (l + 1)
    ap = np.where(digits == l, UNASSIGNED, digits)
    return best_fit, Assignment(ap)
