"""Max-min relay scheduling by constraint generation, and simple-schedule extraction."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .lp import _maxmin_lp, build_F_pi, solve_p2, FULL_LP_LIMIT
from .model import CutValueTable, Schedule, cut_members, i_fix
from .submodular import (
    ChainPermutation,
    SetFunction,
    minimize_exhaustive,
    minimize_min_norm,
    tight_sets,
)

__all__ = [
    "SolveResult",
    "Certificate",
    "Extraction",
    "VerifyResult",
    "SolverError",
    "ExtractionError",
    "solve_saddle",
    "extract_simple_schedule",
    "verify_schedule",
    "SEPARATION_LIMIT",
]

log = logging.getLogger(__name__)

# cut count up to which separation scans every cut instead of running min-norm
SEPARATION_LIMIT = 12
PERMUTATION_SEARCH_LIMIT = 8
PERMUTATION_SEARCH_CAP = 2000


class SolverError(RuntimeError):
    pass


class ExtractionError(RuntimeError):
    def __init__(self, msg, best_tau):
        super().__init__(msg)
        self.best_tau = best_tau


@dataclass
class VerifyResult:
    achieved_rate: float
    worst_cut: int


def _cut_function(table: CutValueTable, lam: Schedule) -> SetFunction:
    if table.n_relays <= SEPARATION_LIMIT:
        return SetFunction.from_values(table.cut_vector(lam))
    return SetFunction(table.n_relays, lambda A: i_fix(table, lam, A))


def verify_schedule(table: CutValueTable, lam: Schedule) -> VerifyResult:
    """Smallest cut flow ``min_A i_fix(lam, A)`` and a cut attaining it."""
    if not isinstance(lam, Schedule):
        lam = Schedule(lam)
    if lam.n_states != table.n_states:
        raise ValueError(f"schedule has {lam.n_states} states, table has {table.n_states}")
    g = _cut_function(table, lam)
    if table.n_relays <= SEPARATION_LIMIT:
        res = minimize_exhaustive(g)
    else:
        res = minimize_min_norm(g)
    return VerifyResult(res.min_value + g.offset, res.minimizer)


@dataclass
class Extraction:
    schedule: Schedule
    permutation: ChainPermutation | None
    tau: float
    method: str
    simple: bool
    tight_cuts: list[int] = field(default_factory=list)
    diagnostic: str = ""


def _lattice_closure(members: set[int]) -> set[int]:
    closed = set(members)
    frontier = list(closed)
    while frontier:
        new = []
        for A in frontier:
            for B in list(closed):
                for C in (A | B, A & B):
                    if C not in closed:
                        closed.add(C)
                        new.append(C)
        frontier = new
    return closed


def _maximal_chain(family: set[int]) -> list[int]:
    """Chain from the meet to the join of a lattice, stepping to the smallest cover."""
    bottom = top = None
    for A in family:
        bottom = A if bottom is None else bottom & A
        top = A if top is None else top | A
    chain = [bottom]
    while chain[-1] != top:
        X = chain[-1]
        above = [Y for Y in family if Y != X and Y & X == X]
        chain.append(min(above, key=lambda Y: (bin(Y).count("1"), Y)))
    return chain


def _permutation_through(chain: list[int], n: int) -> ChainPermutation:
    """Permutation whose prefix chain passes through every set of ``chain``."""
    order = []
    prev = 0
    for X in list(chain) + [(1 << n) - 1]:
        order.extend(i for i in range(n) if (X & ~prev) >> i & 1)
        prev |= X
    return ChainPermutation.from_order(order)


def _permutations_consistent(bottom: int, top: int, n: int):
    """Permutations whose prefix chain contains ``bottom`` and ``top``."""
    lo = [i for i in range(n) if bottom >> i & 1]
    mid = [i for i in range(n) if (top & ~bottom) >> i & 1]
    hi = [i for i in range(n) if not top >> i & 1]
    for p_lo in permutations(lo):
        for p_mid in permutations(mid):
            for p_hi in permutations(hi):
                yield ChainPermutation.from_order(p_lo + p_mid + p_hi)


def _restricted_full_lp(table: CutValueTable, support: list[int]) -> Schedule:
    """Max-min over all cuts with the schedule confined to ``support``."""
    M = np.asarray(table.restricted(support)).T
    sol = _maxmin_lp(M)
    p = np.zeros(table.n_states)
    p[support] = sol.x[1:]
    return Schedule(p / p.sum()).pruned()


def extract_simple_schedule(table: CutValueTable, lam_raw, c_prime: float,
                            tol: float = 1e-7, tol_tight: float | None = None,
                            ) -> Extraction:
    """Turn an optimal schedule into one with at most ``N + 1`` active states.

    The cuts that are tight at ``lam_raw`` form a lattice; a maximal chain
    through it is extended to a permutation whose chain program has a sparse
    optimal vertex.  The result is accepted only if its smallest cut flow is
    within ``tol`` of ``c_prime``.
    """
    n = table.n_relays
    lam = Schedule(lam_raw).pruned() if not isinstance(lam_raw, Schedule) else lam_raw.pruned()
    if tol_tight is None:
        tol_tight = 10 * tol
    target = c_prime - tol

    g = _cut_function(table, lam)
    if n <= SEPARATION_LIMIT:
        ts = tight_sets(g, c_prime - g.offset, tol_tight)
        tight = ts.members
        if not tight:
            raise ExtractionError(
                f"schedule does not reach {c_prime:.6g} on any cut", float(g.all_values().min() + g.offset))
        closure = _lattice_closure(set(tight))
    else:
        res = minimize_min_norm(g)
        tight = sorted({res.minimal, res.maximal, res.minimizer})
        closure = _lattice_closure(set(tight))
    chain = _maximal_chain(closure)
    pi = _permutation_through(chain, n)

    if lam.is_simple(n) and verify_schedule(table, lam).achieved_rate >= target:
        return Extraction(lam, pi, c_prime, "input", True, tight)

    best_tau = -np.inf
    p2 = solve_p2(build_F_pi(table, pi))
    achieved = verify_schedule(table, p2.schedule).achieved_rate
    best_tau = max(best_tau, achieved)
    if achieved >= target and p2.schedule.is_simple(n):
        return Extraction(p2.schedule, pi, achieved, "chain", True, tight)

    if n <= PERMUTATION_SEARCH_LIMIT:
        bottom, top = chain[0], chain[-1]
        for k, cand in enumerate(_permutations_consistent(bottom, top, n)):
            if k >= PERMUTATION_SEARCH_CAP:
                break
            if cand == pi:
                continue
            p2 = solve_p2(build_F_pi(table, cand))
            if p2.tau < target:
                continue
            achieved = verify_schedule(table, p2.schedule).achieved_rate
            best_tau = max(best_tau, achieved)
            if achieved >= target and p2.schedule.is_simple(n):
                return Extraction(p2.schedule, cand, achieved, "permutation-search", True,
                                  tight, "lattice chain failed verification")

    if n <= FULL_LP_LIMIT:
        sched = _restricted_full_lp(table, lam.support)
        achieved = verify_schedule(table, sched).achieved_rate
        best_tau = max(best_tau, achieved)
        if achieved >= target and sched.is_simple(n):
            return Extraction(sched, pi, achieved, "support-vertex", True, tight,
                              "no chain program reached the target")

    log.warning("simple schedule extraction failed; returning the raw schedule")
    return Extraction(lam, pi, verify_schedule(table, lam).achieved_rate, "raw",
                      lam.is_simple(n), tight,
                      f"extraction exhausted, best simple rate {best_tau:.9g}")


@dataclass
class Certificate:
    min_cut_value_at_schedule: float
    worst_cut: int
    gap_to_master: float


@dataclass
class TraceStep:
    master_value: float
    violated_cut: int | None
    violation: float


@dataclass
class SolveResult:
    rate: float
    schedule: Schedule
    tight_cuts: list[int]
    permutation: ChainPermutation | None
    iterations: int
    trace: list[TraceStep]
    certificate: Certificate
    raw_schedule: Schedule
    extraction_method: str
    simple: bool
    working_cuts: list[int] = field(default_factory=list)

    def to_dict(self, n_bits: int) -> dict:
        return {
            "rate_bits": self.rate,
            "schedule": [{"state_bits": lbl, "prob": p}
                         for lbl, p in self.schedule.labelled(n_bits)],
            "tight_cuts": [list(cut_members(A)) for A in self.tight_cuts],
            "permutation": list(self.permutation.pi) if self.permutation else None,
            "iterations": self.iterations,
            "simple": self.simple,
            "extraction": self.extraction_method,
            "certificate": {
                "min_cut_value_at_schedule": self.certificate.min_cut_value_at_schedule,
                "worst_cut": list(cut_members(self.certificate.worst_cut)),
                "gap_to_master": self.certificate.gap_to_master,
            },
            "trace": [
                {"master_value": t.master_value,
                 "violated_cut": None if t.violated_cut is None else list(cut_members(t.violated_cut)),
                 "violation": t.violation}
                for t in self.trace
            ],
        }


def solve_saddle(table: CutValueTable, tol: float = 1e-7, extract: bool = True,
                 max_iter: int | None = None) -> SolveResult:
    """``max_lam min_A i_fix(lam, A)`` by constraint generation.

    The master LP keeps a working set of cuts; each round adds the cut with
    the smallest flow under the master's schedule until no cut falls more
    than ``tol * max(1, tau)`` below the master value.
    """
    n = table.n_relays
    full = (1 << n) - 1
    working = [0, full] + [1 << k for k in range(n)]
    working = list(dict.fromkeys(working))
    if max_iter is None:
        max_iter = (1 << n) + 1
    trace = []
    prev = np.inf
    it = 0
    while True:
        it += 1
        M = np.asarray(table.columns(working)).T
        sol = _maxmin_lp(M)
        lam = Schedule(sol.x[1:] / sol.x[1:].sum())
        tau = float(sol.x[0])
        if tau > prev + 1e-9 * max(1.0, abs(prev)):
            raise SolverError(f"master value rose from {prev} to {tau}")
        prev = tau
        sep = verify_schedule(table, lam)
        thresh = tol * max(1.0, abs(tau))
        violation = tau - sep.achieved_rate
        if violation > thresh:
            if sep.worst_cut in working:
                raise SolverError(f"cut {sep.worst_cut} generated twice")
            working.append(sep.worst_cut)
            trace.append(TraceStep(tau, sep.worst_cut, violation))
            if it > max_iter:
                raise SolverError("constraint generation did not terminate")
            continue
        trace.append(TraceStep(tau, None, max(violation, 0.0)))
        break

    raw = lam.pruned()
    if extract:
        ex = extract_simple_schedule(table, raw, tau, tol)
    else:
        ex = Extraction(raw, None, sep.achieved_rate, "none", raw.is_simple(n))
    final = verify_schedule(table, ex.schedule)
    cert = Certificate(final.achieved_rate, final.worst_cut, tau - final.achieved_rate)
    return SolveResult(tau, ex.schedule, ex.tight_cuts, ex.permutation, it, trace,
                       cert, raw, ex.method, ex.simple, working)
