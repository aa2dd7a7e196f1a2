"""Dense two-phase primal simplex and the max-min schedule programs built on it."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .model import CutValueTable, Schedule
from .submodular import ChainPermutation

__all__ = [
    "LpStatus",
    "LpProblem",
    "LpSolution",
    "DegeneracyError",
    "FPiMatrix",
    "P2Result",
    "FullLpResult",
    "simplex_solve",
    "build_F_pi",
    "build_H_pi_f",
    "solve_p2",
    "solve_full_lp",
    "best_permutation_value",
    "FULL_LP_LIMIT",
]

PIVOT_TOL = 1e-11
COST_TOL = 1e-10
FEAS_TOL = 1e-9
DUALITY_TOL = 1e-8
FULL_LP_LIMIT = 10
DEGENERATE_RUN = 50


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class DegeneracyError(ArithmeticError):
    """Only pivots below the pivot tolerance are available."""


@dataclass
class LpProblem:
    """maximize ``c @ x`` s.t. ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq``, ``x >= 0``."""

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size

        def rows(A, b, name):
            if A is None:
                return np.zeros((0, n)), np.zeros(0)
            A = np.atleast_2d(np.asarray(A, dtype=float))
            b = np.asarray(b, dtype=float).ravel()
            if A.shape != (b.size, n):
                raise ValueError(f"{name} has shape {A.shape}, expected ({b.size}, {n})")
            return A, b

        self.A_ub, self.b_ub = rows(self.A_ub, self.b_ub, "A_ub")
        self.A_eq, self.b_eq = rows(self.A_eq, self.b_eq, "A_eq")
        for arr in (self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP data must be finite")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b_ub.size + self.b_eq.size


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    value: float | None = None
    basis: tuple[int, ...] = ()
    dual: np.ndarray | None = None
    duality_gap: float | None = None
    iterations: int = 0

    @property
    def support(self) -> list[int]:
        if self.x is None:
            return []
        return [int(i) for i in np.flatnonzero(np.abs(self.x) > FEAS_TOL)]


class _Tableau:
    def __init__(self, T, basis):
        self.T = T          # rows: constraints, last column rhs
        self.basis = basis  # basic column per row

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j

    def run(self, cost, allowed, max_iter, rule="hybrid"):
        """Maximize ``cost @ z`` over the tableau.

        ``rule="bland"`` always enters the lowest-index improving column.
        ``"hybrid"`` enters the largest reduced cost but falls back to Bland's
        rule after a run of degenerate pivots, which keeps the anti-cycling
        guarantee while needing far fewer pivots on large programs.
        """
        T = self.T
        it = 0
        degenerate_run = 0
        scale = max(1.0, float(np.abs(cost).max()))
        while True:
            cb = cost[self.basis]
            reduced = cost[:-1] - cb @ T[:, :-1]
            improving = (reduced > COST_TOL * scale) & allowed
            cand = np.flatnonzero(improving)
            if cand.size == 0:
                return "optimal", it
            if rule == "bland" or degenerate_run >= DEGENERATE_RUN:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(reduced[cand])])
            colj = T[:, j]
            pos = colj > PIVOT_TOL
            if not np.any(pos):
                if np.any(colj > 0):
                    raise DegeneracyError(
                        f"entering column {j} has only pivots below {PIVOT_TOL}")
                return "unbounded", it
            ratios = np.full(colj.size, np.inf)
            ratios[pos] = np.maximum(T[pos, -1], 0.0) / colj[pos]
            rmin = ratios.min()
            ties = np.flatnonzero(ratios <= rmin + 1e-12 * max(1.0, rmin))
            r = int(ties[np.argmin(np.asarray(self.basis)[ties])])
            degenerate_run = degenerate_run + 1 if rmin <= 1e-12 else 0
            self.pivot(r, j)
            it += 1
            if it > max_iter:
                raise RuntimeError("simplex iteration limit exceeded")


def simplex_solve(p: LpProblem, max_iter: int = 50000, rule: str = "hybrid") -> LpSolution:
    """Two-phase primal simplex on a dense tableau.

    The returned ``dual`` lists multipliers for the inequality rows (all
    nonnegative) followed by the equality rows.
    """
    m_ub, m_eq, n = p.b_ub.size, p.b_eq.size, p.n_vars
    m = m_ub + m_eq
    A = np.vstack([p.A_ub, p.A_eq]) if m else np.zeros((0, n))
    b = np.concatenate([p.b_ub, p.b_eq])
    # standard form columns: x, slacks for ub rows, artificials
    S = np.zeros((m, m_ub))
    S[np.arange(m_ub), np.arange(m_ub)] = 1.0
    A_std = np.hstack([A, S])
    sign = np.where(b < 0, -1.0, 1.0)
    A_rows = A_std * sign[:, None]
    b_rows = b * sign
    need_art = [i for i in range(m) if i >= m_ub or sign[i] < 0]
    n_std = n + m_ub
    n_art = len(need_art)
    T = np.zeros((m, n_std + n_art + 1))
    T[:, :n_std] = A_rows
    T[:, -1] = b_rows
    basis = []
    for i in range(m):
        if i in need_art:
            k = need_art.index(i)
            T[i, n_std + k] = 1.0
            basis.append(n_std + k)
        else:
            basis.append(n + i)
    tab = _Tableau(T, basis)
    total = n_std + n_art
    iters = 0

    if n_art:
        cost1 = np.zeros(total + 1)
        cost1[n_std:total] = -1.0
        _, k = tab.run(cost1, np.ones(total, bool), max_iter, rule)
        iters += k
        infeas = float(sum(tab.T[r, -1] for r in range(m) if tab.basis[r] >= n_std))
        if infeas > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LpSolution(LpStatus.INFEASIBLE, iterations=iters)
        # drive zero-level artificials out of the basis where possible
        for r in range(m):
            if tab.basis[r] >= n_std:
                row = tab.T[r, :n_std]
                nz = np.flatnonzero(np.abs(row) > 1e-9)
                if nz.size:
                    tab.pivot(r, int(nz[0]))

    cost2 = np.zeros(total + 1)
    cost2[:n] = p.c
    allowed = np.zeros(total, bool)
    allowed[:n_std] = True
    status, k = tab.run(cost2, allowed, max_iter, rule)
    iters += k
    if status == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED, iterations=iters)

    # recompute primal and dual values from the basis to shed tableau drift
    basis = list(tab.basis)
    full = np.hstack([A_rows, np.zeros((m, n_art))])
    for k_art, i in enumerate(need_art):
        full[i, n_std + k_art] = 1.0
    B = full[:, basis]
    z = np.zeros(total)
    if m:
        zB = np.linalg.solve(B, b_rows)
        zB[np.abs(zB) < 1e-13] = 0.0
        z[basis] = np.maximum(zB, 0.0)
        cB = np.concatenate([p.c, np.zeros(total - n)])[basis]
        y = np.linalg.solve(B.T, cB) * sign
    else:
        y = np.zeros(0)
    x = z[:n]
    value = float(p.c @ x)
    dual_value = float(b @ y)
    gap = abs(value - dual_value)
    sol = LpSolution(LpStatus.OPTIMAL, x, value, tuple(int(j) for j in basis),
                     y, gap, iters)
    viol = max(float(np.max(p.A_ub @ x - p.b_ub, initial=0.0)),
               float(np.max(np.abs(p.A_eq @ x - p.b_eq), initial=0.0)))
    if viol > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
        raise DegeneracyError(f"basic solution violates constraints by {viol:.3g}")
    return sol


@dataclass(frozen=True, eq=False)
class FPiMatrix:
    """Cut values along the prefix chain of ``pi``: row ``k`` is ``f_s(P_k)`` over states."""

    pi: ChainPermutation
    rows: np.ndarray

    @property
    def n_relays(self) -> int:
        return self.pi.n


def build_F_pi(table: CutValueTable, pi: ChainPermutation) -> FPiMatrix:
    if pi.n != table.n_relays:
        raise ValueError(f"permutation over {pi.n} relays, table has {table.n_relays}")
    return FPiMatrix(pi, np.array(table.columns(pi.prefix_sets).T))


def build_H_pi_f(F: FPiMatrix) -> np.ndarray:
    """Row 0 is the empty-cut row; row ``i`` holds the increment of ``F`` when
    relay ``i`` joins the chain, so ``[1, w] @ H`` telescopes along ``pi``."""
    D = np.diff(F.rows, axis=0)
    H = np.empty_like(F.rows)
    H[0] = F.rows[0]
    H[np.array(F.pi.pi)] = D
    return H


@dataclass
class P2Result:
    tau: float
    schedule: Schedule
    lp: LpSolution


def _maxmin_lp(M: np.ndarray) -> LpSolution:
    """max tau s.t. tau <= M[k] @ lam for every row k, lam in the simplex."""
    k, S = M.shape
    A_ub = np.hstack([np.ones((k, 1)), -M])
    A_eq = np.concatenate([[0.0], np.ones(S)])[None, :]
    c = np.zeros(S + 1)
    c[0] = 1.0
    sol = simplex_solve(LpProblem(c, A_ub, np.zeros(k), A_eq, [1.0]))
    if sol.status is not LpStatus.OPTIMAL:
        raise RuntimeError(f"max-min program ended with status {sol.status.value}")
    return sol


def solve_p2(F: FPiMatrix) -> P2Result:
    M = F.rows
    sol = _maxmin_lp(M)
    lam = sol.x[1:]
    sched = Schedule(lam / lam.sum()).pruned()
    tau = max(float((M @ sched.probs).min()), 0.0)
    if len(sched.support) > F.n_relays + 1:
        # only possible in the degenerate zero-rate case
        s0 = int(np.argmax(M.min(axis=0)))
        sched = Schedule.point_mass(M.shape[1], s0)
        tau = float(M[:, s0].min())
    return P2Result(tau, sched, sol)


@dataclass
class FullLpResult:
    c_prime: float
    schedule: Schedule
    cut_weights: np.ndarray
    lp: LpSolution


def solve_full_lp(table: CutValueTable, limit: int = FULL_LP_LIMIT) -> FullLpResult:
    """Exact max-min over all ``2**N`` cuts by one LP."""
    if table.n_relays > limit:
        raise ValueError(f"full LP refused for N={table.n_relays} > {limit}")
    M = np.asarray(table.matrix()).T
    sol = _maxmin_lp(M)
    lam = sol.x[1:]
    sched = Schedule(lam / lam.sum()).pruned()
    rate = float((M @ sched.probs).min())
    return FullLpResult(max(rate, 0.0), sched, sol.dual[:M.shape[0]].copy(), sol)


def best_permutation_value(table: CutValueTable) -> tuple[float, ChainPermutation]:
    """Smallest P2 value over all ``N!`` chains (brute force, small N only)."""
    best = None
    for order in permutations(range(1, table.n_relays + 1)):
        pi = ChainPermutation(order)
        tau = solve_p2(build_F_pi(table, pi)).tau
        if best is None or tau < best[0]:
            best = (tau, pi)
    return best
