"""Set functions over ``[1:n]``: Lovász extension, greedy vertices and minimization.

Subsets are integer bitmasks, bit ``k`` standing for element ``k+1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SetFunction",
    "ChainPermutation",
    "SfmResult",
    "TightSets",
    "ConvergenceError",
    "greedy_vertex",
    "lovasz_extension",
    "minimize_exhaustive",
    "minimize_min_norm",
    "tight_sets",
    "submodularity_slack",
    "EXHAUSTIVE_LIMIT",
]

EXHAUSTIVE_LIMIT = 20
TIE_WINDOW = 1e-9
PIVOT_TOL = 1e-12
ZERO_TOL = 1e-9


class ConvergenceError(RuntimeError):
    def __init__(self, msg, best_value, lower_bound, best_set):
        super().__init__(msg)
        self.best_value = best_value
        self.lower_bound = lower_bound
        self.best_set = best_set


class SetFunction:
    """Deterministic set-function oracle, normalized so that ``g(0) == 0``.

    The raw function value at the empty set is kept in ``offset``; ``g(A)``
    returns ``f(A) - offset``.  Build it either from a callable on bitmasks or
    from a dense array of ``2**n`` values.
    """

    def __init__(self, n: int, fn: Callable[[int], float] | None = None,
                 values=None):
        if n < 0:
            raise ValueError("ground set size must be >= 0")
        self.n = n
        self._values = None
        if values is not None:
            v = np.asarray(values, dtype=float)
            if v.shape != (1 << n,):
                raise ValueError(f"expected {1 << n} values, got shape {v.shape}")
            self.offset = float(v[0])
            self._values = v - self.offset
            self._fn = None
        elif fn is not None:
            self._fn = fn
            self.offset = float(fn(0))
        else:
            raise ValueError("need a callable or a value array")

    @classmethod
    def from_values(cls, values) -> "SetFunction":
        v = np.asarray(values, dtype=float)
        n = v.size.bit_length() - 1
        if v.size != 1 << n:
            raise ValueError(f"{v.size} values is not a power of two")
        return cls(n, values=v)

    @property
    def normalized(self) -> bool:
        return True

    @property
    def full(self) -> int:
        return (1 << self.n) - 1

    def __call__(self, A: int) -> float:
        if self._values is not None:
            return float(self._values[A])
        return float(self._fn(A)) - self.offset

    def many(self, masks) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.int64)
        if self._values is not None:
            return self._values[masks]
        return np.array([self(int(A)) for A in masks.ravel()]).reshape(masks.shape)

    def all_values(self) -> np.ndarray:
        if self._values is not None:
            return self._values
        return self.many(np.arange(1 << self.n))


@dataclass(frozen=True)
class ChainPermutation:
    """Ordering of ``[1:n]`` (1-based labels) and its chain of prefix sets."""

    pi: tuple[int, ...]

    def __post_init__(self):
        pi = tuple(int(k) for k in self.pi)
        if sorted(pi) != list(range(1, len(pi) + 1)):
            raise ValueError(f"{pi} is not a permutation of 1..{len(pi)}")
        object.__setattr__(self, "pi", pi)

    @classmethod
    def from_order(cls, order) -> "ChainPermutation":
        """From 0-based element indices."""
        return cls(tuple(int(i) + 1 for i in order))

    @classmethod
    def identity(cls, n: int) -> "ChainPermutation":
        return cls(tuple(range(1, n + 1)))

    @property
    def n(self) -> int:
        return len(self.pi)

    @property
    def order(self) -> np.ndarray:
        return np.array(self.pi, dtype=np.int64) - 1

    @property
    def prefix_sets(self) -> list[int]:
        sets = [0]
        for k in self.pi:
            sets.append(sets[-1] | 1 << (k - 1))
        return sets


def _prefix_masks(order) -> np.ndarray:
    bits = np.left_shift(1, np.asarray(order, dtype=np.int64))
    return np.concatenate([[0], np.cumsum(bits)])


def _greedy(g: SetFunction, order) -> tuple[np.ndarray, np.ndarray]:
    """Greedy base vertex for a 0-based order; also returns the chain values."""
    order = np.asarray(order, dtype=np.int64)
    chain = g.many(_prefix_masks(order))
    x = np.empty(g.n)
    x[order] = np.diff(chain)
    return x, chain


def greedy_vertex(g: SetFunction, pi: ChainPermutation) -> np.ndarray:
    """Chain-difference vector ``x[pi_i] = g(P_i) - g(P_{i-1})``."""
    if pi.n != g.n:
        raise ValueError(f"permutation of length {pi.n} for ground set of size {g.n}")
    return _greedy(g, pi.order)[0]


def _descending_order(w: np.ndarray) -> np.ndarray:
    # stable sort on -w keeps equal weights in ascending index order
    return np.argsort(-w, kind="stable")


def lovasz_extension(g: SetFunction, w) -> float:
    w = np.asarray(w, dtype=float)
    if w.shape != (g.n,):
        raise ValueError(f"weight vector must have length {g.n}")
    x, _ = _greedy(g, _descending_order(w))
    return float(w @ x)


@dataclass
class SfmResult:
    min_value: float
    minimizer: int
    minimizers: list[int] = field(default_factory=list)
    base_point: np.ndarray | None = None
    minimal: int | None = None
    maximal: int | None = None
    iterations: int = 0
    lower_bound: float | None = None


def _popcount(masks: np.ndarray) -> np.ndarray:
    masks = masks.astype(np.int64)
    c = np.zeros_like(masks)
    while np.any(masks):
        c += masks & 1
        masks = masks >> 1
    return c


def minimize_exhaustive(g: SetFunction, limit: int = EXHAUSTIVE_LIMIT) -> SfmResult:
    """Minimum over all ``2**n`` subsets.  Minimizers within 1e-9 of the
    minimum are listed by cardinality, then mask."""
    if g.n > limit:
        raise ValueError(f"exhaustive minimization refused for n={g.n} > {limit}")
    vals = g.all_values()
    best = float(vals.min())
    hits = np.flatnonzero(vals <= best + TIE_WINDOW)
    hits = hits[np.lexsort((hits, _popcount(hits)))]
    mins = [int(A) for A in hits]
    return SfmResult(best, mins[0], mins, minimal=mins[0],
                     maximal=int(np.bitwise_or.reduce(hits)) if len(hits) else 0,
                     lower_bound=best)


def _affine_min(S: np.ndarray) -> np.ndarray:
    """Coefficients of the min-norm point of the affine hull of the columns of S."""
    k = S.shape[1]
    M = np.zeros((k + 1, k + 1))
    M[:k, :k] = S.T @ S
    M[:k, k] = 1.0
    M[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    return sol[:k]


def minimize_min_norm(g: SetFunction, tol: float = 1e-9,
                      max_iter: int | None = None) -> SfmResult:
    """Submodular minimization via the minimum-norm base point (Fujishige-Wolfe).

    Stops once the best level set of the current base point is within
    ``tol * (|min| + 1)`` of the lower bound ``sum(min(x, 0))``.  The
    returned minimizer is the best of the two thresholded sets
    ``{x < 0}`` and ``{x <= 0}`` and the level sets visited on the way.
    """
    n = g.n
    if n == 0:
        return SfmResult(0.0, 0, [0], np.zeros(0), 0, 0, 0, 0.0)
    if max_iter is None:
        max_iter = max(10 * n * n, 50)

    x, _ = _greedy(g, np.arange(n))
    S = x[:, None].copy()
    lam = np.array([1.0])
    best_val, best_set = 0.0, 0
    lower = -np.inf

    def consider(val, A):
        nonlocal best_val, best_set
        if val < best_val - 1e-15 or (abs(val - best_val) <= 1e-15 and A < best_set):
            best_val, best_set = val, A

    it = 0
    converged = False
    while it < max_iter:
        it += 1
        order = np.argsort(x, kind="stable")
        q, chain = _greedy(g, order)
        prefixes = _prefix_masks(order)
        k = int(np.argmin(chain))
        consider(float(chain[k]), int(prefixes[k]))
        lower = max(lower, float(np.minimum(x, 0).sum()))
        if best_val - lower <= tol * (abs(best_val) + 1):
            converged = True
            break
        xx = float(x @ x)
        if xx - float(x @ q) <= PIVOT_TOL * max(1.0, xx):
            converged = True
            break
        if any(np.allclose(q, S[:, j], rtol=0, atol=1e-14) for j in range(S.shape[1])):
            # no new vertex: x is optimal up to round-off
            converged = True
            break
        S = np.column_stack([S, q])
        lam = np.append(lam, 0.0)
        while True:
            a = _affine_min(S)
            if np.all(a > PIVOT_TOL):
                lam = a
                x = S @ lam
                break
            neg = a <= PIVOT_TOL
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg & (lam - a > 0), lam / (lam - a), np.inf)
            theta = min(1.0, float(ratios.min()))
            lam = theta * a + (1 - theta) * lam
            keep = lam > PIVOT_TOL
            if not np.any(keep):
                keep[np.argmax(lam)] = True
            S, lam = S[:, keep], lam[keep]
            lam = lam / lam.sum()
            x = S @ lam
            if S.shape[1] == 1:
                break

    minimal = sum(1 << i for i in range(n) if x[i] < -ZERO_TOL)
    maximal = sum(1 << i for i in range(n) if x[i] <= ZERO_TOL)
    for A in (minimal, maximal):
        consider(g(A), A)
    if not converged and best_val - lower > tol * (abs(best_val) + 1):
        raise ConvergenceError(
            f"min-norm point did not converge in {max_iter} iterations "
            f"(best {best_val:.3g}, bound {lower:.3g})", best_val, lower, best_set)
    return SfmResult(best_val, best_set, [best_set], x, minimal, maximal, it,
                     min(lower, best_val))


@dataclass
class TightSets:
    members: list[int]
    minimal: int | None
    maximal: int | None
    is_lattice: bool
    closure_violation: tuple[int, int] | None = None


def tight_sets(g: SetFunction, level: float, tol: float = 1e-9,
               limit: int = EXHAUSTIVE_LIMIT) -> TightSets:
    """All sets with ``g(A) <= level + tol`` and a check that they form a lattice."""
    if g.n > limit:
        raise ValueError(f"tight set enumeration refused for n={g.n} > {limit}")
    vals = g.all_values()
    members = np.flatnonzero(vals <= level + tol)
    if members.size == 0:
        return TightSets([], None, None, True)
    member = np.zeros(vals.size, dtype=bool)
    member[members] = True
    violation = None
    for A in members:
        bad_u = ~member[A | members]
        bad_i = ~member[A & members]
        bad = np.flatnonzero(bad_u | bad_i)
        if bad.size:
            violation = (int(A), int(members[bad[0]]))
            break
    order = np.lexsort((members, _popcount(members)))
    members = [int(A) for A in members[order]]
    return TightSets(members, int(np.bitwise_and.reduce(members)),
                     int(np.bitwise_or.reduce(members)), violation is None, violation)


def submodularity_slack(values) -> tuple[float, tuple[int, int] | None]:
    """Smallest ``f(A)+f(B)-f(A|B)-f(A&B)`` over all pairs, with the pair attaining it."""
    v = np.asarray(values, dtype=float)
    masks = np.arange(v.size)
    worst, witness = np.inf, None
    for A in range(v.size):
        B = masks[A + 1:]
        if B.size == 0:
            continue
        slack = v[A] + v[B] - v[A | B] - v[A & B]
        j = int(np.argmin(slack))
        if slack[j] < worst:
            worst, witness = float(slack[j]), (A, int(B[j]))
    if witness is None:
        return 0.0, None
    return worst, witness


def modular(c: Sequence[float]) -> SetFunction:
    c = np.asarray(c, dtype=float)
    masks = np.arange(1 << c.size)
    bits = (masks[:, None] >> np.arange(c.size)) & 1
    return SetFunction(c.size, values=bits @ c)
