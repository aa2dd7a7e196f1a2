"""Network layout, relay states, cuts and per-state cut values.

Conventions used throughout the package:

* A relay state ``s`` is an integer whose bit ``j`` (least significant bit
  first) is 1 when relay ``j`` (lockstep switching) or relay antenna ``j``
  (independent switching) transmits, and 0 when it listens.  State labels
  such as ``"01"`` list the bits starting from relay/antenna 1, so ``"01"``
  means "1 listens, 2 transmits" and has index 2.
* A cut ``A`` is an integer bitmask over relays (bit ``k`` is relay ``k+1``).
  Relays in ``A`` sit on the destination side of the cut.
* All rates are in bits per channel use.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Switching",
    "NodeLayout",
    "NetworkSpec",
    "RelayState",
    "Schedule",
    "CutValueTable",
    "InvalidStateError",
    "SUPPORT_EPS",
    "cut_members",
    "cut_from_members",
    "effective_channel",
    "cut_value",
    "i_fix",
    "check_submodular",
]

SUPPORT_EPS = 1e-9
# entry count of the largest table filled eagerly (2**10 cuts x 2**10 states)
EAGER_MAX_ENTRIES = 1 << 20
_CHUNK = 8192


class InvalidStateError(ValueError):
    """A relay state or cut does not fit the network layout."""


class Switching(str, enum.Enum):
    LOCKSTEP = "lockstep"
    INDEPENDENT = "independent"


def cut_members(mask: int) -> tuple[int, ...]:
    """1-based relay labels contained in a cut bitmask."""
    return tuple(k + 1 for k in range(mask.bit_length()) if mask >> k & 1)


def cut_from_members(members: Iterable[int]) -> int:
    mask = 0
    for k in members:
        if k < 1:
            raise ValueError(f"relay labels are 1-based, got {k}")
        mask |= 1 << (k - 1)
    return mask


@dataclass(frozen=True)
class NodeLayout:
    n_relays: int
    m_source: int
    m_relay: tuple[int, ...]
    m_dest: int
    switching: Switching = Switching.LOCKSTEP

    def __post_init__(self):
        object.__setattr__(self, "m_relay", tuple(int(m) for m in self.m_relay))
        object.__setattr__(self, "switching", Switching(self.switching))
        if self.n_relays < 1:
            raise ValueError("n_relays must be >= 1")
        if len(self.m_relay) != self.n_relays:
            raise ValueError(
                f"m_relay has {len(self.m_relay)} entries for {self.n_relays} relays")
        if min(self.m_source, self.m_dest, *self.m_relay) < 1:
            raise ValueError("all antenna counts must be >= 1")

    @property
    def m_tot(self) -> int:
        return sum(self.m_relay)

    @property
    def m_all(self) -> int:
        """Antennas in the whole network (source, relays and destination)."""
        return self.m_source + self.m_tot + self.m_dest

    @property
    def n_state_bits(self) -> int:
        return self.n_relays if self.switching is Switching.LOCKSTEP else self.m_tot

    @property
    def n_states(self) -> int:
        return 1 << self.n_state_bits

    @property
    def n_cuts(self) -> int:
        return 1 << self.n_relays

    @property
    def antenna_owner(self) -> np.ndarray:
        """Relay index (0-based) of every relay antenna, in H order."""
        return np.repeat(np.arange(self.n_relays), self.m_relay)

    def transmit_pattern(self, states) -> np.ndarray:
        """Boolean (len(states), m_tot) array: which relay antennas transmit."""
        states = np.atleast_1d(np.asarray(states, dtype=np.int64))
        if states.size and (states.min() < 0 or states.max() >= self.n_states):
            raise InvalidStateError(
                f"state index out of range [0, {self.n_states - 1}]")
        if self.switching is Switching.LOCKSTEP:
            bit = self.antenna_owner
        else:
            bit = np.arange(self.m_tot)
        return (states[:, None] >> bit[None, :]) & 1 == 1

    def relay_pattern(self, cuts) -> np.ndarray:
        """Boolean (len(cuts), m_tot) array: relay antennas whose relay is in the cut."""
        cuts = np.atleast_1d(np.asarray(cuts, dtype=np.int64))
        if cuts.size and (cuts.min() < 0 or cuts.max() >= self.n_cuts):
            raise InvalidStateError(f"cut mask out of range [0, {self.n_cuts - 1}]")
        return (cuts[:, None] >> self.antenna_owner[None, :]) & 1 == 1


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Gaussian half-duplex relay network.

    ``H`` has rows ``[relay antennas..., destination antennas...]`` and
    columns ``[relay antennas..., source antennas...]``.  The relay-to-itself
    diagonal blocks are zeroed on construction; no computation reads them.
    """

    layout: NodeLayout
    H: np.ndarray

    def __post_init__(self):
        H = np.array(self.H, dtype=complex)
        lay = self.layout
        shape = (lay.m_tot + lay.m_dest, lay.m_tot + lay.m_source)
        if H.shape != shape:
            raise ValueError(f"H has shape {H.shape}, layout requires {shape}")
        if not np.all(np.isfinite(H)):
            raise ValueError("H contains non-finite entries")
        start = 0
        for m in lay.m_relay:
            H[start:start + m, start:start + m] = 0.0
            start += m
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @property
    def n_relays(self) -> int:
        return self.layout.n_relays

    def block(self, name: str) -> np.ndarray:
        """One of the four blocks ``r->r``, ``s->r``, ``r->d``, ``s->d``."""
        t = self.layout.m_tot
        return {
            "r->r": self.H[:t, :t],
            "s->r": self.H[:t, t:],
            "r->d": self.H[t:, :t],
            "s->d": self.H[t:, t:],
        }[name]


@dataclass(frozen=True)
class RelayState:
    index: int
    n_bits: int

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple(self.index >> j & 1 for j in range(self.n_bits))

    @property
    def label(self) -> str:
        return "".join(str(b) for b in self.bits)

    @classmethod
    def from_label(cls, label: str) -> "RelayState":
        if not label or set(label) - {"0", "1"}:
            raise InvalidStateError(f"bad state label {label!r}")
        return cls(sum(int(b) << j for j, b in enumerate(label)), len(label))


@dataclass
class Schedule:
    """Probability vector over relay states."""

    probs: np.ndarray
    eps: float = SUPPORT_EPS

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).copy()
        if p.ndim != 1 or p.size == 0:
            raise ValueError("schedule must be a non-empty vector")
        if np.any(p < -1e-9) or not np.all(np.isfinite(p)):
            raise ValueError("schedule has negative or non-finite entries")
        p = np.clip(p, 0.0, None)
        total = p.sum()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"schedule sums to {total}, not 1")
        self.probs = p / total

    @property
    def n_states(self) -> int:
        return self.probs.size

    @property
    def support(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.probs > self.eps)]

    def is_simple(self, n_relays: int) -> bool:
        return len(self.support) <= n_relays + 1

    def pruned(self) -> "Schedule":
        p = np.where(self.probs > self.eps, self.probs, 0.0)
        return Schedule(p / p.sum(), self.eps)

    def labelled(self, n_bits: int) -> list[tuple[str, float]]:
        return [(RelayState(s, n_bits).label, float(self.probs[s])) for s in self.support]

    @classmethod
    def point_mass(cls, n_states: int, s: int) -> "Schedule":
        p = np.zeros(n_states)
        p[s] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, n_states: int) -> "Schedule":
        return cls(np.full(n_states, 1.0 / n_states))


def _check_state_cut(net: NetworkSpec, s: int, A: int):
    lay = net.layout
    if not 0 <= s < lay.n_states:
        raise InvalidStateError(
            f"state {s} invalid for {lay.n_state_bits}-bit state space")
    if not 0 <= A < lay.n_cuts:
        raise InvalidStateError(f"cut {A} invalid for {lay.n_relays} relays")


def _row_col_keep(layout: NodeLayout, states, cuts):
    tx = layout.transmit_pattern(states)
    ina = layout.relay_pattern(cuts)
    rows = np.concatenate([~tx & ina, np.ones((tx.shape[0], layout.m_dest), bool)], axis=1)
    cols = np.concatenate([tx & ~ina, np.ones((tx.shape[0], layout.m_source), bool)], axis=1)
    return rows, cols


def effective_channel(net: NetworkSpec, s: int, A: int) -> np.ndarray:
    """Channel from the source side to the destination side of cut ``A`` in state ``s``.

    Rows are the destination antennas plus the listening antennas of relays
    in ``A``; columns are the source antennas plus the transmitting antennas
    of relays outside ``A``.  Both keep the row/column order of ``H``.
    """
    _check_state_cut(net, s, A)
    rows, cols = _row_col_keep(net.layout, [s], [A])
    return net.H[np.ix_(rows[0], cols[0])]


def _logdet2_hermitian(K: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(K)
    d = np.real(np.diagonal(L, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log2(d), axis=-1)


def cut_value(net: NetworkSpec, s: int, A: int, gain: float = 1.0,
              gram: str = "rows") -> float:
    """``log2 det(I + gain * G G^H)`` for ``G = effective_channel(net, s, A)``.

    ``gram="cols"`` evaluates the same quantity as ``log2 det(I + gain * G^H G)``.
    """
    G = effective_channel(net, s, A)
    if G.size == 0:
        return 0.0
    if gram == "rows":
        K = G @ G.conj().T
    elif gram == "cols":
        K = G.conj().T @ G
    else:
        raise ValueError(f"gram must be 'rows' or 'cols', not {gram!r}")
    K = np.eye(K.shape[0]) + gain * K
    return float(_logdet2_hermitian(K))


def _cut_values_grid(net: NetworkSpec, states, cuts, gain: float = 1.0) -> np.ndarray:
    """Batched cut values, shape (len(states), len(cuts)).

    Masked rows/columns are zeroed in the full-size matrix instead of being
    removed, which leaves the determinant unchanged.  A value only depends on
    which relay antennas listen on the destination side and which transmit
    from the source side, so each distinct pair is evaluated once.
    """
    states = np.asarray(states, dtype=np.int64)
    cuts = np.asarray(cuts, dtype=np.int64)
    ss, aa = np.meshgrid(states, cuts, indexing="ij")
    ss, aa = ss.ravel(), aa.ravel()
    lay = net.layout
    m = lay.m_tot
    if 2 * m <= 62:
        w = np.int64(1) << np.arange(m, dtype=np.int64)
        keys = np.empty(ss.size, dtype=np.int64)
        for lo in range(0, ss.size, _CHUNK):
            hi = min(lo + _CHUNK, ss.size)
            tx = lay.transmit_pattern(ss[lo:hi])
            ina = lay.relay_pattern(aa[lo:hi])
            keys[lo:hi] = ((~tx & ina) @ w << m) | ((tx & ~ina) @ w)
        uniq, inv = np.unique(keys, return_inverse=True)
        bit = np.arange(m, dtype=np.int64)
        listen = (uniq[:, None] >> (bit + m)) & 1 == 1
        send = (uniq[:, None] >> bit) & 1 == 1
        vals = _masked_logdets(net, listen, send, gain)[inv]
    else:
        vals = np.empty(ss.size)
        for lo in range(0, ss.size, _CHUNK):
            hi = min(lo + _CHUNK, ss.size)
            tx = lay.transmit_pattern(ss[lo:hi])
            ina = lay.relay_pattern(aa[lo:hi])
            vals[lo:hi] = _masked_logdets(net, ~tx & ina, tx & ~ina, gain)
    return np.maximum(vals, 0.0).reshape(states.size, cuts.size)


def _masked_logdets(net: NetworkSpec, listen, send, gain):
    lay = net.layout
    eye = np.eye(lay.m_tot + lay.m_dest)
    out = np.empty(len(listen))
    for lo in range(0, len(listen), _CHUNK):
        hi = min(lo + _CHUNK, len(listen))
        n = hi - lo
        rows = np.concatenate([listen[lo:hi], np.ones((n, lay.m_dest), bool)], axis=1)
        cols = np.concatenate([send[lo:hi], np.ones((n, lay.m_source), bool)], axis=1)
        M = net.H[None, :, :] * rows[:, :, None] * cols[:, None, :]
        K = eye + gain * (M @ np.conj(np.swapaxes(M, 1, 2)))
        out[lo:hi] = _logdet2_hermitian(K)
    return out


@dataclass(eq=False)
class CutValueTable:
    """Values ``f_s(A)`` for every state ``s`` and cut ``A``.

    Either backed by a dense ``(n_states, n_cuts)`` array, or, for Gaussian
    networks too large to tabulate, evaluated lazily per cut and memoized.
    """

    n_relays: int
    n_states: int
    provenance: str
    network: NetworkSpec | None = None
    gain: float = 1.0
    _values: np.ndarray | None = None
    _columns: dict = field(default_factory=dict, repr=False)

    @classmethod
    def explicit(cls, values, n_relays: int | None = None) -> "CutValueTable":
        """Table from an array indexed ``[state, cut]``."""
        v = np.array(values, dtype=float)
        if v.ndim != 2:
            raise ValueError("explicit table must be 2-D [state, cut]")
        n_cuts = v.shape[1]
        n = n_cuts.bit_length() - 1
        if n_cuts != 1 << n or n < 1:
            raise ValueError(f"number of cuts {n_cuts} is not 2**N with N >= 1")
        if n_relays is not None and n_relays != n:
            raise ValueError(f"{n_cuts} cuts do not match {n_relays} relays")
        if not np.all(np.isfinite(v)):
            raise ValueError("table has non-finite entries")
        if np.any(v < -1e-12):
            raise ValueError("cut values must be nonnegative")
        v.setflags(write=False)
        return cls(n, v.shape[0], "explicit", _values=v)

    @classmethod
    def from_network(cls, net: NetworkSpec, gain: float = 1.0,
                     lazy: bool | None = None) -> "CutValueTable":
        lay = net.layout
        if lazy is None:
            lazy = lay.n_states * lay.n_cuts > EAGER_MAX_ENTRIES
        table = cls(lay.n_relays, lay.n_states, "gaussian", network=net, gain=gain)
        if not lazy:
            v = _cut_values_grid(net, np.arange(lay.n_states), np.arange(lay.n_cuts), gain)
            v.setflags(write=False)
            table._values = v
        return table

    @property
    def n_cuts(self) -> int:
        return 1 << self.n_relays

    @property
    def is_lazy(self) -> bool:
        return self._values is None

    def _check_cut(self, A: int):
        if not 0 <= A < self.n_cuts:
            raise InvalidStateError(f"cut {A} invalid for {self.n_relays} relays")

    def column(self, A: int) -> np.ndarray:
        """``f_s(A)`` for all states ``s``."""
        self._check_cut(A)
        if self._values is not None:
            return self._values[:, A]
        col = self._columns.get(A)
        if col is None:
            col = _cut_values_grid(self.network, np.arange(self.n_states), [A], self.gain)[:, 0]
            col.setflags(write=False)
            self._columns[A] = col
        return col

    def columns(self, cuts: Sequence[int]) -> np.ndarray:
        """Array ``[state, k]`` of ``f_s(cuts[k])``."""
        if self._values is not None:
            return self._values[:, list(cuts)]
        return np.stack([self.column(A) for A in cuts], axis=1)

    def value(self, s: int, A: int) -> float:
        if not 0 <= s < self.n_states:
            raise InvalidStateError(f"state {s} out of range")
        if self._values is not None:
            self._check_cut(A)
            return float(self._values[s, A])
        return float(self.column(A)[s])

    def state_row(self, s: int) -> np.ndarray:
        """``f_s(A)`` for all cuts ``A`` at a fixed state."""
        if self._values is not None:
            return self._values[s, :]
        return _cut_values_grid(self.network, [s], np.arange(self.n_cuts), self.gain)[0]

    def matrix(self) -> np.ndarray:
        if self._values is not None:
            return self._values
        return self.columns(range(self.n_cuts))

    def restricted(self, states: Sequence[int]) -> np.ndarray:
        """Dense ``[k, cut]`` values for a subset of states."""
        states = list(states)
        if self._values is not None:
            return self._values[states, :]
        return _cut_values_grid(self.network, states, np.arange(self.n_cuts), self.gain)

    def cut_vector(self, lam) -> np.ndarray:
        """``i_fix(lam, A)`` for every cut ``A``, computed over the support of ``lam``."""
        p = _probs(lam)
        supp = np.flatnonzero(p > 0)
        return p[supp] @ self.restricted(supp)


def _probs(lam) -> np.ndarray:
    return lam.probs if isinstance(lam, Schedule) else np.asarray(lam, dtype=float)


def i_fix(table: CutValueTable, lam, A: int) -> float:
    """Cut information flow ``sum_s lam_s f_s(A)`` under a fixed schedule."""
    p = _probs(lam)
    if p.size != table.n_states:
        raise ValueError(f"schedule has {p.size} states, table has {table.n_states}")
    supp = np.flatnonzero(p > 0)
    return float(p[supp] @ table.column(A)[supp])


@dataclass
class SubmodularityReport:
    is_submodular: bool
    worst_violation: float
    witness: tuple[int, int] | None
    min_slack: float


def check_submodular(table: CutValueTable, s: int, limit: int = 12,
                     tol: float = 1e-9) -> SubmodularityReport:
    """Test ``f(A1) + f(A2) >= f(A1 | A2) + f(A1 & A2)`` over all cut pairs for state ``s``."""
    if table.n_relays > limit:
        raise ValueError(
            f"exhaustive submodularity check refused for N={table.n_relays} > {limit}")
    from .submodular import submodularity_slack

    slack, witness = submodularity_slack(table.state_row(s))
    return SubmodularityReport(
        is_submodular=slack >= -tol,
        worst_violation=max(0.0, -slack),
        witness=witness if slack < 0 else None,
        min_slack=slack,
    )
