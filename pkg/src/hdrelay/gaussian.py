"""Gaussian networks: JSON ingestion, the two-antenna line network, water-filling,
noisy network coding lower bounds and gap certificates."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .model import (
    CutValueTable,
    NetworkSpec,
    NodeLayout,
    Schedule,
    Switching,
)
from .scheduler import SolveResult, solve_saddle

__all__ = [
    "NetworkFormatError",
    "CertificateError",
    "SandwichError",
    "LineNetworkGains",
    "LineFixedPower",
    "LineWaterfill",
    "GapCertificate",
    "SandwichReport",
    "parse_network",
    "network_to_dict",
    "dump_network",
    "random_network",
    "line_network",
    "line_fixed_power_table",
    "line_fixed_power",
    "waterfill",
    "line_waterfill",
    "nnc_rate",
    "gap_certificate",
    "sandwich_check",
    "sweep_line",
    "sweep_csv",
    "equal_gain_crossover",
    "GAP_PER_ANTENNA",
]

GAP_PER_ANTENNA = 1.96
CSV_FIELDS = ["gamma", "c_fixed_i", "c_fixed_ii", "c_wf_i", "c_wf_ii", "active_states_i"]


class NetworkFormatError(ValueError):
    def __init__(self, field: str, msg: str):
        super().__init__(f"{field}: {msg}")
        self.field = field


class CertificateError(RuntimeError):
    def __init__(self, msg, witness: str):
        super().__init__(msg)
        self.witness = witness


class SandwichError(RuntimeError):
    def __init__(self, msg, c_prime, c_doubleprime):
        super().__init__(msg)
        self.c_prime = c_prime
        self.c_doubleprime = c_doubleprime


# ---------------------------------------------------------------- ingestion

def _count(obj, key, minimum=1):
    if key not in obj:
        raise NetworkFormatError(key, "missing")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise NetworkFormatError(key, f"expected an integer, got {v!r}")
    if v < minimum:
        raise NetworkFormatError(key, f"must be >= {minimum}, got {v}")
    return v


def _block_name(row: int, col: int | None, m_tot: int) -> str:
    r = "r" if row < m_tot else "d"
    if col is None:
        return f"{'H_r->r/H_s->r' if r == 'r' else 'H_r->d/H_s->d'}"
    c = "r" if col < m_tot else "s"
    return f"H_{c}->{r}"


def parse_network(text: str) -> NetworkSpec:
    """Validate network JSON and build a :class:`NetworkSpec`.

    Errors name the offending field, e.g. ``H[4][1]`` or the block a missing
    row would belong to.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise NetworkFormatError("<root>", f"invalid JSON ({e})") from None
    if not isinstance(obj, dict):
        raise NetworkFormatError("<root>", "expected a JSON object")
    n = _count(obj, "n_relays")
    m_source = _count(obj, "m_source")
    m_dest = _count(obj, "m_dest")
    m_relay = obj.get("m_relay")
    if not isinstance(m_relay, list):
        raise NetworkFormatError("m_relay", "expected a list of antenna counts")
    if len(m_relay) != n:
        raise NetworkFormatError("m_relay", f"has {len(m_relay)} entries for {n} relays")
    for k, m in enumerate(m_relay):
        if isinstance(m, bool) or not isinstance(m, int) or m < 1:
            raise NetworkFormatError(f"m_relay[{k}]", f"expected an integer >= 1, got {m!r}")
    switching = obj.get("switching", "lockstep")
    try:
        switching = Switching(switching)
    except ValueError:
        raise NetworkFormatError("switching", f"expected 'lockstep' or 'independent', got {switching!r}") from None
    m_tot = sum(m_relay)
    rows, cols = m_tot + m_dest, m_tot + m_source
    H = obj.get("H")
    if not isinstance(H, list):
        raise NetworkFormatError("H", "expected a list of rows")
    if len(H) != rows:
        missing = _block_name(min(len(H), rows - 1), None, m_tot)
        raise NetworkFormatError(
            "H", f"expected {rows} rows (relay antennas then destination), got {len(H)}; "
                 f"block {missing} is incomplete")
    out = np.zeros((rows, cols), dtype=complex)
    for i, row in enumerate(H):
        if not isinstance(row, list) or len(row) != cols:
            got = len(row) if isinstance(row, list) else type(row).__name__
            raise NetworkFormatError(
                f"H[{i}]", f"expected {cols} entries (relay antennas then source), got {got}; "
                           f"block {_block_name(i, cols - 1, m_tot)} is incomplete")
        for j, z in enumerate(row):
            if (not isinstance(z, list) or len(z) != 2
                    or not all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in z)):
                raise NetworkFormatError(f"H[{i}][{j}]", f"expected [re, im], got {z!r}")
            re, im = float(z[0]), float(z[1])
            if not (np.isfinite(re) and np.isfinite(im)):
                raise NetworkFormatError(f"H[{i}][{j}]", "non-finite entry")
            out[i, j] = complex(re, im)
    layout = NodeLayout(n, m_source, tuple(m_relay), m_dest, switching)
    return NetworkSpec(layout, out)


def network_to_dict(net: NetworkSpec) -> dict:
    lay = net.layout
    return {
        "n_relays": lay.n_relays,
        "m_source": lay.m_source,
        "m_relay": list(lay.m_relay),
        "m_dest": lay.m_dest,
        "switching": lay.switching.value,
        "H": [[[float(z.real), float(z.imag)] for z in row] for row in net.H],
    }


def dump_network(net: NetworkSpec) -> str:
    return json.dumps(network_to_dict(net), indent=1) + "\n"


def random_network(rng: np.random.Generator, n: int, antennas=1, m_source: int = 1,
                   m_dest: int = 1, switching="lockstep") -> NetworkSpec:
    """Circularly-symmetric complex Gaussian channel gains with unit variance."""
    if np.ndim(antennas) == 0:
        m_relay = (int(antennas),) * n
    else:
        m_relay = tuple(int(m) for m in antennas)
    layout = NodeLayout(n, m_source, m_relay, m_dest, switching)
    shape = (layout.m_tot + m_dest, layout.m_tot + m_source)
    H = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return NetworkSpec(layout, H)


# ---------------------------------------------------------------- line network

@dataclass(frozen=True)
class LineNetworkGains:
    """Single relay with two antennas between a single-antenna source and destination."""

    h_rs: tuple[complex, complex]
    h_dr: tuple[complex, complex]

    def __post_init__(self):
        h_rs = tuple(complex(h) for h in self.h_rs)
        h_dr = tuple(complex(h) for h in self.h_dr)
        if len(h_rs) != 2 or len(h_dr) != 2:
            raise ValueError("line network gains come in pairs")
        if not all(np.isfinite(h) for h in h_rs + h_dr):
            raise ValueError("gains must be finite")
        object.__setattr__(self, "h_rs", h_rs)
        object.__setattr__(self, "h_dr", h_dr)

    @classmethod
    def symmetric(cls, gamma: float) -> "LineNetworkGains":
        a = np.sqrt(gamma)
        return cls((a, a), (a, a))

    @property
    def rs2(self) -> np.ndarray:
        return np.abs(np.array(self.h_rs)) ** 2

    @property
    def dr2(self) -> np.ndarray:
        return np.abs(np.array(self.h_dr)) ** 2

    @property
    def is_symmetric(self) -> bool:
        g = np.concatenate([self.rs2, self.dr2])
        return bool(np.allclose(g, g[0], rtol=1e-12, atol=0))


def line_network(g: LineNetworkGains, switching="independent") -> NetworkSpec:
    layout = NodeLayout(1, 1, (2,), 1, switching)
    H = np.zeros((3, 3), dtype=complex)
    H[0:2, 2] = g.h_rs
    H[2, 0:2] = g.h_dr
    return NetworkSpec(layout, H)


def line_fixed_power_table(g: LineNetworkGains, switching="independent") -> CutValueTable:
    """Unit-power cut values with coherent relay combining in the all-transmit state."""
    hr, hd = g.rs2, g.dr2
    coherent = np.log2(1 + (np.sqrt(hd[0]) + np.sqrt(hd[1])) ** 2)
    rs_all = np.log2(1 + hr.sum())
    if Switching(switching) is Switching.INDEPENDENT:
        # states 00, 10, 01, 11 by index; columns: cut {} then cut {1}
        v = [[0.0, rs_all],
             [np.log2(1 + hd[0]), np.log2(1 + hr[1])],
             [np.log2(1 + hd[1]), np.log2(1 + hr[0])],
             [coherent, 0.0]]
    else:
        v = [[0.0, rs_all], [coherent, 0.0]]
    return CutValueTable.explicit(v)


@dataclass
class LineFixedPower:
    c_case_i: float
    schedule_i: Schedule
    c_case_ii: float
    lambda_ii: float
    solve_i: SolveResult


def line_fixed_power(g: LineNetworkGains, tol: float = 1e-10) -> LineFixedPower:
    """Fixed-power rates with independently switched antennas (i) and with both
    antennas in the same mode (ii).  ``lambda_ii`` is the listen fraction."""
    res = solve_saddle(line_fixed_power_table(g, "independent"), tol=tol)
    a = np.log2(1 + g.rs2.sum())
    b = np.log2(1 + (np.sqrt(g.dr2[0]) + np.sqrt(g.dr2[1])) ** 2)
    if a + b > 0:
        c_ii, lam_ii = a * b / (a + b), b / (a + b)
    else:
        c_ii, lam_ii = 0.0, 0.5
    return LineFixedPower(res.rate, res.schedule, float(c_ii), float(lam_ii), res)


def waterfill(lams, gains, iters: int = 200):
    """Per-row water-filling across states.

    ``lams`` is ``(K, m)`` time fractions, ``gains`` the ``m`` channel gains.
    Solves ``sum_i lam_i (nu - 1/g_i)^+ = 1`` for ``nu`` by bisection and
    returns ``(sum_i lam_i log2^+(nu g_i), nu)`` per row.
    """
    lams = np.atleast_2d(np.asarray(lams, dtype=float))
    gains = np.asarray(gains, dtype=float)
    active = (gains > 0)[None, :] & (lams > 0)
    inv = np.where(gains > 0, 1.0 / np.where(gains > 0, gains, 1.0), np.inf)
    w = np.where(active, lams, 0.0)
    tot = w.sum(axis=1)
    usable = tot > 0
    lo = np.zeros(lams.shape[0])
    hi = np.where(usable, (1.0 + (w * np.where(active, inv, 0.0)).sum(axis=1)) / np.where(usable, tot, 1.0), 0.0)

    def level(nu):
        return (w * np.maximum(nu[:, None] - inv[None, :], 0.0)).sum(axis=1)

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        too_much = level(mid) > 1.0
        hi = np.where(too_much, mid, hi)
        lo = np.where(too_much, lo, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(hi, 1.0)):
            break
    nu = 0.5 * (lo + hi)
    with np.errstate(divide="ignore"):
        terms = np.where(active, np.log2(np.maximum(nu[:, None] * gains[None, :], 1.0)), 0.0)
    val = (w * terms).sum(axis=1)
    return np.where(usable, val, 0.0), nu


def _wf_cut_gains(g: LineNetworkGains):
    hr, hd = g.rs2, g.dr2
    # state order 00, 10, 01, 11
    empty_cut = np.array([0.0, hd[0], hd[1], hd.sum()])
    relay_cut = np.array([hr.sum(), hr[1], hr[0], 0.0])
    return empty_cut, relay_cut


def _wf_objective(g: LineNetworkGains, lams) -> np.ndarray:
    e, r = _wf_cut_gains(g)
    return np.minimum(waterfill(lams, e)[0], waterfill(lams, r)[0])


@dataclass
class LineWaterfill:
    c_wf_case_i: float
    lam_star: np.ndarray
    c_wf_case_ii: float
    lam_ii: float


def _symmetric_lams(t):
    t = np.atleast_1d(t)
    return np.column_stack([(1 - t) / 2, t / 2, t / 2, (1 - t) / 2])


def _simplex_grid(step: int) -> np.ndarray:
    pts = [c for c in product(range(step + 1), repeat=3) if sum(c) <= step]
    pts = np.array([[*c, step - sum(c)] for c in pts], dtype=float)
    return pts / step


def line_waterfill(g: LineNetworkGains, resolution: int = 200) -> LineWaterfill:
    """Rates when powers are water-filled across relay states.

    With all four gains equal the optimum lies on the symmetric family
    ``lam_10 = lam_01 = t/2``, ``lam_00 = lam_11 = (1-t)/2`` and is found by a
    grid over ``t`` refined with a bounded scalar search.  Other gains use a
    simplex grid refined by SLSQP on the epigraph form.
    """
    if resolution < 100:
        raise ValueError("grid resolution must be at least 100")
    if g.is_symmetric:
        ts = np.linspace(0.0, 1.0, resolution + 1)
        vals = _wf_objective(g, _symmetric_lams(ts))
        k = int(np.argmax(vals))
        lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, resolution)]
        opt = minimize_scalar(lambda t: -_wf_objective(g, _symmetric_lams(t))[0],
                              bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        best_t, best = ts[k], vals[k]
        if -opt.fun > best:
            best_t, best = float(opt.x), float(-opt.fun)
        lam_star = _symmetric_lams(best_t)[0]
    else:
        grid = _simplex_grid(max(resolution // 8, 12))
        vals = _wf_objective(g, grid)
        k = int(np.argmax(vals))
        best, lam_star = float(vals[k]), grid[k]
        x0 = np.append(lam_star, best)
        cons = [
            {"type": "eq", "fun": lambda z: z[:4].sum() - 1.0},
            {"type": "ineq", "fun": lambda z: waterfill(np.clip(z[:4], 0, 1), _wf_cut_gains(g)[0])[0][0] - z[4]},
            {"type": "ineq", "fun": lambda z: waterfill(np.clip(z[:4], 0, 1), _wf_cut_gains(g)[1])[0][0] - z[4]},
        ]
        opt = minimize(lambda z: -z[4], x0, method="SLSQP", constraints=cons,
                       bounds=[(0, 1)] * 4 + [(0, None)],
                       options={"ftol": 1e-12, "maxiter": 200})
        lam = np.clip(opt.x[:4], 0, 1)
        lam = lam / lam.sum()
        v = float(_wf_objective(g, lam)[0])
        if v > best:
            best, lam_star = v, lam
    c_ii, lam_ii = _waterfill_lockstep(g)
    return LineWaterfill(float(best), np.asarray(lam_star), c_ii, lam_ii)


def _waterfill_lockstep(g: LineNetworkGains) -> tuple[float, float]:
    """Both antennas in the same mode: transmit fraction ``t`` beamforms with all
    relay power, the listen fraction ``1 - t`` receives with all source power."""
    d, r = g.dr2.sum(), g.rs2.sum()
    if d <= 0 or r <= 0:
        return 0.0, 0.0

    def send(t):
        return t * np.log2(1 + d / t) if t > 0 else 0.0

    def recv(t):
        return (1 - t) * np.log2(1 + r / (1 - t)) if t < 1 else 0.0

    t = brentq(lambda t: send(t) - recv(t), 1e-300, 1 - 1e-16, xtol=1e-15, rtol=1e-15)
    return float(min(send(t), recv(t))), float(t)


def equal_gain_crossover(lo: float = 0.1, hi: float = 5.0, tol: float = 1e-12) -> float:
    """Gain where the single-state and two-state fixed-power rates of the
    equal-gain line network coincide, found by bisection."""

    def diff(gamma):
        one = np.log2(1 + gamma)
        a, b = np.log2(1 + 2 * gamma), np.log2(1 + 4 * gamma)
        return one - a * b / (a + b)

    flo = diff(lo)
    if flo * diff(hi) > 0:
        raise ValueError("crossover not bracketed")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (diff(mid) > 0) == (flo > 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------- sandwich

@dataclass
class SandwichReport:
    c_prime: float
    c_doubleprime: float
    split_rate: float
    lower_slack: float
    upper_slack: float
    c_prime_ii: float
    c_doubleprime_ii: float


def _split_power_rate(g: LineNetworkGains, lam: np.ndarray) -> float:
    """Rate of the feasible split: unit relay power in single-antenna states,
    half per antenna when both transmit, unit source power whenever it is heard."""
    hr, hd = g.rs2, g.dr2
    coherent = np.log2(1 + 0.5 * (np.sqrt(hd[0]) + np.sqrt(hd[1])) ** 2)
    e = lam[1] * np.log2(1 + hd[0]) + lam[2] * np.log2(1 + hd[1]) + lam[3] * coherent
    r = lam[0] * np.log2(1 + hr.sum()) + lam[1] * np.log2(1 + hr[1]) + lam[2] * np.log2(1 + hr[0])
    return float(min(e, r))


def sandwich_check(g: LineNetworkGains, resolution: int = 200) -> SandwichReport:
    """Check that the water-filled rate lies in ``[C' - 1, C' + 2]`` bits."""
    fp = line_fixed_power(g)
    wf = line_waterfill(g, resolution)
    split = _split_power_rate(g, fp.schedule_i.probs)
    rep = SandwichReport(fp.c_case_i, wf.c_wf_case_i, split,
                         wf.c_wf_case_i - (fp.c_case_i - 1.0),
                         (fp.c_case_i + 2.0) - wf.c_wf_case_i,
                         fp.c_case_ii, wf.c_wf_case_ii)
    tol = 1e-9
    for c1, c2 in ((fp.c_case_i, wf.c_wf_case_i), (fp.c_case_ii, wf.c_wf_case_ii)):
        if not (c1 - 1.0 - tol <= c2 <= c1 + 2.0 + tol):
            raise SandwichError(f"water-filled rate {c2:.6g} outside [{c1 - 1:.6g}, {c1 + 2:.6g}]", c1, c2)
    if not (fp.c_case_i - 1.0 - tol <= split <= wf.c_wf_case_i + 1e-7):
        raise SandwichError(f"split-power rate {split:.6g} outside [C'-1, C'']",
                            fp.c_case_i, wf.c_wf_case_i)
    return rep


def sweep_line(gammas, resolution: int = 200) -> list[dict]:
    rows = []
    for gamma in gammas:
        g = LineNetworkGains.symmetric(float(gamma))
        fp = line_fixed_power(g)
        wf = line_waterfill(g, resolution)
        rows.append({
            "gamma": float(gamma),
            "c_fixed_i": fp.c_case_i,
            "c_fixed_ii": fp.c_case_ii,
            "c_wf_i": wf.c_wf_case_i,
            "c_wf_ii": wf.c_wf_case_ii,
            "active_states_i": len(fp.schedule_i.support),
        })
    return rows


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([f"{r[k]:.10g}" if isinstance(r[k], float) else r[k] for k in CSV_FIELDS])
    return buf.getvalue()


# ---------------------------------------------------------------- NNC and gap

def _source_side_penalty(layout: NodeLayout, sigma2: float) -> np.ndarray:
    cuts = np.arange(layout.n_cuts)
    m = np.array(layout.m_relay)
    outside = ((cuts[:, None] >> np.arange(layout.n_relays)) & 1) == 0
    return (outside * m).sum(axis=1) * np.log2(1 + 1 / sigma2)


def nnc_rate(net: NetworkSpec, lam, sigma2: float = 1.0) -> float:
    """Noisy network coding rate for a fixed schedule.

    Every cut keeps its log-det term with the received signal scaled by
    ``1 / (1 + sigma2)`` and pays ``log2(1 + 1/sigma2)`` per antenna of each
    relay left on the source side.
    """
    if sigma2 <= 0:
        raise ValueError("quantization noise variance must be positive")
    if not isinstance(lam, Schedule):
        lam = Schedule(lam)
    table = CutValueTable.from_network(net, gain=1.0 / (1.0 + sigma2), lazy=True)
    vals = table.cut_vector(lam) - _source_side_penalty(net.layout, sigma2)
    return max(0.0, float(vals.min()))


@dataclass
class GapCertificate:
    upper: float
    lower: float
    bound: float
    sigma2: float
    schedule: Schedule

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    @property
    def holds(self) -> bool:
        return self.gap <= self.bound


def gap_certificate(net: NetworkSpec, tol: float = 1e-7) -> GapCertificate:
    lay = net.layout
    res = solve_saddle(CutValueTable.from_network(net), tol)
    upper = res.rate
    bound = GAP_PER_ANTENNA * lay.m_all
    uniform = Schedule.uniform(lay.n_states)
    best = None
    for sigma2 in (1.0, 0.5, 2.0):
        lower = max(nnc_rate(net, res.schedule, sigma2), nnc_rate(net, uniform, sigma2))
        cert = GapCertificate(upper, lower, bound, sigma2, res.schedule)
        if best is None or cert.lower > best.lower:
            best = cert
        if cert.holds:
            return cert
    raise CertificateError(
        f"gap {best.gap:.6g} exceeds {bound:.6g} bits", dump_network(net))
