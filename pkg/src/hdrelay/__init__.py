"""Simple schedules for half-duplex relay networks."""

from .model import (
    CutValueTable,
    NetworkSpec,
    NodeLayout,
    RelayState,
    Schedule,
    Switching,
    check_submodular,
    cut_value,
    effective_channel,
    i_fix,
)
from .submodular import (
    ChainPermutation,
    SetFunction,
    greedy_vertex,
    lovasz_extension,
    minimize_exhaustive,
    minimize_min_norm,
    tight_sets,
)
from .lp import LpProblem, LpSolution, LpStatus, build_F_pi, build_H_pi_f, simplex_solve, solve_full_lp, solve_p2
from .scheduler import SolveResult, extract_simple_schedule, solve_saddle, verify_schedule
from .gaussian import (
    LineNetworkGains,
    gap_certificate,
    line_fixed_power,
    line_waterfill,
    nnc_rate,
    parse_network,
    random_network,
    sweep_line,
)

__version__ = "0.1.0"
