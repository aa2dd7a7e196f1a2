"""Command-line driver: ``hdrelay {solve,oracle,sweep-line,verify,gen-random}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gaussian import (
    CertificateError,
    NetworkFormatError,
    dump_network,
    gap_certificate,
    parse_network,
    random_network,
    sweep_csv,
    sweep_line,
)
from .lp import FULL_LP_LIMIT, solve_full_lp
from .model import CutValueTable, Switching, check_submodular, cut_members
from .scheduler import solve_saddle, verify_schedule

log = logging.getLogger("hdrelay")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CERTIFICATE = 2
EXIT_REFUSED = 3

MATCH_TOL = 1e-6


@dataclass
class RunConfig:
    subcommand: str
    input: Path | None = None
    tol: float = 1e-7
    seed: int | None = None
    out: Path | None = None
    fmt: str = "json"
    verbosity: int = 0
    options: dict = field(default_factory=dict)


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _emit_json(obj, out):
    _emit(json.dumps(obj, indent=2) + "\n", out)


def _load(cfg: RunConfig):
    try:
        text = cfg.input.read_text()
    except OSError as e:
        raise NetworkFormatError("<file>", str(e)) from None
    return parse_network(text)


def cmd_solve(cfg: RunConfig) -> int:
    net = _load(cfg)
    table = CutValueTable.from_network(net)
    res = solve_saddle(table, cfg.tol)
    out = res.to_dict(net.layout.n_state_bits)
    out["n_states"] = net.layout.n_states
    out["switching"] = net.layout.switching.value
    ok = res.simple and res.certificate.min_cut_value_at_schedule >= res.rate - MATCH_TOL
    out["certificate"]["passed"] = bool(ok)
    _emit_json(out, cfg.out)
    if not ok:
        log.error("certificate failed: schedule reaches %.9g of %.9g",
                  res.certificate.min_cut_value_at_schedule, res.rate)
        return EXIT_CERTIFICATE
    return EXIT_OK


def cmd_oracle(cfg: RunConfig) -> int:
    net = _load(cfg)
    if net.n_relays > FULL_LP_LIMIT:
        sys.stderr.write(f"oracle refuses N={net.n_relays} > {FULL_LP_LIMIT} relays\n")
        return EXIT_REFUSED
    table = CutValueTable.from_network(net)
    exact = solve_full_lp(table)
    res = solve_saddle(table, cfg.tol)
    bits = net.layout.n_state_bits
    _emit_json({
        "c_prime_exact": exact.c_prime,
        "schedule": [{"state_bits": s, "prob": p} for s, p in exact.schedule.labelled(bits)],
        "solver_rate": res.rate,
        "matches_solver": bool(abs(res.rate - exact.c_prime) <= MATCH_TOL),
    }, cfg.out)
    return EXIT_OK


def cmd_sweep_line(cfg: RunConfig) -> int:
    lo, hi, points = cfg.options["gamma_min"], cfg.options["gamma_max"], cfg.options["points"]
    if not (lo > 0 and hi > 0 and np.isfinite(lo) and np.isfinite(hi)):
        sys.stderr.write("gamma range must be positive and finite\n")
        return EXIT_INPUT
    if points < 1 or (points == 1 and lo != hi) or (points > 1 and not lo < hi):
        sys.stderr.write("need gamma-min < gamma-max with points >= 2, "
                         "or gamma-min == gamma-max with points == 1\n")
        return EXIT_INPUT
    gammas = np.geomspace(lo, hi, points) if points > 1 else np.array([lo])
    _emit(sweep_csv(sweep_line(gammas)), cfg.out)
    return EXIT_OK


def _suite_instance(rng, suite: str, n: int, trial: int):
    if suite == "submodularity" and trial % 2:
        antennas = rng.integers(1, 3, size=n)
        return random_network(rng, n, antennas, int(rng.integers(1, 3)),
                              int(rng.integers(1, 3)), "independent")
    if suite == "gap":
        antennas = rng.integers(1, 3, size=n)
        sw = "independent" if trial % 2 else "lockstep"
        return random_network(rng, n, antennas, int(rng.integers(1, 3)),
                              int(rng.integers(1, 3)), sw)
    return random_network(rng, n, 1)


def cmd_verify(cfg: RunConfig) -> int:
    suite, n, trials = cfg.options["suite"], cfg.options["n"], cfg.options["trials"]
    if n < 1 or trials < 1:
        sys.stderr.write("--n and --trials must be >= 1\n")
        return EXIT_INPUT
    if suite == "sparsity" and n > 8:
        sys.stderr.write("sparsity suite supports n <= 8\n")
        return EXIT_INPUT
    rng = np.random.default_rng(cfg.seed)
    worst = None
    for trial in range(trials):
        net = _suite_instance(rng, suite, n, trial)
        problem = None
        detail = {}
        if suite == "submodularity":
            table = CutValueTable.from_network(net)
            for s in range(table.n_states):
                rep = check_submodular(table, s)
                if not rep.is_submodular:
                    problem = f"state {s} violates submodularity by {rep.worst_violation:.3g}"
                    detail = {"state": s, "cuts": [list(cut_members(A)) for A in rep.witness]}
                    break
        elif suite == "gap":
            try:
                cert = gap_certificate(net, cfg.tol)
                detail = {"upper": cert.upper, "lower": cert.lower, "bound": cert.bound}
                margin = cert.bound - cert.gap
                worst = margin if worst is None else min(worst, margin)
            except CertificateError as e:
                problem = str(e)
        else:
            table = CutValueTable.from_network(net)
            res = solve_saddle(table, cfg.tol)
            got = verify_schedule(table, res.schedule).achieved_rate
            support = len(res.schedule.support)
            detail = {"rate": res.rate, "support": support, "achieved": got}
            if support > n + 1 or got < res.rate - MATCH_TOL:
                problem = f"support {support} or achieved rate {got:.9g} below {res.rate:.9g}"
        if problem:
            witness = {"suite": suite, "trial": trial, "seed": cfg.seed, "problem": problem,
                       "detail": detail, "network": json.loads(dump_network(net))}
            wpath = cfg.options.get("witness_out") or Path(f"witness-{suite}-{trial}.json")
            Path(wpath).write_text(json.dumps(witness, indent=1) + "\n")
            sys.stderr.write(f"{suite}: trial {trial} failed: {problem}; witness in {wpath}\n")
            return EXIT_CERTIFICATE
    report = {"suite": suite, "n": n, "trials": trials, "seed": cfg.seed, "passed": True}
    if worst is not None:
        report["min_margin_bits"] = worst
    _emit_json(report, cfg.out)
    return EXIT_OK


def _parse_antennas(text: str, n: int):
    parts = [p for p in text.split(",") if p.strip()]
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise NetworkFormatError("--antennas", f"expected integers, got {text!r}") from None
    if len(vals) == 1:
        vals = vals * n
    if len(vals) != n or min(vals) < 1:
        raise NetworkFormatError("--antennas", f"need 1 or {n} positive counts, got {text!r}")
    return vals


def cmd_gen_random(cfg: RunConfig) -> int:
    o = cfg.options
    if o["n"] < 1:
        sys.stderr.write("--n must be >= 1\n")
        return EXIT_INPUT
    antennas = _parse_antennas(o["antennas"], o["n"])
    rng = np.random.default_rng(cfg.seed)
    net = random_network(rng, o["n"], antennas, o["m_source"], o["m_dest"], o["switching"])
    _emit(dump_network(net), cfg.out)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "oracle": cmd_oracle,
    "sweep-line": cmd_sweep_line,
    "verify": cmd_verify,
    "gen-random": cmd_gen_random,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdrelay", description="Simple half-duplex relay schedules.")
    p.add_argument("--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp, network=True):
        if network:
            sp.add_argument("network", type=Path, help="network JSON file")
        sp.add_argument("--tol", type=float, default=1e-7)
        sp.add_argument("--out", type=Path, default=None)

    common(sub.add_parser("solve", help="optimal simple schedule"))
    common(sub.add_parser("oracle", help="exact value from the full LP"))

    sp = sub.add_parser("sweep-line", help="fixed-power vs water-filled rates on the line network")
    common(sp, network=False)
    sp.add_argument("--gamma-min", type=float, default=0.1)
    sp.add_argument("--gamma-max", type=float, default=10.0)
    sp.add_argument("--points", type=int, default=50)

    sp = sub.add_parser("verify", help="property suites on random instances")
    common(sp, network=False)
    sp.add_argument("--suite", choices=["submodularity", "gap", "sparsity"], required=True)
    sp.add_argument("--n", type=int, default=3)
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--witness-out", type=Path, default=None)

    sp = sub.add_parser("gen-random", help="random Gaussian network JSON")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--antennas", default="1", help="one count for all relays or a comma list")
    sp.add_argument("--m-source", type=int, default=1)
    sp.add_argument("--m-dest", type=int, default=1)
    sp.add_argument("--switching", choices=[s.value for s in Switching], default="lockstep")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", type=Path, default=None)
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    skip = {"subcommand", "network", "tol", "seed", "out", "verbose"}
    return RunConfig(
        subcommand=ns.subcommand,
        input=getattr(ns, "network", None),
        tol=getattr(ns, "tol", 1e-7),
        seed=getattr(ns, "seed", None),
        out=getattr(ns, "out", None),
        fmt="csv" if ns.subcommand == "sweep-line" else "json",
        verbosity=ns.verbose,
        options={k: v for k, v in vars(ns).items() if k not in skip},
    )


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    cfg = config_from_args(ns)
    logging.basicConfig(level=logging.DEBUG if cfg.verbosity > 1 else
                        logging.INFO if cfg.verbosity else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[cfg.subcommand](cfg)
    except NetworkFormatError as e:
        sys.stderr.write(f"input error: {e}\n")
        return EXIT_INPUT
    except ValueError as e:
        sys.stderr.write(f"input error: {e}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
