"""Command line interface.

Exit codes: 0 success, 2 input error, 3 verification failed (a gap above
``--tol``, or a failing property suite), 4 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import os
import sys
from typing import Optional, Sequence

from .dual import duality_gap, fenchel_conjugate, h_value, k_value
from .errors import InputError, SolverError
from .harness import run_property_suite
from .maps import QUASICONVEX, Coarsened, coarsen
from .oracle import GridCfg, enumerate_partitions, equality_k, grid_k, grid_slope_bounds
from .prob import Partition, q_cond_weights, reference_density
from .scenario import Scenario, load_scenario
from .solvers import DEFAULT_CFG, SolverCfg

SCHEMA_VERSION = "1"
ATOM_HEADER = ("schema_version", "atom", "primal", "dual", "gap", "argmax_weights", "iterations")
FENCHEL_HEADER = ("schema_version", "atom", "conjugate")
SWEEP_HEADER = ("schema_version", "partition", "block", "k_gamma", "h_gamma", "pi_gamma", "gap")
ORACLE_HEADER = ("schema_version", "atom", "k", "grid_k", "equality_k", "slope_bound", "grid_bound", "within_bound")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_VERIFY = 3
EXIT_SOLVER = 4


def fmt(v: float) -> str:
    """Numbers with 12 significant digits."""
    return format(float(v), "#.12g")


def fmt_weights(w) -> str:
    return ",".join(format(float(v), ".12g") for v in w)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(header)
    out.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# helpers


def _cfg(sc: Scenario, args) -> SolverCfg:
    cfg = sc.solver
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.restarts is not None:
        changes["restarts"] = args.restarts
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _block_name(sc: Scenario, block) -> str:
    """Names of the G-atoms making up an output block, joined by '+'."""
    atoms = sorted({sc.g.atom_of(i) for i in block})
    return "+".join(sc.atom_names[k] for k in atoms)


def _map(sc: Scenario):
    return coarsen(sc.map, sc.gamma) if sc.gamma is not None else sc.map


def _per_block(values, g: Partition, out: Partition) -> list[float]:
    return [values[g.atom_of(b[0])] for b in out.blocks]


def _density(sc: Scenario, required: bool, command: str):
    if sc.q is None:
        if required:
            raise InputError(f"the {command} command needs a density q in the scenario")
        return reference_density(sc.space)
    return sc.q


def _report_rows(sc: Scenario, rep) -> list[list[str]]:
    return [
        [SCHEMA_VERSION, _block_name(sc, r.block), fmt(r.primal), fmt(r.dual), fmt(r.gap),
         fmt_weights(r.argmax_weights), str(r.evaluations)]
        for r in rep.rows
    ]


# ---------------------------------------------------------------------------
# commands


def cmd_eval(args, out) -> int:
    sc = load_scenario(args.scenario)
    m = _map(sc)
    vals = m.block_values(sc.x)
    rows = [[SCHEMA_VERSION, _block_name(sc, b), fmt(v), "", "", "", ""] for b, v in zip(m.out_partition.blocks, vals)]
    out.write(_csv(ATOM_HEADER, rows))
    return EXIT_OK


def cmd_k(args, out) -> int:
    sc = load_scenario(args.scenario)
    m = _map(sc)
    q = _density(sc, True, "k")
    k = _per_block(k_value(m, sc.x, q, _cfg(sc, args)).values, sc.g, m.out_partition)
    primal = m.block_values(sc.x)
    rows = []
    for b, p, kv in zip(m.out_partition.blocks, primal, k):
        w = q_cond_weights(q, m.out_partition, b)
        rows.append([SCHEMA_VERSION, _block_name(sc, b), fmt(p), fmt(kv), fmt(p - kv if p != kv else 0.0),
                     "" if w is None else fmt_weights(w), ""])
    out.write(_csv(ATOM_HEADER, rows))
    return EXIT_OK


def cmd_h(args, out) -> int:
    sc = load_scenario(args.scenario)
    m = _map(sc)
    cfg = _cfg(sc, args)
    rep = h_value(m, sc.x, cfg) if m.orientation == QUASICONVEX else duality_gap(m, sc.x, cfg)
    out.write(_csv(ATOM_HEADER, _report_rows(sc, rep)))
    return EXIT_OK


def gap_exit_code(table: str, tol: float) -> int:
    """Exit code of the gap command, recomputed from its CSV output alone."""
    rows = list(csv.DictReader(io.StringIO(table)))
    worst = max(abs(float(r["gap"])) for r in rows)
    return EXIT_OK if worst <= tol else EXIT_VERIFY


def cmd_gap(args, out) -> int:
    sc = load_scenario(args.scenario)
    rep = duality_gap(_map(sc), sc.x, _cfg(sc, args))
    table = _csv(ATOM_HEADER, _report_rows(sc, rep))
    out.write(table)
    return gap_exit_code(table, args.tol)


def cmd_fenchel(args, out) -> int:
    sc = load_scenario(args.scenario)
    q = _density(sc, True, "fenchel")
    conj = fenchel_conjugate(sc.map, q, _cfg(sc, args))
    rows = []
    for k, block in enumerate(sc.g.blocks):
        # Q-null atoms have no conjugate value; the field is left empty
        rows.append([SCHEMA_VERSION, _block_name(sc, block), "" if conj.null[k] else fmt(conj.values[k])])
    out.write(_csv(FENCHEL_HEADER, rows))
    return EXIT_OK


def cmd_coarsen_sweep(args, out) -> int:
    sc = load_scenario(args.scenario)
    cfg = _cfg(sc, args)
    q = _density(sc, False, "coarsen-sweep")
    rows = []
    worst = 0.0
    for gamma in enumerate_partitions(sc.g):
        mc = coarsen(sc.map, gamma)
        name = "|".join(_block_name(sc, b) for b in gamma.blocks)
        kg = _per_block(k_value(mc, sc.x, q, cfg).values, sc.g, gamma)
        rep = h_value(mc, sc.x, cfg)
        for b, kv, r in zip(gamma.blocks, kg, rep.rows):
            rows.append([SCHEMA_VERSION, name, _block_name(sc, b), fmt(kv), fmt(r.dual), fmt(r.primal), fmt(r.gap)])
            worst = max(worst, abs(r.gap))
    out.write(_csv(SWEEP_HEADER, rows))
    return EXIT_OK if worst <= args.tol else EXIT_VERIFY


def cmd_oracle(args, out) -> int:
    sc = load_scenario(args.scenario)
    if isinstance(sc.map, Coarsened) or sc.map.orientation != QUASICONVEX:
        raise InputError("the oracle command needs an uncoarsened quasiconvex map")
    grid = GridCfg(args.box[0], args.box[1], args.step)
    q = _density(sc, False, "oracle")
    k = k_value(sc.map, sc.x, q, _cfg(sc, args)).values
    gk = grid_k(sc.map, sc.x, q, cfg=grid).values
    ek = equality_k(sc.map, sc.x, q, cfg=grid).values
    slopes = grid_slope_bounds(sc.map, grid)
    rows = []
    for block, a, b, c, lip in zip(sc.g.blocks, k, gk, ek, slopes):
        bound = lip * grid.step
        ok = abs(b - a) <= bound + 1e-6
        rows.append([SCHEMA_VERSION, _block_name(sc, block), fmt(a), fmt(b), fmt(c), fmt(lip), fmt(bound),
                     "true" if ok else "false"])
    out.write(_csv(ORACLE_HEADER, rows))
    return EXIT_OK


def cmd_props(args, out) -> int:
    cfg = DEFAULT_CFG if args.restarts is None else dataclasses.replace(DEFAULT_CFG, restarts=args.restarts)
    seed = 0 if args.seed is None else args.seed
    report = run_property_suite(seed, args.cases, cfg=cfg)
    out.write(report.to_csv() if args.format == "csv" else report.to_text())
    return EXIT_OK if report.passed else EXIT_VERIFY


# ---------------------------------------------------------------------------
# parser


def _env_seed() -> Optional[int]:
    raw = os.environ.get("QUASIDUAL_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"QUASIDUAL_SEED must be an integer, got {raw!r}") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quasidual", description="Dual representation of quasiconvex conditional maps.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default: $QUASIDUAL_SEED, then 0)")
    common.add_argument("--restarts", type=_positive_int, default=None, help="random restarts of the dual search")
    common.add_argument("--tol", type=_positive_float, default=1e-6, help="largest acceptable |gap| (default 1e-6)")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_cmd(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("scenario", help="scenario YAML file")
        p.set_defaults(func=func)
        return p

    scenario_cmd("eval", cmd_eval, "primal value per atom")
    scenario_cmd("k", cmd_k, "K(X, Q) per atom (needs q)")
    scenario_cmd("h", cmd_h, "dual value H(X) with argmax weights")
    scenario_cmd("gap", cmd_gap, "primal, dual and gap; exit 3 if max |gap| > --tol")
    scenario_cmd("fenchel", cmd_fenchel, "conjugate per atom (needs q and a cash-invariant map)")
    scenario_cmd("coarsen-sweep", cmd_coarsen_sweep, "K, H and primal for every coarsening of G")
    p = scenario_cmd("oracle", cmd_oracle, "grid oracle cross-check")
    p.add_argument("--step", type=_positive_float, default=0.05, help="grid step (default 0.05)")
    p.add_argument("--box", type=float, nargs=2, default=(-5.0, 5.0), metavar=("LO", "HI"), help="grid box (default -5 5)")
    p = sub.add_parser("props", parents=[common], help="run the property suite")
    p.add_argument("--cases", type=_positive_int, default=200, help="instances per family (default 200)")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.set_defaults(func=cmd_props)
    return parser


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_INPUT
    try:
        if args.seed is None:
            args.seed = _env_seed()
        return args.func(args, out)
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
