"""Command-line front end.

Exit codes: 0 when every check passes, 1 when a check fails (the failures are
printed as JSON on stderr and written to ``failures.json``), 2 on a
configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, certify, io
from .chains import f_regularity_probe, hitting_analysis_exact, hitting_analysis_mc
from .evaluator import NonConvergenceError, discount_sweep, expected_average_cost, pathwise_average_cost
from .generators import EX2_PRESETS, gen_example1, gen_example2, gen_random_mdp
from .model import FiniteMdp, InvalidModelError, StationaryPolicy
from .reproduce import CHECK_COLUMNS, REPORTS
from .solver import solve_min_pair, verify_minimum_pair

EX1_PRESETS = {
    "ex1-harris": ("harmonic", "indicator"),
    "ex1-nonharris": ("telescoping", "linear"),
    "ex1-linearcost": ("harmonic", "linear_plus_one"),
}
PRESETS = sorted([*EX1_PRESETS, *EX2_PRESETS, "single", "random"])


class ConfigError(Exception):
    pass


def single_state_model() -> FiniteMdp:
    """One state, two actions with costs 5 and 2."""
    return FiniteMdp.from_rows(1, [(0, 1)], {(0, 0): [1.0], (0, 1): [1.0]}, {(0, 0): 5.0, (0, 1): 2.0},
                               "single state, two actions")


def load_source(args):
    """Returns (FiniteMdp, extra) where extra is the chain handle or Example2Model if any."""
    if (args.model is None) == (args.preset is None):
        raise ConfigError("exactly one of --model or --preset is required")
    if args.model is not None:
        path = Path(args.model)
        if not path.exists():
            raise ConfigError(f"model file {path} does not exist")
        try:
            return io.load_model(path), None
        except (ValueError, InvalidModelError) as exc:
            raise ConfigError(str(exc)) from exc
    p = args.preset
    if p in EX1_PRESETS:
        model, chain = gen_example1(*EX1_PRESETS[p], truncation=args.truncation)
        return model, chain
    if p in EX2_PRESETS:
        ex = gen_example2(EX2_PRESETS[p])
        return ex.mdp, ex
    if p == "single":
        return single_state_model(), None
    if p == "random":
        return gen_random_mdp(args.states, 3, 0.0, (0.0, 10.0), args.seed), None
    raise ConfigError(f"unknown preset {p!r}; choose from {PRESETS}")


def parse_alphas(text):
    try:
        alphas = [float(a) for a in text.split(",") if a.strip()]
    except ValueError:
        raise ConfigError(f"--alphas must be a comma-separated list of numbers, got {text!r}")
    bad = [a for a in alphas if not 0 < a < 1]
    if not alphas or bad:
        raise ConfigError(f"evaluator: alphas must lie in (0, 1), got {text!r}")
    return alphas


def out_dir(args) -> Path:
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_metadata(d: Path, args, extra=None):
    meta = {"command": args.command, "argv": sys.argv[1:], "version": __version__,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    if extra:
        meta.update(extra)
    io.dump_json(meta, d / "metadata.json")


def pick_policy(model, name, solution=None):
    if name == "uniform":
        return StationaryPolicy.uniform(model)
    if name == "optimal":
        return (solution or solve_min_pair(model)).policy
    raise ConfigError(f"unknown policy {name!r}")


def finish(d: Path, failures: list) -> int:
    if not failures:
        return 0
    io.dump_json({"failures": failures}, d / "failures.json")
    print(json.dumps({"failures": io.to_jsonable(failures)}), file=sys.stderr)
    return 1


# ---------------------------------------------------------------- commands

def cmd_solve(args):
    model, _ = load_source(args)
    sol = solve_min_pair(model)
    d = out_dir(args)
    io.dump_json(io.solution_to_dict(model, sol), d / "solution.json")
    rows = [[x, int(model.actions[x][int(np.argmax(sol.policy.mu[x]))]), sol.state_marginal[x], sol.dual_values[x]]
            for x in range(model.n_states)]
    print(f"rho* = {sol.rho_star:.12g}   status = {sol.lp_status}   residual = {sol.pair.invariance_residual:.3e}")
    print(io.table(["state", "action", "p*", "dual h"], rows))
    io.write_csv(d / "solution.csv", ["state", "action", "p_star", "dual_h"], rows)
    write_metadata(d, args)
    verify = verify_minimum_pair(model, sol, [], min(args.horizon, 2000)) if model.n_states <= 200 else None
    failures = []
    if sol.pair.invariance_residual > 1e-9:
        failures.append({"module": "minpair-solver", "check": "invariance residual <= 1e-9",
                         "value": sol.pair.invariance_residual})
    if verify is not None:
        failures += [{"module": "minpair-solver", "check": c.name, "value": c.value, "target": c.target}
                     for c in verify.failures()]
    return finish(d, failures)


def cmd_sweep(args):
    model, _ = load_source(args)
    alphas = parse_alphas(args.alphas)
    entries = discount_sweep(model, alphas, tol=args.tol)
    d = out_dir(args)
    rows = [[e.alpha, e.m_alpha, e.scaled_m_alpha, e.iterations] for e in entries]
    io.write_csv(d / "sweep.csv", ["alpha", "m_alpha", "scaled_m_alpha", "iterations"], rows)
    print(io.table(["alpha", "m_alpha", "(1-a) m_a", "iterations"], rows))
    write_metadata(d, args)
    return finish(d, [{"module": "evaluator", "check": "value iteration converged", "alpha": e.alpha,
                       "detail": e.error} for e in entries if e.error])


def cmd_simulate(args):
    model, _ = load_source(args)
    pol = pick_policy(model, args.policy)
    x0 = args.initial
    if not 0 <= x0 < model.n_states:
        raise ConfigError(f"--initial {x0} outside 0..{model.n_states - 1}")
    pw = pathwise_average_cost(model, pol, x0, args.horizon, args.paths, args.seed)
    ex = expected_average_cost(model, pol, x0, args.horizon)
    d = out_dir(args)
    header = ["n", "j_n_over_n", "path_mean", "q05", "q25", "q50", "q75", "q95"]
    rows = []
    for k, n in enumerate(pw.checkpoints):
        col = pw.running[:, k]
        rows.append([int(n), float(ex.running[n - 1]), float(col.mean()),
                     *[float(v) for v in np.quantile(col, (0.05, 0.25, 0.5, 0.75, 0.95))]])
    io.write_csv(d / "simulate.csv", header, rows)
    summary = [[args.horizon, ex.j_n_over_n, ex.tail_inf, ex.tail_sup,
                float(pw.tail_inf.min()), float(pw.tail_sup.max())]]
    io.write_csv(d / "summary.csv", ["n", "j_n_over_n", "tail_inf", "tail_sup",
                                     "path_tail_inf_min", "path_tail_sup_max"], summary)
    print(io.table(["n", "J_n/n", "path mean", "q05", "q50", "q95"],
                   [[r[0], r[1], r[2], r[3], r[5], r[7]] for r in rows[-5:]]))
    write_metadata(d, args)
    return 0


def cmd_certify(args):
    model, extra = load_source(args)
    d = out_dir(args)
    failures = []
    if hasattr(extra, "centers"):  # Example2Model
        su = certify.check_su_example2(extra)
        m = certify.check_m_example2(extra, args.j)
        g = certify.check_g_example2(extra, args.horizon, args.horizon, args.paths, args.seed)
        certs = {"SU": su, "M": m, "G": g}
    else:
        levels = sorted(set(model.cost.tolist()))
        su = certify.check_su(model, certify.exhaustion_by_cost_level(model, levels))
        O = range(model.n_states)
        m = certify.check_m_finite(model, O, [], certify.envelope_measure(model, O, []))
        g = certify.check_g(model, pick_policy(model, args.policy), args.initial, args.horizon, args.threshold)
        certs = {"SU": su, "M": m, "G": g}
    rows = []
    for name, c in certs.items():
        worst = getattr(c, "worst", "")
        value = getattr(c, "max_violation", None)
        if value is None:
            value = getattr(c, "tail_sup", None)
        if value is None:
            value = c.infima[-1] if c.infima else math.nan
        rows.append([name, "pass" if c.passed else "FAIL", value, str(worst)])
        if not c.passed:
            failures.append({"module": "assumption-certify", "check": name, "value": value, "worst": str(worst)})
    print(io.table(["condition", "result", "value", "worst"], rows, width=16))
    io.dump_json({k: _asdict(v) for k, v in certs.items()}, d / "certificates.json")
    io.write_csv(d / "certify.csv", ["condition", "result", "value", "worst"], rows)
    write_metadata(d, args)
    return finish(d, failures)


def _asdict(obj):
    from dataclasses import asdict, is_dataclass
    return asdict(obj) if is_dataclass(obj) else obj


def cmd_diagnose(args):
    model, extra = load_source(args)
    d = out_dir(args)
    if extra is not None and hasattr(extra, "log_survival"):
        rep = hitting_analysis_exact(extra, args.depth)
        reg = f_regularity_probe(extra, 1.0, args.depth)
        rep.f_regular = reg.verdict
    else:
        rep = hitting_analysis_mc(model, pick_policy(model, args.policy), [args.target], args.paths,
                                  args.horizon, args.seed)
    rows = [[int(s), float(rep.hitting_probability[k]), rep.expected_hitting_time[k], float(rep.escape_probability[k])]
            for k, s in enumerate(rep.states)]
    print(f"classification = {rep.classification}   f_regular = {rep.f_regular}")
    print(io.table(["state", "P(hit)", "E[tau]", "escape"], rows, width=24))
    io.write_csv(d / "diagnose.csv", ["state", "hitting_probability", "expected_hitting_time",
                                      "escape_probability"], rows)
    io.dump_json({"classification": rep.classification, "f_regular": rep.f_regular, "target": rep.target,
                  "states": rep.states, "hitting_probability": rep.hitting_probability,
                  "expected_hitting_time": [str(t) for t in rep.expected_hitting_time],
                  "escape_probability": rep.escape_probability, "notes": rep.notes}, d / "diagnose.json")
    write_metadata(d, args)
    return 0


def cmd_reproduce(args):
    fn = REPORTS[args.example]
    kw = {"seed": args.seed}
    if args.horizon_set:
        kw["horizon"] = args.horizon
    if args.paths_set:
        kw["n_paths"] = args.paths
    checks = fn(**kw)
    d = out_dir(args)
    rows = [c.row() for c in checks]
    io.write_csv(d / f"reproduce_{args.example}.csv", CHECK_COLUMNS, rows)
    print(io.table(["result", "value", "target", "check"],
                   [["pass" if c.passed else "FAIL", c.value, c.target, "  " + c.name] for c in checks], width=12))
    write_metadata(d, args)
    return finish(d, [{"module": c.module, "check": c.name, "value": c.value, "target": c.target,
                       "tolerance": c.tolerance} for c in checks if not c.passed])


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "simulate": cmd_simulate, "certify": cmd_certify,
            "diagnose": cmd_diagnose, "reproduce": cmd_reproduce}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(2)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("model source")
    src.add_argument("--model", help="model file (JSON)")
    src.add_argument("--preset", choices=PRESETS, help="built-in model")
    src.add_argument("--truncation", type=_positive_int, default=50, help="N for ex1 presets (default 50)")
    src.add_argument("--states", type=_positive_int, default=5, help="states for the random preset")
    common.add_argument("--horizon", type=_positive_int, default=10_000)
    common.add_argument("--paths", type=_positive_int, default=1000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=1e-10, help="value iteration tolerance")
    common.add_argument("--out", default="minpair-out", help="output directory")

    p = _Parser(prog="minpair", description="Average-cost MDP minimum pairs: solve, sweep, simulate, "
                                            "certify assumptions, diagnose recurrence.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("solve", parents=[common], help="rho* and a stationary minimum pair by LP")
    s = sub.add_parser("sweep", parents=[common], help="discount sweep (1-alpha) m_alpha")
    s.add_argument("--alphas", default="0.9,0.99,0.999")
    s = sub.add_parser("simulate", parents=[common], help="exact and pathwise running averages")
    s.add_argument("--policy", choices=["uniform", "optimal"], default="uniform")
    s.add_argument("--initial", type=int, default=0)
    s = sub.add_parser("certify", parents=[common], help="check the (G), (SU), (M) conditions")
    s.add_argument("--policy", choices=["uniform", "optimal"], default="optimal")
    s.add_argument("--initial", type=int, default=0)
    s.add_argument("--threshold", type=float, default=1e6, help="(G) bound on the J_k/k tail")
    s.add_argument("--j", type=_positive_int, default=3, help="level j for O = (-j-1, j+1) on ex2 presets")
    s = sub.add_parser("diagnose", parents=[common], help="hitting times and recurrence class")
    s.add_argument("--policy", choices=["uniform", "optimal"], default="optimal")
    s.add_argument("--target", type=int, default=0)
    s.add_argument("--depth", type=_positive_int, default=10 ** 6, help="series depth for ex1 presets")
    s = sub.add_parser("reproduce", parents=[common], help="check the worked examples")
    s.add_argument("example", choices=sorted(REPORTS))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.horizon_set = any(a.startswith("--horizon") for a in argv)
    args.paths_set = any(a.startswith("--paths") for a in argv)
    if args.command != "reproduce" and args.model is None and args.preset is None:
        parser.error("one of --model or --preset is required")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"minpair: configuration error: {exc}", file=sys.stderr)
        return 2
    except (InvalidModelError, NonConvergenceError, ValueError) as exc:
        print(f"minpair: {exc}", file=sys.stderr)
        return 2
