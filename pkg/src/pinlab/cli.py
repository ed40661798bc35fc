"""Command-line front end.

Configuration is a JSON object with blocks ``model``, ``graph``, ``run``,
``analysis`` and ``output``. Every summary JSON embeds the fully resolved
configuration under ``"config"`` and can itself be passed to ``--config``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import concentration as conc
from .drift import drift_rows, integrate_mean_field, trajectory_csv
from .engine import derive_seed, is_ergodic_sufficient, merge_stats, random_configuration, run_replicas
from .graph import (EXACT_GAP_MAX_NODES, Graph, generate_complete, generate_erdos_renyi,
                    generate_single_link, generate_star, mixing_gap_exact,
                    mixing_gap_local_search)
from .lyapunov import certificate_for
from .model import from_config

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

RUN_DEFAULTS = {"seed": 0, "replicas": 1, "samples": 1000, "burn_in": None, "thinning": None}
OUTPUT_DEFAULTS = {"dir": "out", "trajectory": False}


class ConfigError(ValueError):
    pass


# -- config ----------------------------------------------------------------

def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{p}: top level must be an object")
    # a previous summary: reuse its embedded configuration
    if "config" in cfg and "model" not in cfg and "graph" not in cfg:
        cfg = cfg["config"]
    return cfg


def _num(block, name, where, lo=None, hi=None, integer=False, required=False, default=None):
    val = block.get(name, default)
    if val is None:
        if required:
            raise ConfigError(f"{where}.{name} is required")
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{name} must be a number, got {val!r}")
    if integer and int(val) != val:
        raise ConfigError(f"{where}.{name} must be an integer, got {val!r}")
    if lo is not None and val < lo:
        raise ConfigError(f"{where}.{name} must be >= {lo}, got {val!r}")
    if hi is not None and val > hi:
        raise ConfigError(f"{where}.{name} must be <= {hi}, got {val!r}")
    return int(val) if integer else float(val)


def resolve(cfg: dict, args) -> dict:
    """Fill defaults, apply command-line overrides and validate ranges."""
    cfg = copy.deepcopy(cfg)
    run = {**RUN_DEFAULTS, **cfg.get("run", {})}
    if args.seed is not None:
        run["seed"] = args.seed
    _num(run, "seed", "run", lo=0, integer=True, required=True)
    _num(run, "replicas", "run", lo=1, integer=True)
    _num(run, "samples", "run", lo=1, integer=True)
    _num(run, "burn_in", "run", lo=0, integer=True)
    _num(run, "thinning", "run", lo=1, integer=True)
    cfg["run"] = run
    out = {**OUTPUT_DEFAULTS, **cfg.get("output", {})}
    if args.out is not None:
        out["dir"] = args.out
    cfg["output"] = out
    cfg.setdefault("analysis", {})
    return cfg


def embedded(cfg: dict) -> dict:
    """Configuration as written into summaries (output location omitted)."""
    cfg = copy.deepcopy(cfg)
    cfg["output"] = {k: v for k, v in cfg["output"].items() if k != "dir"}
    return cfg


def build_model(cfg: dict):
    if "model" not in cfg:
        raise ConfigError("model block is required")
    try:
        return from_config(cfg["model"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"model: {exc}") from None


def build_graph(block: dict | None, seed: int) -> Graph:
    if not block:
        raise ConfigError("graph block is required")
    if "file" in block:
        path = Path(block["file"])
        if not path.is_file():
            raise ConfigError(f"graph file not found: {path}")
        try:
            return Graph.read(path)
        except ValueError as exc:
            raise ConfigError(f"graph file {path}: {exc}") from None
    family = block.get("family")
    n = _num(block, "n", "graph", lo=2, integer=True, required=True)
    if family == "complete":
        return generate_complete(n)
    if family == "star":
        return generate_star(n)
    if family == "single_link":
        return generate_single_link(n)
    if family == "er":
        p = block.get("p")
        if p is None:
            raise ConfigError("graph.p is required for family 'er'")
        prob = conc.er_probability(p, n)
        if not 0 < prob <= 1:
            raise ConfigError(f"graph.p must give a probability in (0, 1], got {prob}")
        gseed = _num(block, "seed", "graph", lo=0, integer=True, default=derive_seed(seed, 0))
        return generate_erdos_renyi(n, prob, gseed)
    raise ConfigError(f"graph.family must be one of complete, er, star, single_link "
                      f"(or give graph.file), got {family!r}")


def _check_ergodic(params, cfg, args):
    ack = args.allow_nonergodic or cfg["analysis"].get("allow_nonergodic", False)
    if not ack and not is_ergodic_sufficient(params):
        raise ConfigError("chain is not known to be ergodic (rho = 1 or reducible P); "
                          "pass --allow-nonergodic to run anyway")
    return bool(ack)


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    return path


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- commands --------------------------------------------------------------

def cmd_simulate(cfg, args) -> int:
    params = build_model(cfg)
    run = cfg["run"]
    g = build_graph(cfg.get("graph"), run["seed"])
    _check_ergodic(params, cfg, args)
    stats = run_replicas(g, params, replicas=run["replicas"], master_seed=run["seed"],
                         samples=run["samples"], burn_in=run["burn_in"],
                         thinning=run["thinning"], threads=args.threads)
    merged = merge_stats(stats)
    summary = {
        "config": embedded(cfg),
        "n": g.n, "m": g.m,
        "theta_time_average": [float(v) for v in merged["theta_time_average"]],
        "theta_se": [float(v) for v in merged["theta_se"]] if len(stats) > 1 else None,
        "replicas": [s.to_dict() for s in stats],
    }
    out = Path(cfg["output"]["dir"])
    path = _write(out, "stats.json", _dump(summary))
    print(f"wrote {path}")
    if cfg["output"].get("trajectory"):
        print(f"wrote {_write(out, 'trajectory.csv', stats[0].trajectory_csv())}")
    return EXIT_OK


def _gap_graph(cfg, args) -> Graph:
    if args.graph_file or args.family:
        block = {"file": args.graph_file} if args.graph_file else \
            {"family": args.family, "n": args.n, "p": args.p}
        if args.family and args.n is None:
            raise ConfigError("--n is required with --family")
        return build_graph(block, cfg["run"]["seed"])
    return build_graph(cfg.get("graph"), cfg["run"]["seed"])


def cmd_mixing_gap(cfg, args) -> int:
    g = _gap_graph(cfg, args)
    if args.exact:
        if g.n > EXACT_GAP_MAX_NODES:
            raise ConfigError(f"--exact enumerates 3^n labelings and is limited to n <= "
                              f"{EXACT_GAP_MAX_NODES} (got n={g.n}); use --search instead")
        res = mixing_gap_exact(g)
    else:
        res = mixing_gap_local_search(g, restarts=args.restarts, seed=cfg["run"]["seed"])
    print(f"W = {res.value!r} ({res.as_fraction()})")
    print(f"exact = {res.exact}")
    print(f"S = {list(res.witness_S)}")
    print(f"U = {list(res.witness_U)}")
    if args.out is not None:
        body = {"config": embedded(cfg), "n": g.n, "m": g.m, **res.to_dict()}
        print(f"wrote {_write(Path(cfg['output']['dir']), 'mixing_gap.json', _dump(body))}")
    return EXIT_OK


def cmd_drift_check(cfg, args) -> int:
    params = build_model(cfg)
    seed = cfg["run"]["seed"]
    g = build_graph(cfg.get("graph"), seed)
    an = cfg["analysis"]
    count = _num(an, "configs", "analysis", lo=1, integer=True, default=20)
    W, W_exact = conc.mixing_gap_for(g, seed=derive_seed(seed, 2))
    configs = [random_configuration(g, params.k, derive_seed(seed, 3, i)).states
               for i in range(count)]
    rows = drift_rows(g, params, configs, W, W_exact)
    cols = list(rows[0])
    lines = [",".join(cols)]
    lines += [",".join(repr(float(r[c])) if not isinstance(r[c], bool) else str(r[c])
                       for c in cols) for r in rows]
    out = Path(cfg["output"]["dir"])
    print(f"wrote {_write(out, 'drift.csv', chr(10).join(lines) + chr(10))}")
    holds = all(r["discrepancy"] <= r["pairwise_bound"] + 1e-12 for r in rows)
    summary = {"config": embedded(cfg), "W": W, "W_exact": W_exact, "configs": count,
               "max_discrepancy": max(r["discrepancy"] for r in rows),
               "pairwise_bound_holds": holds}
    print(f"wrote {_write(out, 'drift.json', _dump(summary))}")
    return EXIT_OK


def _seeds(an, run):
    seeds = an.get("seeds", [run["seed"]])
    if not isinstance(seeds, list) or not seeds or \
            not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in seeds):
        raise ConfigError("analysis.seeds must be a nonempty list of nonnegative integers")
    return seeds


def cmd_concentration(cfg, args) -> int:
    params = build_model(cfg)
    run, an = cfg["run"], cfg["analysis"]
    delta = _num(an, "delta", "analysis", lo=0, required=True)
    mode = an.get("mode", "single")
    try:
        cert = certificate_for(params, an.get("certificate"))
    except ValueError as exc:
        raise ConfigError(f"analysis.certificate: {exc}") from None
    replicas = max(run["replicas"], 2)
    if mode != "vanishing_alpha" and not delta > cert.zeta:
        raise ConfigError(f"analysis.delta = {delta} must exceed the slack zeta = {cert.zeta} "
                          "(the concentration bound requires delta > zeta)")
    common = dict(samples=run["samples"], replicas=replicas, burn_in=run["burn_in"],
                  thinning=run["thinning"], threads=args.threads)
    if mode == "single":
        g = build_graph(cfg.get("graph"), run["seed"])
        ack = _check_ergodic(params, cfg, args)
        reports = [conc.estimate_event_mass(
            g, params, cert, delta, master_seed=run["seed"], allow_nonergodic=ack,
            gap_seed=derive_seed(run["seed"], 2), label="single",
            family=cfg["graph"].get("family", "file"), **common)]
    elif mode == "atm":
        _check_ergodic(params, cfg, args)
        ns = an.get("ns")
        if not ns:
            raise ConfigError("analysis.ns is required for mode 'atm'")
        reports = conc.atm_sweep(params, an.get("family", "complete"), ns, delta,
                                 seeds=_seeds(an, run), p=an.get("p"), cert=cert, **common)
    elif mode == "vanishing_alpha":
        alphas, ns = an.get("alphas"), an.get("ns")
        if not alphas or not ns:
            raise ConfigError("analysis.alphas and analysis.ns are required for mode 'vanishing_alpha'")
        reports = conc.vanishing_alpha_sweep(params, alphas, ns, delta, seeds=_seeds(an, run),
                                             family=an.get("family", "er"), p=an.get("p"),
                                             **common)
    else:
        raise ConfigError(f"analysis.mode must be single, atm or vanishing_alpha, got {mode!r}")
    out = Path(cfg["output"]["dir"])
    print(f"wrote {_write(out, 'concentration.csv', conc.reports_csv(reports))}")
    print(f"wrote {_write(out, 'concentration.json', conc.reports_json(reports, embedded(cfg)))}")
    for r in reports:
        print(f"n={r.n} W={r.W:.4g}{'' if r.W_exact else ' (lower bound)'} "
              f"mass={r.empirical_mass:.4f}+-{r.se:.4f} bound={r.theoretical_lower_bound:.4f}")
    return EXIT_OK


def cmd_ode(cfg, args) -> int:
    params = build_model(cfg)
    an = cfg["analysis"]
    t_end = _num(an, "t_end", "analysis", lo=0, default=100.0)
    dt = _num(an, "dt", "analysis", lo=1e-12, default=1e-2)
    theta0 = an.get("theta0")
    if theta0 is None:
        theta0 = [1.0 / params.k] * params.k
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != (params.k,) or np.any(theta0 < 0) or abs(theta0.sum() - 1) > 1e-9:
        raise ConfigError(f"analysis.theta0 must be a probability vector of length {params.k}")
    times, thetas = integrate_mean_field(params, theta0, t_end, dt)
    out = Path(cfg["output"]["dir"])
    print(f"wrote {_write(out, 'ode.csv', trajectory_csv(times, thetas))}")
    summary = {"config": embedded(cfg), "final": [float(v) for v in thetas[-1]]}
    print(f"wrote {_write(out, 'ode.json', _dump(summary))}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "mixing-gap": cmd_mixing_gap,
    "drift-check": cmd_drift_check,
    "concentration": cmd_concentration,
    "ode": cmd_ode,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON) or a previous summary")
    common.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for replicas/sweeps")
    common.add_argument("--allow-nonergodic", action="store_true",
                        help="run chains not known to be ergodic")

    parser = argparse.ArgumentParser(prog="pinlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run the chain and write stationary stats")
    gap = sub.add_parser("mixing-gap", parents=[common], help="total mixing gap of a graph")
    how = gap.add_mutually_exclusive_group()
    how.add_argument("--exact", action="store_true", help="exhaustive enumeration (small n)")
    how.add_argument("--search", action="store_true", help="local search lower bound (default)")
    gap.add_argument("--restarts", type=int, default=20)
    gap.add_argument("--graph-file")
    gap.add_argument("--family", choices=["complete", "er", "star", "single_link"])
    gap.add_argument("--n", type=int)
    gap.add_argument("--p", type=float)
    sub.add_parser("drift-check", parents=[common], help="mean vs limit drift with bounds")
    sub.add_parser("concentration", parents=[common], help="empirical masses against the bound")
    sub.add_parser("ode", parents=[common], help="integrate the mean-field ODE")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        raw = load_config(args.config) if args.config else {}
        if not raw and args.command != "mixing-gap":
            raise ConfigError("--config is required")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = resolve(raw, args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
