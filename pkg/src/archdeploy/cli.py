"""Command-line experiment runner.

Every verb reads a JSON scenario config, writes plot-ready CSV/JSON into
``--out`` and a ``manifest.json`` with the seed, versions and config hash.

Exit codes: 0 ok, 1 validation failure, 2 dataset missing, 3 cap exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import networkx
import numpy
import scipy

from . import __version__
from .dataio import (
    DATA_ENV,
    ScenarioConfig,
    build_scenario,
    scenario_network,
    scenario_traffic,
    explicit_flows,
    path_network,
)
from .dynamics import LogitConfig, dominance_iteration, logit_run
from .errors import CapExceeded, DatasetMissing
from .game import DeploymentGame, equilibrium_report, potential
from .mechanism import multi_round_tipping
from .metrics import report as deploy_report
from .model import TOL, critical_isps

EXIT_OK, EXIT_INVALID, EXIT_DATASET, EXIT_CAP = 0, 1, 2, 3


def _game(cfg: ScenarioConfig, **overrides) -> DeploymentGame:
    net, flows, model, costs = build_scenario(cfg, **overrides)
    return DeploymentGame(flows, model, costs, network=net)


def _config_hash(cfg: ScenarioConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _write_manifest(out, verb, cfg, seed, files, extra=None):
    manifest = {
        "verb": verb,
        "seed": seed,
        "config": cfg.to_dict(),
        "config_sha256": _config_hash(cfg),
        "outputs": files,
        "versions": {
            "archdeploy": __version__,
            "python": platform.python_version(),
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "networkx": networkx.__version__,
        },
        "notes": ["community detection replaced by largest connected component"],
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(x) for x in r) + "\n")


# ---- sweeps ----------------------------------------------------------------


def _sweep_point(args):
    cfg_dict, key, x = args
    cfg = ScenarioConfig.from_dict(cfg_dict)
    if key == "price":
        g = _game(cfg, unit_price=x)
    elif key == "alpha":
        g = _game(cfg, alpha=None if x == "inf" else float(x))
    else:
        g = _game(cfg, flatten_m=int(x))
    rep = equilibrium_report(g)
    return [
        x,
        sum(rep.smallest),
        sum(rep.largest),
        sum(rep.robust),
        potential(g, rep.robust),
        potential(g, g.ones),
        int(rep.heuristic),
    ]


DEFAULT_GRIDS = {
    "price": [round(0.5 * k, 10) for k in range(1, 41)],
    "alpha": [1, 2, 4, 8, 16, "inf"],
    "flatten": [2, 3, 4, 5, 6],
}


def _sweep(cfg, key, jobs):
    grid = cfg.grid.get(key, DEFAULT_GRIDS[key])
    if not grid:
        raise ValueError(f"empty {key} grid")
    tasks = [(cfg.to_dict(), key, x) for x in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    header = [key, "smallest", "largest", "robust", "phi_robust", "phi_all", "heuristic"]
    return header, rows


# ---- verbs -----------------------------------------------------------------


def cmd_report(cfg, args):
    g = _game(cfg)
    rep = deploy_report(g)
    path = os.path.join(args.out, "report.json")
    with open(path, "w") as fh:
        fh.write(rep.to_json(indent=2, sort_keys=True) + "\n")
    print(rep.to_json(sort_keys=True))
    return ["report.json"]


def _sweep_cmd(key, fname):
    def run(cfg, args):
        header, rows = _sweep(cfg, key, args.jobs)
        _write_csv(os.path.join(args.out, fname), header, rows)
        return [fname]

    return run


def _logit_one(task):
    cfg_dict, seed = task
    cfg = ScenarioConfig.from_dict(cfg_dict)
    g = _game(cfg)
    lc = cfg.logit
    conf = LogitConfig(
        beta=lc.get("beta", 1.0),
        steps=lc.get("steps", 10_000),
        schedule=lc.get("schedule", False),
        init_prob=lc.get("init_prob", 0.0),
        seed=seed,
    )
    tr = logit_run(g, conf)
    return tr.deployers, tr.potential


def cmd_logit(cfg, args):
    seeds = [args.seed + r for r in range(cfg.replicas)]
    tasks = [(cfg.to_dict(), s) for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            runs = list(ex.map(_logit_one, tasks))
    else:
        runs = [_logit_one(t) for t in tasks]
    counts = numpy.mean([r[0] for r in runs], axis=0)
    phis = numpy.mean([r[1] for r in runs], axis=0)
    rows = [[t, float(c), float(p)] for t, (c, p) in enumerate(zip(counts, phis))]
    _write_csv(os.path.join(args.out, "logit.csv"), ["step", "deployer_count", "potential"], rows)
    return ["logit.csv"]


def cmd_induction(cfg, args):
    g = _game(cfg)
    ic = cfg.logit.get("induction", {}) if isinstance(cfg.logit, dict) else {}
    hist = dominance_iteration(
        g,
        noise_sigma=ic.get("noise_sigma", 0.3),
        rounds=ic.get("rounds", 100),
        samples=ic.get("samples", 100_000),
        seed=args.seed,
    )
    rows = []
    for s in hist:
        for p in g.players:
            rows.append([s.round, p, s.lower[p], s.upper[p]])
    _write_csv(os.path.join(args.out, "induction.csv"), ["round", "isp", "lower", "upper"], rows)
    return ["induction.csv"]


def cmd_mechanism(cfg, args):
    g = _game(cfg)
    trace = multi_round_tipping(g, seed=cfg.mechanism.get("seed", args.seed))
    path = os.path.join(args.out, "tipping.csv")
    trace.to_csv(path)
    return ["tipping.csv"]


def validate_config(cfg: ScenarioConfig) -> list:
    """Machine-readable diagnostics: list of {"code", "detail"} dicts."""
    diags = []
    try:
        if cfg.flows is not None and cfg.topology.get("source") is None:
            flows = explicit_flows(cfg.flows)
            net = path_network(flows)
        else:
            net = scenario_network(cfg)
            if cfg.flows is not None:
                flows = explicit_flows(cfg.flows)
            else:
                tm = scenario_traffic(cfg, net)
                flows = None
                adj = net.adjacency()
                comp = {}
                for cid, c in enumerate(networkx.connected_components(networkx.Graph(
                        [*net.edges] + [(n, n) for n in net.nodes]))):
                    for n in c:
                        comp[n] = cid
                for i, j in tm.pairs():
                    if i not in adj or j not in adj or comp[i] != comp[j]:
                        diags.append({"code": "UNREACHABLE", "detail": [i, j]})
                if not diags:
                    _, flows, _, _ = build_scenario(cfg)
    except ValueError as e:
        return [{"code": "BAD_FLOW", "detail": str(e)}]
    if flows is None:
        return diags
    total = math.fsum(f.weight for f in flows)
    if abs(total - 1.0) > TOL:
        diags.append({"code": "WEIGHT_SUM", "detail": total})
    for f in flows:
        for p in f.paths:
            for a, b in zip(p, p[1:]):
                if not net.has_edge(a, b):
                    diags.append({"code": "BAD_EDGE", "detail": [str(f.id), a, b]})
    if cfg.costs is not None:
        costs = {int(k): float(v) for k, v in cfg.costs.items()}
        for i in sorted(critical_isps(flows, all_paths=True)):
            if i not in costs:
                diags.append({"code": "COST_MISSING", "detail": i})
        for i, c in costs.items():
            if c < 0 or not math.isfinite(c):
                diags.append({"code": "COST_INVALID", "detail": i})
    else:
        expected = cfg.unit_cost * math.fsum(f.weight * len(f.paths[0]) for f in flows)
        from .dataio import assign_costs

        got = math.fsum(assign_costs(flows, cfg.unit_cost).values())
        if abs(expected - got) > 1e-9 * max(1.0, expected):
            diags.append({"code": "COST_TOTAL", "detail": [got, expected]})
    return diags


def cmd_validate(cfg, args):
    diags = validate_config(cfg)
    path = os.path.join(args.out, "diagnostics.json")
    with open(path, "w") as fh:
        json.dump(diags, fh, indent=2)
    print(json.dumps(diags))
    return ["diagnostics.json"], (EXIT_INVALID if diags else EXIT_OK)


VERBS = {
    "report": cmd_report,
    "sweep-price": _sweep_cmd("price", "sweep_price.csv"),
    "sweep-alpha": _sweep_cmd("alpha", "sweep_alpha.csv"),
    "sweep-flatten": _sweep_cmd("flatten", "sweep_flatten.csv"),
    "logit": cmd_logit,
    "induction": cmd_induction,
    "mechanism": cmd_mechanism,
    "validate": cmd_validate,
}


def build_parser():
    ap = argparse.ArgumentParser(
        prog="archdeploy",
        description="Deployability experiments for new network architectures.",
        epilog=f"Relative dataset paths resolve against ${DATA_ENV}.",
    )
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, help="scenario config (JSON)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out", default="out")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ScenarioConfig.load(args.config)
    except (OSError, ValueError) as e:
        print(json.dumps([{"code": "BAD_CONFIG", "detail": str(e)}]), file=sys.stderr)
        return EXIT_INVALID
    if "seed" not in cfg.traffic:
        cfg = replace(cfg, traffic={**cfg.traffic, "seed": args.seed})
    os.makedirs(args.out, exist_ok=True)
    try:
        res = VERBS[args.verb](cfg, args)
    except DatasetMissing as e:
        print(f"dataset missing, skipped: {e}", file=sys.stderr)
        return EXIT_DATASET
    except CapExceeded as e:
        print(f"cap exceeded: {e}", file=sys.stderr)
        return EXIT_CAP
    code = EXIT_OK
    if isinstance(res, tuple):
        res, code = res
    _write_manifest(args.out, args.verb, cfg, args.seed, res)
    return code


if __name__ == "__main__":
    sys.exit(main())
