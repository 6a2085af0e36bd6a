"""Random and hand-built instances shared by the tests."""

import math
import random

import networkx as nx

from archdeploy.dataio import k_shortest
from archdeploy.game import DeploymentGame
from archdeploy.metrics import DeviceModel
from archdeploy.model import (
    Flow,
    Network,
    RevenueModel,
    deployer_losses,
    isp_delta,
    new_weight,
    tilde_value,
)
from archdeploy.shapley import shapley_exact

INF = math.inf


def fig1(price=12.0, cost=3.0):
    f = Flow.full_path(1, 1.0, [(1, 2, 3)], {1: 7.0, 2: 6.0, 3: 7.0})
    return DeploymentGame([f], RevenueModel(price), {1: cost, 2: cost, 3: cost})


def fig2_network():
    return Network(edges=[(1, 2), (2, 3), (1, 4), (3, 5), (4, 5), (5, 6)])


def fig2_flows():
    f1 = Flow.full_path(1, 0.5, [(1, 2, 3), (1, 4, 5, 3)], {1: 7.0, 2: 6.0, 3: 7.0})
    f2 = Flow.full_path(2, 0.5, [(6, 5)])
    return [f1, f2]


def fig3_flows():
    """Star around ISP 2; one flow each way between every pair of 1, 3, 4."""
    flows = []
    for a, b in [(1, 3), (1, 4), (3, 4)]:
        flows.append(Flow.full_path(len(flows), 1 / 6, [(a, 2, b)]))
        flows.append(Flow.full_path(len(flows), 1 / 6, [(b, 2, a)]))
    return flows


def fig3(cost=3.0):
    # each flow is worth 3: p * (1/6) = 3
    return DeploymentGame(fig3_flows(), RevenueModel(18.0), {i: cost for i in (1, 2, 3, 4)})


def fig6_flow(shares=None):
    return Flow(0, 1.0, [(1, 2, 5), (1, 3, 4, 5)], [{1, 2, 5}, {1, 3, 4, 5}], shares or {})


def line_game(I, cost=None, value=1.0):
    f = Flow.full_path(0, 1.0, [tuple(range(I))])
    c = 1.0 / I if cost is None else cost
    return DeploymentGame([f], RevenueModel(value), {i: c for i in range(I)})


def random_graph(rng, n, extra=None):
    nodes = list(range(n))
    rng.shuffle(nodes)
    edges = set()
    for k in range(1, n):
        a, b = nodes[k], nodes[rng.randrange(k)]
        edges.add((min(a, b), max(a, b)))
    extra = rng.randint(0, n) if extra is None else extra
    for _ in range(extra):
        a, b = rng.sample(range(n), 2)
        edges.add((min(a, b), max(a, b)))
    return Network(range(n), edges)


def random_flows(rng, net, n_flows, k_paths=1, partial=False, shares=False, min_len=2):
    g = nx.Graph(list(net.edges))
    nodes = sorted(net.nodes)
    ws = [rng.random() + 0.05 for _ in range(n_flows)]
    tot = sum(ws)
    flows = []
    for fid in range(n_flows):
        while True:
            s, d = rng.sample(nodes, 2)
            paths = k_shortest(g, s, d, k_paths)
            if len(paths[0]) >= min_len:
                break
        crit = []
        for p in paths:
            if partial:
                crit.append(frozenset(rng.sample(p, rng.randint(1, len(p)))))
            else:
                crit.append(frozenset(p))
        sh = {}
        if shares:
            sh = {i: round(rng.uniform(0, 2), 3) for i in paths[0]}
        flows.append(Flow(fid, ws[fid] / tot, paths, crit, sh))
    return flows


def random_costs(rng, players, scale=1.0):
    return {i: rng.uniform(0, scale) for i in players}


def random_game(
    seed,
    n_nodes=6,
    n_flows=4,
    k_paths=1,
    partial=False,
    shares=False,
    alpha=INF,
    sigma=0.0,
    price=None,
    cost_scale=None,
):
    rng = random.Random(seed)
    net = random_graph(rng, n_nodes)
    flows = random_flows(rng, net, n_flows, k_paths, partial, shares)
    price = rng.uniform(1, 10) if price is None else price
    model = RevenueModel(price, alpha, sigma)
    players = sorted(set().union(*[c for f in flows for c in f.critical_sets]))
    scale = price / max(1, len(players)) * 1.5 if cost_scale is None else cost_scale
    costs = random_costs(rng, players, scale)
    return DeploymentGame(flows, model, costs, network=net)


def oracle_utility(game, a, i):
    """Utility straight from the definitions, with subset-sum Shapley."""
    S = game.deployed(a)
    flows, model = game.flows, game.model
    c = game.costs[game.index[i]]
    if i in S:
        phi = shapley_exact(S, lambda T: tilde_value(flows, model, T))[i]
        return phi + deployer_losses(flows, model, S)[i] - c
    w = new_weight(flows, S, model)
    return math.fsum(isp_delta(f, i, S, model, w) for f in flows)


def random_split(game, rng):
    """Split each ISP's cost over 1-3 devices and assign devices to its flows."""
    device_costs, flow_devices = {}, {}
    for i, c in zip(game.players, game.costs):
        m = rng.randint(1, 3)
        cuts = sorted(rng.random() for _ in range(m - 1))
        parts = [b - a for a, b in zip([0.0] + cuts, cuts + [1.0])]
        names = [f"{i}.{d}" for d in range(m)]
        device_costs[i] = {d: c * x for d, x in zip(names, parts)}
        mine = [f for f in game.flows if i in f.critical_sets[0]]
        used = set()
        for f in mine:
            ds = rng.sample(names, rng.randint(1, m))
            flow_devices[(f.id, i)] = ds
            used |= set(ds)
        if mine:
            missing = set(names) - used
            flow_devices[(mine[0].id, i)] = sorted(set(flow_devices[(mine[0].id, i)]) | missing)
    return DeviceModel(device_costs, flow_devices)
