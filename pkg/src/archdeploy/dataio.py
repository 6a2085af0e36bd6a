"""Topology loaders, path construction, gravity traffic and scenario configs."""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
from collections import deque
from xml.etree import ElementTree
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional

import networkx as nx
import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import DatasetMissing, EmptyGraph, ParseError, Unreachable
from .model import Flow, Network, RevenueModel

DATA_ENV = "ARCHDEPLOY_DATA"


# ---- topology --------------------------------------------------------------


def _parse_int(tok, lineno):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"not an integer id: {tok!r}", lineno) from None


def parse_topology(lines, format: str = "edgelist") -> Network:
    edges = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if format == "caida":
            parts = line.split("|")
            if len(parts) < 3:
                raise ParseError("expected '<asn>|<asn>|<rel>'", lineno)
            a, b = _parse_int(parts[0], lineno), _parse_int(parts[1], lineno)
            _parse_int(parts[2], lineno)
        elif format == "edgelist":
            parts = line.split()
            if len(parts) < 2:
                raise ParseError("expected '<id> <id>'", lineno)
            a, b = _parse_int(parts[0], lineno), _parse_int(parts[1], lineno)
        else:
            raise ValueError(f"unknown topology format {format!r}")
        if a == b:
            raise ParseError(f"self-loop on {a}", lineno)
        edges.append((a, b))
    if not edges:
        raise EmptyGraph("topology has no edges")
    return Network(edges=edges)


def load_topology(path, format: str = "edgelist") -> Network:
    """Read an edge list (``a b`` per line) or a CAIDA AS-relationship file (``a|b|rel``)."""
    with open(path, encoding="utf-8") as fh:
        return parse_topology(fh, format)


def _totem_ids(names):
    """Integer ids when every name is an integer, else 1-based order of appearance."""
    try:
        return {n: int(n) for n in names}
    except ValueError:
        return {n: k for k, n in enumerate(names, 1)}


def load_totem_topology(path):
    """(Network, name -> id) from a TOTEM XML topology (``<link><from node=/><to node=/>``)."""
    root = ElementTree.parse(path).getroot()
    names = [n.get("id") for n in root.iter("node")]
    ends = []
    for link in root.iter("link"):
        a, b = link.find("from"), link.find("to")
        if a is None or b is None:
            raise ParseError(f"link {link.get('id')!r} lacks from/to", None)
        ends.append((a.get("node"), b.get("node")))
    for a, b in ends:
        for n in (a, b):
            if n not in names:
                names.append(n)
    ids = _totem_ids(names)
    edges = {tuple(sorted((ids[a], ids[b]))) for a, b in ends if a != b}
    if not edges:
        raise EmptyGraph(f"{path}: no links")
    return Network(ids.values(), edges), ids


def load_totem_traffic(path, ids=None) -> TrafficMatrix:
    """Sum of TOTEM XML traffic matrices (``<src id=><dst id=>volume``); ``path`` may be a directory."""
    files = [path]
    if os.path.isdir(path):
        files = sorted(os.path.join(path, f) for f in os.listdir(path) if f.endswith(".xml"))
    vols = {}
    for fp in files:
        for src in ElementTree.parse(fp).getroot().iter("src"):
            for dst in src.iter("dst"):
                a, b = src.get("id"), dst.get("id")
                try:
                    key = (ids[a], ids[b]) if ids else (int(a), int(b))
                    v = float(dst.text)
                except (KeyError, TypeError, ValueError):
                    raise ParseError(f"{fp}: bad entry {a!r} -> {b!r}", None) from None
                vols[key] = vols.get(key, 0.0) + v
    return TrafficMatrix(vols)


def save_topology(network: Network, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# undirected edge list\n")
        for a, b in sorted(network.edges):
            fh.write(f"{a} {b}\n")


def to_graph(network: Network) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(network.nodes)
    g.add_edges_from(network.edges)
    return g


def largest_component(network: Network) -> Network:
    """Induced subgraph on the largest connected component (ties: smallest minimum id)."""
    g = to_graph(network)
    comps = list(nx.connected_components(g))
    if not comps:
        return network
    best = max(comps, key=lambda c: (len(c), -min(c)))
    sub = g.subgraph(best)
    return Network(best, sub.edges())


# ---- traffic ---------------------------------------------------------------


@dataclass
class TrafficMatrix:
    """Sparse map (src, dst) -> volume."""

    volumes: dict

    def pairs(self):
        return sorted((k for k, v in self.volumes.items() if v > 0 and k[0] != k[1]))

    def total(self) -> float:
        return math.fsum(v for (i, j), v in self.volumes.items() if i != j)


def load_traffic(path) -> TrafficMatrix:
    vols = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, 1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0].strip() == "src":
                continue
            try:
                i, j, v = int(row[0]), int(row[1]), float(row[2])
            except (ValueError, IndexError):
                raise ParseError("expected 'src,dst,volume'", lineno) from None
            if not math.isfinite(v) or v < 0:
                raise ParseError("volume must be finite and >= 0", lineno)
            vols[(i, j)] = vols.get((i, j), 0.0) + v
    return TrafficMatrix(vols)


def save_traffic(tm: TrafficMatrix, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["src", "dst", "volume"])
        for (i, j), v in sorted(tm.volumes.items()):
            w.writerow([i, j, repr(v)])


def gravity_arrays(I: int, seed: int, flow_fraction: float = 1.0, mean: float = 1.0):
    """(src, dst, volume) index arrays of a gravity matrix on nodes 0..I-1.

    T_out and T_in are i.i.d. exponential; ceil(fraction * I (I-1)) ordered
    pairs are drawn without replacement and get volume T_out(i) T_in(j).
    """
    if not 0 < flow_fraction <= 1:
        raise ValueError("flow_fraction must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    t_out = rng.exponential(mean, size=I)
    t_in = rng.exponential(mean, size=I)
    total = I * (I - 1)
    k = math.ceil(flow_fraction * total)
    picks = np.sort(rng.choice(total, size=k, replace=False))
    a, b = np.divmod(picks, I - 1)
    b = b + (b >= a)
    return a, b, t_out[a] * t_in[b]


def gravity_traffic(network: Network, seed: int, flow_fraction: float = 1.0, mean: float = 1.0) -> TrafficMatrix:
    """Gravity-model matrix over a random subset of ordered node pairs."""
    nodes = sorted(network.nodes)
    a, b, vol = gravity_arrays(len(nodes), seed, flow_fraction, mean)
    return TrafficMatrix({(nodes[i], nodes[j]): float(v) for i, j, v in zip(a, b, vol)})


def path_lengths(network: Network, src, dst, batch: int = 256) -> np.ndarray:
    """Shortest-path node counts for index pairs into sorted(network.nodes).

    Only hop counts are computed (batched BFS), so this scales to AS-level
    graphs where materializing every flow would not.
    """
    nodes = sorted(network.nodes)
    idx = {n: k for k, n in enumerate(nodes)}
    rows = [idx[a] for a, b in network.edges]
    cols = [idx[b] for a, b in network.edges]
    adj = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(nodes),) * 2).tocsr()
    src, dst = np.asarray(src), np.asarray(dst)
    order = np.argsort(src, kind="stable")
    out = np.empty(len(src))
    uniq = np.unique(src)
    for start in range(0, len(uniq), batch):
        chunk = uniq[start:start + batch]
        dist = csgraph.shortest_path(adj, directed=False, unweighted=True, indices=chunk)
        lo = np.searchsorted(src[order], chunk[0], side="left")
        hi = np.searchsorted(src[order], chunk[-1], side="right")
        sel = order[lo:hi]
        out[sel] = dist[np.searchsorted(chunk, src[sel]), dst[sel]]
    if np.any(~np.isfinite(out)):
        k = int(np.flatnonzero(~np.isfinite(out))[0])
        raise Unreachable(nodes[src[k]], nodes[dst[k]])
    return out + 1.0


# ---- paths -----------------------------------------------------------------


def _bfs_dist(adj, dst):
    dist = {dst: 0}
    dq = deque([dst])
    while dq:
        u = dq.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                dq.append(v)
    return dist


def _lex_shortest(adj, dist, src):
    path = [src]
    u = src
    while dist[u] > 0:
        u = min(v for v in adj[u] if dist.get(v, math.inf) == dist[u] - 1)
        path.append(u)
    return tuple(path)


def k_shortest(graph: nx.Graph, src, dst, k: int) -> list:
    """Up to k simple paths ordered by (hop count, node sequence)."""
    out = []
    gen = nx.shortest_simple_paths(graph, src, dst)
    cutoff = None
    for p in gen:
        if cutoff is not None and len(p) > cutoff:
            break
        out.append(tuple(p))
        if len(out) >= k and cutoff is None:
            cutoff = len(out[k - 1])
    out.sort(key=lambda p: (len(p), p))
    return out[:k]


def build_flows(network: Network, traffic: TrafficMatrix, k: int = 1, shares=None) -> list:
    """One flow per positive-volume pair with hop-count shortest path(s).

    Weights are volumes normalized to sum 1; every ISP on a path is critical.
    ``shares`` optionally maps (src, dst) to baseline revenue shares.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    adj = {n: sorted(v) for n, v in network.adjacency().items()}
    pairs = traffic.pairs()
    total = math.fsum(traffic.volumes[p] for p in pairs)
    graph = to_graph(network) if k > 1 else None
    cache = {}
    flows = []
    for src, dst in pairs:
        if src not in adj or dst not in adj:
            raise Unreachable(src, dst)
        if k == 1:
            if dst not in cache:
                cache[dst] = _bfs_dist(adj, dst)
            dist = cache[dst]
            if src not in dist:
                raise Unreachable(src, dst)
            paths = [_lex_shortest(adj, dist, src)]
        else:
            try:
                paths = k_shortest(graph, src, dst, k)
            except nx.NetworkXNoPath:
                raise Unreachable(src, dst) from None
        sh = (shares or {}).get((src, dst), {})
        flows.append(Flow.full_path((src, dst), traffic.volumes[(src, dst)] / total, paths, sh))
    return flows


def assign_costs(flows, C: float = 1.0, nodes=None) -> dict:
    """c_i = C times the traffic weight crossing i on default paths."""
    if C < 0:
        raise ValueError("C must be >= 0")
    acc = {i: [] for i in (nodes or ())}
    for f in flows:
        for i in f.paths[0]:
            acc.setdefault(i, []).append(f.weight)
    return {i: C * math.fsum(w) for i, w in sorted(acc.items())}


# ---- synthetic topology ----------------------------------------------------


def geant_like(seed: int = 0) -> Network:
    """A 23-node backbone-like graph: a ring with random chords (synthetic stand-in)."""
    rng = np.random.default_rng(seed)
    n = 23
    edges = {(i, (i + 1) % n) for i in range(n)}
    while len(edges) < 37:
        a, b = (int(x) for x in rng.choice(n, size=2, replace=False))
        if (b, a) not in edges:
            edges.add((a, b))
    return Network(range(n), edges)


# ---- scenario config -------------------------------------------------------


@dataclass
class ScenarioConfig:
    """Everything needed to rebuild a game.  Serialized as JSON.

    topology: {"source": "geant-like" | "file" | "inline", "path": ...,
               "format": "edgelist" | "caida" | "totem",
               "seed": int, "largest_component": bool}
    traffic: {"source": "gravity" | "file" | "uniform" | "inline", "path": ...,
              "format": "csv" | "totem", "seed": int,
              "mean": float, "flow_fraction": float, "entries": [[src, dst, volume], ...]}
    flows: optional explicit list of {"id", "weight", "paths", "critical"?, "shares"?};
           replaces traffic and path construction.  Without a topology
           source the network is the union of the flows' path links;
           otherwise the topology defaults to the geant-like generator
    costs: optional explicit {isp: cost}; replaces the traffic-proportional rule
    """

    topology: dict = field(default_factory=dict)
    traffic: dict = field(default_factory=lambda: {"source": "gravity", "seed": 0, "flow_fraction": 1.0})
    k_paths: int = 1
    unit_cost: float = 1.0
    unit_price: float = 10.0
    alpha: Optional[float] = None      # None means infinity
    sigma: float = 0.0
    flatten: Optional[int] = None
    grid: dict = field(default_factory=dict)
    logit: dict = field(default_factory=dict)
    mechanism: dict = field(default_factory=dict)
    replicas: int = 1
    flows: Optional[list] = None
    costs: Optional[dict] = None

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioConfig":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(d) - known
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        cfg = cls(**d)
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def check(self):
        ff = self.traffic.get("flow_fraction", 1.0)
        if not 0 < ff <= 1:
            raise ValueError("flow_fraction must lie in (0, 1]")
        if self.k_paths < 1:
            raise ValueError("k_paths must be >= 1")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")

    def model(self, unit_price=None, alpha=None) -> RevenueModel:
        p = self.unit_price if unit_price is None else unit_price
        a = self.alpha if alpha is None else alpha
        return RevenueModel(p, math.inf if a is None else float(a), self.sigma)


def _data_path(p):
    if os.path.isabs(p):
        return p
    root = os.environ.get(DATA_ENV)
    if root is None:
        raise DatasetMissing(f"relative dataset path {p!r} needs ${DATA_ENV}")
    return os.path.join(root, p)


def scenario_network(cfg: ScenarioConfig) -> Network:
    t = cfg.topology
    src = t.get("source", "geant-like")
    if src == "geant-like":
        net = geant_like(t.get("seed", 0))
    elif src == "file":
        path = _data_path(t["path"])
        if not os.path.exists(path):
            raise DatasetMissing(f"topology file {path} not found")
        if t.get("format") == "totem":
            net, _ = load_totem_topology(path)
        else:
            net = load_topology(path, t.get("format", "edgelist"))
    elif src == "inline":
        net = Network(t.get("nodes", ()), [tuple(e) for e in t["edges"]])
    else:
        raise ValueError(f"unknown topology source {src!r}")
    if t.get("largest_component", src == "file"):
        net = largest_component(net)
    return net


def scenario_traffic(cfg: ScenarioConfig, network: Network) -> TrafficMatrix:
    t = cfg.traffic
    src = t.get("source", "gravity")
    if src == "gravity":
        return gravity_traffic(network, t.get("seed", 0), t.get("flow_fraction", 1.0), t.get("mean", 1.0))
    if src == "file":
        path = _data_path(t["path"])
        if not os.path.exists(path):
            raise DatasetMissing(f"traffic file {path} not found")
        if t.get("format") == "totem":
            ids = None
            topo = cfg.topology
            if topo.get("source") == "file" and topo.get("format") == "totem":
                _, ids = load_totem_topology(_data_path(topo["path"]))
            return load_totem_traffic(path, ids)
        return load_traffic(path)
    if src == "inline":
        return TrafficMatrix({(int(a), int(b)): float(v) for a, b, v in t["entries"]})
    if src == "uniform":
        nodes = sorted(network.nodes)
        return TrafficMatrix({(a, b): 1.0 for a, b in itertools.permutations(nodes, 2)})
    raise ValueError(f"unknown traffic source {src!r}")


def explicit_flows(spec: list) -> list:
    out = []
    for d in spec:
        paths = [tuple(int(x) for x in p) for p in d["paths"]]
        crit = d.get("critical")
        crit = [frozenset(int(x) for x in c) for c in crit] if crit is not None else [frozenset(p) for p in paths]
        shares = {int(k): float(v) for k, v in d.get("shares", {}).items()}
        out.append(Flow(d.get("id", len(out)), float(d["weight"]), paths, crit, shares))
    return out


def path_network(flows) -> Network:
    """Network made of exactly the links the flows' paths use."""
    return Network(edges=[e for f in flows for p in f.paths for e in zip(p, p[1:])])


def scenario_flows(cfg: ScenarioConfig, network: Network) -> list:
    if cfg.flows is not None:
        return explicit_flows(cfg.flows)
    return build_flows(network, scenario_traffic(cfg, network), cfg.k_paths)


def scenario_costs(cfg: ScenarioConfig, flows) -> dict:
    if cfg.costs is not None:
        return {int(k): float(v) for k, v in cfg.costs.items()}
    return assign_costs(flows, cfg.unit_cost)


def build_scenario(cfg: ScenarioConfig, unit_price=None, alpha=None, flatten_m=None):
    """(network, flows, model, costs) for a config, with optional overrides."""
    from .metrics import flatten

    if cfg.flows is not None and cfg.topology.get("source") is None:
        flows = explicit_flows(cfg.flows)
        net = path_network(flows)
    else:
        net = scenario_network(cfg)
        flows = scenario_flows(cfg, net)
    m = cfg.flatten if flatten_m is None else flatten_m
    if m is not None:
        flows = flatten(flows, m)
    costs = scenario_costs(cfg, flows)
    return net, flows, cfg.model(unit_price, alpha), costs
