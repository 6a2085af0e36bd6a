"""Network, flows and the revenue model.

A coalition ``S`` is any iterable of node ids; functions convert it to a
frozenset.  Money is a plain float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

INF = math.inf
TOL = 1e-9


@dataclass(frozen=True)
class Network:
    """Undirected ISP graph.  Edges are stored as sorted pairs."""

    nodes: frozenset
    edges: frozenset

    def __init__(self, nodes: Iterable[int] = (), edges: Iterable[tuple] = ()):
        es = set()
        ns = set(nodes)
        for a, b in edges:
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            es.add((a, b) if a < b else (b, a))
            ns.add(a)
            ns.add(b)
        object.__setattr__(self, "nodes", frozenset(ns))
        object.__setattr__(self, "edges", frozenset(es))

    def has_edge(self, a, b) -> bool:
        return ((a, b) if a < b else (b, a)) in self.edges

    def adjacency(self) -> dict:
        adj = {n: set() for n in self.nodes}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj


@dataclass(frozen=True, eq=False)
class Flow:
    """A traffic aggregate with prioritized alternative paths.

    ``paths[0]`` is the default path p_f.  ``critical_sets[k]`` is C(paths[k]).
    ``baseline_shares`` maps a node on p_f to its revenue r_{i,f} under the
    old architecture.
    """

    id: object
    weight: float
    paths: tuple
    critical_sets: tuple
    baseline_shares: Mapping = field(default_factory=dict)

    def __post_init__(self):
        paths = tuple(tuple(p) for p in self.paths)
        crit = tuple(frozenset(c) for c in self.critical_sets)
        if not paths:
            raise ValueError(f"flow {self.id}: no paths")
        if len(crit) != len(paths):
            raise ValueError(f"flow {self.id}: one critical set per path required")
        src, dst = paths[0][0], paths[0][-1]
        for p, c in zip(paths, crit):
            if len(set(p)) != len(p):
                raise ValueError(f"flow {self.id}: path {p} is not simple")
            if p[0] != src or p[-1] != dst:
                raise ValueError(f"flow {self.id}: endpoints differ across paths")
            if not c <= set(p):
                raise ValueError(f"flow {self.id}: critical set not on path {p}")
        for i, r in dict(self.baseline_shares).items():
            if r < 0:
                raise ValueError(f"flow {self.id}: negative share for {i}")
            if r > 0 and i not in paths[0]:
                raise ValueError(f"flow {self.id}: share for {i} off the default path")
        if not self.weight > 0:
            raise ValueError(f"flow {self.id}: weight must be positive")
        object.__setattr__(self, "paths", paths)
        object.__setattr__(self, "critical_sets", crit)
        object.__setattr__(self, "baseline_shares", dict(self.baseline_shares))

    @classmethod
    def full_path(cls, id, weight, paths, shares=None):
        """Flow where every ISP on every path is critical."""
        paths = [tuple(p) for p in paths]
        return cls(id, weight, paths, [frozenset(p) for p in paths], shares or {})

    @property
    def default_path(self) -> tuple:
        return self.paths[0]

    @property
    def fixed_routing(self) -> bool:
        return len(self.paths) == 1

    def share(self, i) -> float:
        return self.baseline_shares.get(i, 0.0)


@dataclass(frozen=True)
class RevenueModel:
    """Revenue parameters: unit price p, incremental exponent alpha, loss scale sigma."""

    unit_price: float = 1.0
    alpha: float = INF
    sigma: float = 0.0

    def __post_init__(self):
        if self.unit_price < 0 or not math.isfinite(self.unit_price):
            raise ValueError("unit_price must be finite and >= 0")
        if not self.alpha >= 1:
            raise ValueError("alpha must lie in [1, inf]")
        if self.sigma < 0 or not math.isfinite(self.sigma):
            raise ValueError("sigma must be finite and >= 0")

    @property
    def incremental(self) -> bool:
        return math.isfinite(self.alpha)

    def benefit(self, n: int, k: int, weight: float) -> float:
        """Delta~_f(n) for a new flow with k critical ISPs, n of them deployed."""
        if n <= 0 or k <= 0:
            return 0.0
        full = self.unit_price * weight
        if n >= k:
            return full
        if not self.incremental:
            return 0.0
        return (n / k) ** self.alpha * full


def _fs(S) -> frozenset:
    return S if isinstance(S, frozenset) else frozenset(S)


def check_weights(flows: Sequence[Flow], tol: float = TOL) -> bool:
    return abs(math.fsum(f.weight for f in flows) - 1.0) <= tol


def validate_flows(network: Network, flows: Sequence[Flow]) -> list:
    """Return a list of (code, detail) problems; empty when valid."""
    problems = []
    if not check_weights(flows):
        problems.append(("WEIGHT_SUM", math.fsum(f.weight for f in flows)))
    for f in flows:
        for p in f.paths:
            for a, b in zip(p, p[1:]):
                if not network.has_edge(a, b):
                    problems.append(("BAD_EDGE", (f.id, a, b)))
    return problems


def critical_isps(flows: Iterable[Flow], all_paths: bool = False) -> frozenset:
    """Union of C(p_f); with ``all_paths`` also the alternatives' critical sets."""
    out = set()
    for f in flows:
        sets = f.critical_sets if all_paths else f.critical_sets[:1]
        for c in sets:
            out |= c
    return frozenset(out)


def routed_index(flow: Flow, S) -> int:
    """Index of the path the flow uses under deployment S."""
    S = _fs(S)
    for k, c in enumerate(flow.critical_sets):
        # An empty critical set never makes a path "native".
        if c and c <= S:
            return k
    return 0


def routed_path(flow: Flow, S) -> tuple:
    return flow.paths[routed_index(flow, S)]


def bypassed(flow: Flow, isp, S) -> bool:
    return isp in flow.paths[0] and isp not in routed_path(flow, S)


def n_deployed(flow: Flow, S) -> int:
    """n_f(S): deployed critical ISPs on the routed path."""
    S = _fs(S)
    return len(flow.critical_sets[routed_index(flow, S)] & S)


def flow_uses_new(flow: Flow, S, model: RevenueModel) -> bool:
    S = _fs(S)
    c = flow.critical_sets[routed_index(flow, S)]
    if not c:
        return False
    if c <= S:
        return True
    return model.incremental and len(c & S) >= 1


def new_weight(flows: Iterable[Flow], S, model: RevenueModel) -> float:
    """Total weight of flows served by the new architecture."""
    S = _fs(S)
    return math.fsum(f.weight for f in flows if flow_uses_new(f, S, model))


def flow_delta(flow: Flow, S, model: RevenueModel, new_w: float = 0.0) -> float:
    """Delta_f(S).  ``new_w`` is the new-flow weight, needed only when sigma > 0."""
    S = _fs(S)
    k = routed_index(flow, S)
    c = flow.critical_sets[k]
    if flow_uses_new(flow, S, model):
        return model.benefit(len(c & S), len(c), flow.weight)
    if model.sigma == 0:
        return 0.0
    return -model.sigma * len(flow.paths[0]) * flow.weight * new_w


def isp_delta(flow: Flow, isp, S, model: RevenueModel, new_w: float = 0.0) -> float:
    """delta_{i,f}(S) for a non-deployer ``isp``."""
    S = _fs(S)
    if isp not in flow.paths[0]:
        return 0.0
    if bypassed(flow, isp, S):
        return -flow.share(isp)
    if model.sigma > 0 and not flow_uses_new(flow, S, model):
        return -model.sigma * flow.weight * new_w
    return 0.0


def _loss_weight(flows, S, model):
    return new_weight(flows, S, model) if model.sigma > 0 else 0.0


def coalition_value(flows: Sequence[Flow], model: RevenueModel, S) -> float:
    """v(S): flow gains minus the revenue changes of non-deployers."""
    S = _fs(S)
    w = _loss_weight(flows, S, model)
    terms = []
    for f in flows:
        terms.append(flow_delta(f, S, model, w))
        for i in f.paths[0]:
            if i not in S:
                terms.append(-isp_delta(f, i, S, model, w))
    return math.fsum(terms)


def deployer_losses(flows: Sequence[Flow], model: RevenueModel, S) -> dict:
    """Map i in S to sum_f delta_{i,f}(S minus i): what i would suffer by not deploying."""
    S = _fs(S)
    out = {}
    for i in S:
        rest = S - {i}
        w = _loss_weight(flows, rest, model)
        out[i] = math.fsum(isp_delta(f, i, rest, model, w) for f in flows)
    return out


def tilde_value(flows: Sequence[Flow], model: RevenueModel, S) -> float:
    """v~(S) = v(S) minus each deployer's counterfactual loss."""
    S = _fs(S)
    losses = deployer_losses(flows, model, S)
    return coalition_value(flows, model, S) - math.fsum(losses.values())


def is_simple(flows: Sequence[Flow], model: RevenueModel) -> bool:
    """True when routing is fixed and sigma is 0, so v~ = v and closed forms apply."""
    return model.sigma == 0 and all(f.fixed_routing for f in flows)
