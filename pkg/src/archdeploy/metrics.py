"""Deployability metrics: coordination ratio, deployment price, traffic
thresholds for revenue loss, path flattening and device-level deployment.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import CostMismatch, DegenerateBenefit, InvalidM, PreconditionViolated
from .game import DeploymentGame, deployability, potential
from .model import TOL, Flow, coalition_value, flow_delta


def _require_simple(game):
    if not game.simple:
        raise PreconditionViolated("needs fixed routing and sigma = 0")


def _benefit_parts(game: DeploymentGame, model=None):
    """(v(C~), B(C~)) summed per flow."""
    model = model or game.model
    v, b = [], []
    for f in game.flows:
        c = f.critical_sets[0]
        k = len(c)
        if not k:
            continue
        v.append(model.benefit(k, k, f.weight))
        b.extend(model.benefit(m, k, f.weight) / m for m in range(1, k + 1))
    return math.fsum(v), math.fsum(b)


def gamma(game: DeploymentGame) -> float:
    """v(C~) / B(C~): a benefit-weighted harmonic mean of critical-set sizes."""
    if game.simple:
        v, b = _benefit_parts(game)
    else:
        v = coalition_value(game.flows, game.model, game.players)
        b = potential(game, game.ones) + float(game.costs.sum())
    if b <= TOL:
        raise DegenerateBenefit("total immediate benefit is zero")
    return v / b


def served_weight(flows) -> float:
    return math.fsum(f.weight for f in flows if f.critical_sets[0])


def deployment_price(game: DeploymentGame) -> float:
    """Smallest unit price at which B(C~) covers total cost."""
    _require_simple(game)
    unit = replace(game.model, unit_price=1.0)
    v, b = _benefit_parts(game, unit)
    if b <= 0:
        raise DegenerateBenefit("total immediate benefit is zero")
    g = v / b
    return g * float(game.costs.sum()) / served_weight(game.flows)


def compare_architectures(games: Mapping) -> tuple:
    """(names with the lowest deployment price, that price)."""
    if not games:
        raise ValueError("need at least one architecture")
    prices = {name: deployment_price(g) for name, g in games.items()}
    best = min(prices.values())
    winners = [name for name, p in prices.items() if p <= best + TOL * max(1.0, abs(best))]
    return winners, best


def crossover_prices(weights, lengths, C: float = 1.0) -> tuple:
    """(profitable price, deployment price) for full-path flows at alpha = inf.

    With c_i = C times the traffic through i, v(C~) = p sum w covers the
    total cost from p = C sum w L / sum w on, and B(C~) = p sum w / L does
    from p = C sum w L / sum(w / L) on.  Only weights and path node counts
    L are needed, so this works on graphs too large to build flows for.
    """
    w = np.asarray(weights, dtype=float)
    L = np.asarray(lengths, dtype=float)
    total_cost = C * math.fsum(w * L)
    return total_cost / math.fsum(w), total_cost / math.fsum(w / L)


def partial_price(p: float, flow: Flow, S, model) -> float:
    """Price charged on a partially served flow, scaled by its realized gain."""
    full = model.unit_price * flow.weight
    if full == 0:
        return 0.0
    return p * flow_delta(flow, S, model) / full


@dataclass
class TrafficThreshold:
    avg_critical: float
    threshold: float
    shares: dict
    satisfied: dict

    @property
    def all_satisfied(self) -> bool:
        return all(self.satisfied.values())


def theorem4_threshold(game_or_flows) -> TrafficThreshold:
    """Per-ISP traffic share against the share bound under which revenue loss cannot hurt."""
    flows = game_or_flows.flows if isinstance(game_or_flows, DeploymentGame) else game_or_flows
    num = math.fsum(f.weight * len(f.critical_sets[0]) ** 2 for f in flows)
    den = math.fsum(f.weight * len(f.critical_sets[0]) for f in flows)
    nbar = num / den if den > 0 else 0.0
    thr = math.fsum(
        f.weight * len(f.critical_sets[0]) / (len(f.critical_sets[0]) + nbar + 1) for f in flows
    )
    shares = {}
    for f in flows:
        for i in f.paths[0]:
            shares.setdefault(i, []).append(f.weight)
    shares = {i: math.fsum(w) for i, w in sorted(shares.items())}
    sat = {i: s <= thr + TOL for i, s in shares.items()}
    return TrafficThreshold(nbar, thr, shares, sat)


def flatten_path(p: Sequence, M: int) -> tuple:
    p = tuple(p)
    if len(p) <= M:
        return p
    keep = p[len(p) - 1 - (M - 2):-1] if M > 2 else ()
    return (p[0],) + keep + (p[-1],)


def flatten(flows: Sequence[Flow], M: int) -> list:
    """Shorten every path to at most M nodes, keeping the hops nearest the destination."""
    if M < 2:
        raise InvalidM(f"M must be >= 2, got {M}")
    out = []
    for f in flows:
        paths = []
        for p in f.paths:
            q = flatten_path(p, M)
            if q not in paths:
                paths.append(q)
        shares = {i: r for i, r in f.baseline_shares.items() if i in paths[0]}
        out.append(Flow.full_path(f.id, f.weight, paths, shares))
    return out


@dataclass
class DeployabilityReport:
    gamma: float
    total_benefit: float
    immediate_benefit: float
    total_cost: float
    deployment_price: float
    avg_critical_weighted: float
    necessary_condition: bool
    profitable: bool
    theorem4_threshold: float
    per_isp_traffic_share: dict
    cnm_substitute: str = "largest connected component"

    def to_json(self, **kw) -> str:
        d = asdict(self)
        d["per_isp_traffic_share"] = {str(k): v for k, v in self.per_isp_traffic_share.items()}
        return json.dumps(d, **kw)


def report(game: DeploymentGame) -> DeployabilityReport:
    dep = deployability(game)
    thr = theorem4_threshold(game)
    try:
        g = gamma(game)
    except DegenerateBenefit:
        g = math.inf
    try:
        pd = deployment_price(game)
    except (PreconditionViolated, DegenerateBenefit):
        pd = math.nan
    return DeployabilityReport(
        gamma=g,
        total_benefit=dep.total_benefit,
        immediate_benefit=dep.immediate_benefit,
        total_cost=dep.total_cost,
        deployment_price=pd,
        avg_critical_weighted=thr.avg_critical,
        necessary_condition=dep.immediate_benefit >= dep.total_cost - TOL,
        profitable=dep.profitable,
        theorem4_threshold=thr.threshold,
        per_isp_traffic_share=thr.shares,
    )


# ---- partial deployment ----------------------------------------------------


@dataclass
class DeviceModel:
    """Devices per ISP with costs, and which devices each flow needs at each ISP.

    ``device_costs[i][d]`` is the cost of device d of ISP i;
    ``flow_devices[(flow_id, i)]`` is D_{i,f}.
    """

    device_costs: Mapping
    flow_devices: Mapping

    def validate(self):
        seen = {}
        for i, ds in self.device_costs.items():
            for d in ds:
                if d in seen and seen[d] != i:
                    raise ValueError(f"device {d} shared by ISPs {seen[d]} and {i}")
                seen[d] = i
        used = {i: set() for i in self.device_costs}
        for (fid, i), ds in self.flow_devices.items():
            if not set(ds) <= set(self.device_costs.get(i, {})):
                raise ValueError(f"flow {fid} uses devices not owned by ISP {i}")
            used[i] |= set(ds)
        for i, ds in self.device_costs.items():
            if used[i] != set(ds):
                raise ValueError(f"ISP {i} has devices no flow uses")

    def total_cost(self) -> float:
        return math.fsum(c for ds in self.device_costs.values() for c in ds.values())


def device_potential(game: DeploymentGame, devices: DeviceModel, deployed) -> float:
    """Potential of the device-level game at a set of deployed devices.

    ISP i counts as deployed for flow f once all of D_{i,f} is deployed.
    """
    deployed = set(deployed)
    terms = []
    for f in game.flows:
        c = f.critical_sets[0]
        n = sum(1 for i in c if set(devices.flow_devices.get((f.id, i), ())) <= deployed)
        terms.extend(game.model.benefit(m, len(c), f.weight) / m for m in range(1, n + 1))
    for ds in devices.device_costs.values():
        terms.extend(-c for d, c in ds.items() if d in deployed)
    return math.fsum(terms)


@dataclass
class PartialDeployment:
    equivalent: bool
    binary_deployable: bool
    device_deployable: bool
    binary_margin: float
    device_margin: float


def partial_deployment_equivalent(game: DeploymentGame, devices: DeviceModel, tol: float = TOL) -> PartialDeployment:
    """Compare the ISP-level and device-level deployability conditions."""
    _require_simple(game)
    devices.validate()
    if abs(devices.total_cost() - float(game.costs.sum())) > tol:
        raise CostMismatch(
            f"device costs {devices.total_cost()} != ISP costs {float(game.costs.sum())}"
        )
    binary = potential(game, game.ones)
    all_devs = [d for ds in devices.device_costs.values() for d in ds]
    dev = device_potential(game, devices, all_devs)
    b_ok, d_ok = binary >= -tol, dev >= -tol
    return PartialDeployment(b_ok == d_ok, b_ok, d_ok, binary, dev)
