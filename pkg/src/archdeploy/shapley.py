"""Shapley allocations of the coalition values.

``shapley_exact`` is the subset-weight oracle.  The other functions are
closed forms valid under stated restrictions of the revenue model.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .errors import CapExceeded, PreconditionViolated
from .model import (
    RevenueModel,
    _fs,
    deployer_losses,
    flow_delta,
    n_deployed,
    tilde_value,
)

EXACT_CAP = 15
PATH_CAP = 20


def _popcount(masks: np.ndarray) -> np.ndarray:
    return np.bitwise_count(masks.astype(np.uint64)).astype(np.int64)


def subset_table(players, value_fn) -> np.ndarray:
    """value_fn evaluated on every subset of ``players``, indexed by bitmask."""
    n = len(players)
    table = np.empty(1 << n)
    for m in range(1 << n):
        table[m] = value_fn(frozenset(players[k] for k in range(n) if m >> k & 1))
    return table


def shapley_from_table(table: np.ndarray, n: int) -> np.ndarray:
    """Shapley values of the grand coalition of a table game."""
    if n == 0:
        return np.zeros(0)
    masks = np.arange(1 << n)
    sizes = _popcount(masks)
    k = np.arange(n)
    w = np.array([math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n) for s in k])
    phi = np.empty(n)
    for i in range(n):
        bit = 1 << i
        rest = masks[(masks & bit) == 0]
        phi[i] = math.fsum(w[sizes[rest]] * (table[rest | bit] - table[rest]))
    return phi


def shapley_exact(S, value_fn, cap: int = EXACT_CAP) -> dict:
    """Exact Shapley values of ``value_fn`` restricted to the players in S."""
    players = sorted(_fs(S))
    if len(players) > cap:
        raise CapExceeded(f"{len(players)} players exceeds exact cap {cap}")
    table = subset_table(players, value_fn)
    phi = shapley_from_table(table, len(players))
    return {i: float(x) for i, x in zip(players, phi)}


def _require_simple(flows, model):
    if model.sigma != 0:
        raise PreconditionViolated("closed form requires sigma = 0")
    if any(not f.fixed_routing for f in flows):
        raise PreconditionViolated("closed form requires fixed routing")


def shapley_closed_form(S, flows, model: RevenueModel) -> dict:
    """Each flow's gain split evenly among its deployed critical ISPs."""
    _require_simple(flows, model)
    S = _fs(S)
    terms = {i: [] for i in S}
    for f in flows:
        n = n_deployed(f, S)
        if n == 0:
            continue
        share = flow_delta(f, S, model) / n
        for i in f.critical_sets[0] & S:
            terms[i].append(share)
    return {i: math.fsum(t) for i, t in sorted(terms.items())}


def _path_unions(flow):
    """(sign, union) for every nonempty subset of the native-capable paths."""
    crit = [c for c in flow.critical_sets if c]
    if len(crit) > PATH_CAP:
        raise CapExceeded(f"flow {flow.id} has {len(crit)} paths (cap {PATH_CAP})")
    out = []
    for r in range(1, len(crit) + 1):
        sign = 1.0 if r % 2 else -1.0
        for combo in combinations(crit, r):
            out.append((sign, frozenset().union(*combo)))
    return out


def _gain_value(flow, model, S) -> float:
    """v_g for one flow: full gain once any native path is fully deployed."""
    S = _fs(S)
    if any(c and c <= S for c in flow.critical_sets):
        return model.unit_price * flow.weight
    return 0.0


def shapley_routing(S, flows, model: RevenueModel, cap: int = EXACT_CAP) -> dict:
    """Shapley values of v~ under routing change, via unanimity decomposition.

    The gain part is summed over path subsets; the baseline-share part is
    computed exactly per flow on the flow's own critical ISPs.
    """
    if model.sigma != 0 or model.incremental:
        raise PreconditionViolated("routing form requires sigma = 0 and alpha = inf")
    S = _fs(S)
    terms = {i: [] for i in S}
    for f in flows:
        full = model.unit_price * f.weight
        for sign, union in _path_unions(f):
            if union <= S:
                share = sign * full / len(union)
                for i in union:
                    terms[i].append(share)
        if len(f.paths) > 1 and any(r > 0 for r in f.baseline_shares.values()):
            local = S & frozenset().union(*f.critical_sets)
            if not local:
                continue
            one = [f]

            def v_l(T, one=one, f=f):
                return tilde_value(one, model, T) - _gain_value(f, model, T)

            for i, x in shapley_exact(local, v_l, cap).items():
                terms[i].append(x)
    return {i: math.fsum(t) for i, t in sorted(terms.items())}


def gain_potential(flows, model: RevenueModel, S) -> float:
    """Potential of the gain part v_g, from the same unanimity decomposition."""
    S = _fs(S)
    out = []
    for f in flows:
        full = model.unit_price * f.weight
        for sign, union in _path_unions(f):
            if union <= S:
                out.append(sign * full / len(union))
    return math.fsum(out)


def shapley_revenue_loss(S, flows, model: RevenueModel) -> dict:
    """Supplement closed form for v~ with old-flow revenue loss.

    Valid for fixed routing with alpha = inf.
    """
    if model.incremental or any(not f.fixed_routing for f in flows):
        raise PreconditionViolated("revenue-loss form requires fixed routing, alpha = inf")
    S = _fs(S)
    sig = model.sigma
    new = [f for f in flows if f.critical_sets[0] and f.critical_sets[0] <= S]
    out = {}
    for i in sorted(S):
        t = []
        for f in new:
            if i in f.critical_sets[0]:
                t.append(flow_delta(f, S, model) / len(f.critical_sets[0]))
        for f in flows:
            for h in new:
                ch = h.critical_sets[0]
                if i not in ch:
                    continue
                for j in f.paths[0]:
                    if j in S and j in ch:
                        t.append(-sig * f.weight * h.weight / len(ch | {j}))
        for f in new:
            for h in new:
                u = h.critical_sets[0] | f.critical_sets[0]
                if i not in u:
                    continue
                for j in f.paths[0]:
                    if j in S and j in u:
                        t.append(sig * f.weight * h.weight / len(u))
        out[i] = math.fsum(t)
    return out


def tilde_shapley(S, flows, model: RevenueModel, cap: int = EXACT_CAP) -> dict:
    """phi_i(S, v~) by the cheapest valid formula."""
    if model.sigma == 0 and all(f.fixed_routing for f in flows):
        return shapley_closed_form(S, flows, model)
    if model.sigma == 0 and not model.incremental:
        return shapley_routing(S, flows, model, cap)
    if not model.incremental and all(f.fixed_routing for f in flows):
        return shapley_revenue_loss(S, flows, model)
    return shapley_exact(S, lambda T: tilde_value(flows, model, T), cap)


def distribution_mechanism(S, flows, model: RevenueModel, cap: int = EXACT_CAP) -> dict:
    """Net revenue share of each deployer: Shapley of v~ plus its counterfactual loss."""
    phi = tilde_shapley(S, flows, model, cap)
    loss = deployer_losses(flows, model, S)
    return {i: phi[i] + loss[i] for i in phi}
