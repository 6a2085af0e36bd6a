"""The deployment game among critical ISPs.

Profiles are tuples of 0/1 in ``game.players`` order.  Two evaluation
paths exist:

* fixed routing with sigma = 0: Shapley shares come straight from the
  per-flow even split, vectorized over a flow/player incidence matrix;
* everything else: v~ is tabulated on all coalitions and Shapley shares
  are differences of the Hart/Mas-Colell potential of that table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import sparse

from .errors import CapExceeded, NonConvergence, PreconditionViolated
from .model import (
    TOL,
    Network,
    RevenueModel,
    coalition_value,
    critical_isps,
    deployer_losses,
    isp_delta,
    new_weight,
    tilde_value,
)

ENUM_CAP = 20
TABLE_CAP = 16


def _popcount(x):
    return np.bitwise_count(np.asarray(x, dtype=np.uint64)).astype(np.int64)


def mobius(table: np.ndarray, n: int) -> np.ndarray:
    """Harsanyi dividends of a set function given on all 2^n masks."""
    d = np.array(table, dtype=float)
    for b in range(n):
        v = d.reshape(-1, 2, 1 << b)
        v[:, 1, :] -= v[:, 0, :]
    return d


def zeta(table: np.ndarray, n: int) -> np.ndarray:
    """Subset sums: out[S] = sum over T subset of S of table[T]."""
    z = np.array(table, dtype=float)
    for b in range(n):
        v = z.reshape(-1, 2, 1 << b)
        v[:, 1, :] += v[:, 0, :]
    return z


def hmc_potential(table: np.ndarray, n: int) -> np.ndarray:
    """Potential P with P(S) - P(S minus i) = Shapley value of i in the subgame on S."""
    d = mobius(table, n)
    sizes = _popcount(np.arange(1 << n))
    d[1:] /= sizes[1:]
    d[0] = 0.0
    return zeta(d, n)


class DeploymentGame:
    """Binary deployment game: each critical ISP chooses deploy (1) or not (0).

    ``players`` defaults to every ISP critical on some path of some flow;
    a superset may be passed (extra players are dummies that only pay cost).
    """

    def __init__(
        self,
        flows: Sequence,
        model: RevenueModel,
        costs: Mapping,
        network: Optional[Network] = None,
        players: Optional[Sequence] = None,
        table_cap: int = TABLE_CAP,
    ):
        self.flows = tuple(flows)
        self.model = model
        self.network = network
        crit = critical_isps(self.flows, all_paths=True)
        if players is None:
            players = crit
        elif not crit <= set(players):
            raise ValueError("players must include every critical ISP")
        self.players = tuple(sorted(players))
        self.index = {p: k for k, p in enumerate(self.players)}
        self.n = len(self.players)
        self.costs = np.array([float(costs[p]) for p in self.players])
        if np.any(self.costs < 0):
            raise ValueError("costs must be nonnegative")
        self.simple = model.sigma == 0 and all(f.fixed_routing for f in self.flows)
        self.table_cap = table_cap
        self._ptable = None
        if self.simple:
            self._build_incidence()

    # ---- construction -------------------------------------------------

    def _build_incidence(self):
        rows, cols, ks, full = [], [], [], []
        kept = []
        for f in self.flows:
            c = f.critical_sets[0]
            if not c:
                continue
            r = len(kept)
            kept.append(f)
            for i in sorted(c):
                rows.append(r)
                cols.append(self.index[i])
            ks.append(len(c))
            full.append(self.model.unit_price * f.weight)
        nf = len(kept)
        self._flows_kept = kept
        self._k = np.array(ks, dtype=np.int64)
        self._M = sparse.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(nf, self.n)
        )
        csc = self._M.tocsc()
        self._pflows = [csc.indices[csc.indptr[j]:csc.indptr[j + 1]] for j in range(self.n)]
        kmax = int(self._k.max()) if nf else 0
        m = np.arange(kmax + 1)
        g = np.zeros((nf, kmax + 1))
        for r in range(nf):
            k = ks[r]
            for n in range(1, k + 1):
                g[r, n] = self.model.benefit(n, k, kept[r].weight)
        with np.errstate(divide="ignore", invalid="ignore"):
            gdiv = np.where(m > 0, g / np.maximum(m, 1), 0.0)
        self._g = g
        self._gdiv = gdiv
        self._cum = np.cumsum(gdiv, axis=1)
        self._rows = np.arange(nf)

    # ---- conversions --------------------------------------------------

    def deployed(self, a) -> frozenset:
        return frozenset(p for p, x in zip(self.players, a) if x)

    def profile(self, S) -> tuple:
        S = set(S)
        return tuple(int(p in S) for p in self.players)

    def mask(self, a) -> int:
        return sum(1 << k for k, x in enumerate(a) if x)

    def unmask(self, m: int) -> tuple:
        return tuple((m >> k) & 1 for k in range(self.n))

    @property
    def zeros(self) -> tuple:
        return (0,) * self.n

    @property
    def ones(self) -> tuple:
        return (1,) * self.n

    # ---- value tables (general path) ----------------------------------

    def potential_P(self) -> np.ndarray:
        """Hart/Mas-Colell potential of v~ on all coalitions (bitmask indexed)."""
        if self._ptable is None:
            if self.n > self.table_cap:
                raise CapExceeded(f"{self.n} players exceeds table cap {self.table_cap}")
            table = np.empty(1 << self.n)
            for m in range(1 << self.n):
                table[m] = tilde_value(self.flows, self.model, self.deployed(self.unmask(m)))
            self._ptable = hmc_potential(table, self.n)
        return self._ptable

    # ---- shares and marginals -----------------------------------------

    def counts(self, a) -> np.ndarray:
        """n_f for every kept flow (fixed-routing path only)."""
        return np.asarray(self._M @ np.asarray(a, dtype=float)).round().astype(np.int64)

    def share(self, i, a) -> float:
        """phi_i(S_a, v~) for a deployer i."""
        k = self.index[i]
        if not a[k]:
            raise ValueError(f"player {i} is not deployed in the profile")
        if self.simple:
            pf = self._pflows[k]
            n = self.counts(a)[pf]
            return math.fsum(self._gdiv[pf, n])
        P = self.potential_P()
        m = self.mask(a)
        return float(P[m] - P[m & ~(1 << k)])

    def gain(self, k: int, a, counts=None) -> float:
        """phi_k(S_{-k} + k, v~) for player index k, i.e. the marginal before cost."""
        if self.simple:
            pf = self._pflows[k]
            if counts is None:
                counts = self.counts(a)
            n = counts[pf] - int(a[k]) + 1
            return math.fsum(self._gdiv[pf, n])
        P = self.potential_P()
        m = self.mask(a) | (1 << k)
        return float(P[m] - P[m & ~(1 << k)])

    def marginal(self, i, a) -> float:
        """u_i(1, a_-i) - u_i(0, a_-i)."""
        k = self.index[i]
        return self.gain(k, a) - self.costs[k]

    def immediate_benefit(self, a) -> float:
        """Sum of shares each deployer receives at its deployment time."""
        if self.simple:
            n = self.counts(a)
            return math.fsum(self._cum[self._rows, n])
        return float(self.potential_P()[self.mask(a)])

    def potential_masks(self, masks) -> np.ndarray:
        """Phi on an array of coalition bitmasks (vectorized)."""
        masks = np.asarray(masks, dtype=np.int64)
        cost = np.zeros(len(masks))
        for k in range(self.n):
            cost += self.costs[k] * ((masks >> k) & 1)
        if not self.simple:
            return self.potential_P()[masks] - cost
        if self.n > 62:
            raise CapExceeded("bitmask evaluation limited to 62 players")
        groups = {}
        for r in range(len(self._flows_kept)):
            cols = self._M.indices[self._M.indptr[r]:self._M.indptr[r + 1]]
            gm = int(sum(1 << int(c) for c in cols))
            if gm in groups:
                groups[gm] = groups[gm] + self._cum[r]
            else:
                groups[gm] = self._cum[r].copy()
        out = -cost
        for gm, cum in groups.items():
            out = out + cum[_popcount(masks & gm)]
        return out

    def potential_table(self) -> np.ndarray:
        if self.n > ENUM_CAP:
            raise CapExceeded(f"{self.n} players exceeds enumeration cap {ENUM_CAP}")
        return self.potential_masks(np.arange(1 << self.n))


# ---- operations ---------------------------------------------------------


def utility(game: DeploymentGame, a, i) -> float:
    """Net revenue change of player i under profile a."""
    S = game.deployed(a)
    k = game.index[i]
    model, flows = game.model, game.flows
    if a[k]:
        phi = game.share(i, a)
        if game.simple:
            return phi - game.costs[k]
        loss = deployer_losses(flows, model, {i} | S)[i]
        return phi + loss - game.costs[k]
    if game.simple:
        return 0.0
    w = new_weight(flows, S, model) if model.sigma > 0 else 0.0
    return math.fsum(isp_delta(f, i, S, model, w) for f in flows)


def potential_closed_form(game: DeploymentGame, a) -> float:
    """Total immediate benefit of the deployers minus their costs."""
    if not game.simple:
        raise PreconditionViolated("closed-form potential needs fixed routing and sigma = 0")
    S = game.deployed(a)
    terms = []
    for f in game.flows:
        c = f.critical_sets[0]
        n = len(c & S)
        for m in range(1, n + 1):
            terms.append(game.model.benefit(m, len(c), f.weight) / m)
    terms.extend(-game.costs[k] for k, x in enumerate(a) if x)
    return math.fsum(terms)


def potential_general(game: DeploymentGame, a, order=None) -> float:
    """Telescoped utility differences from all-zero to a along ``order``."""
    order = game.players if order is None else order
    cur = list(game.zeros)
    total = []
    for i in order:
        k = game.index[i]
        if not a[k]:
            continue
        up = list(cur)
        up[k] = 1
        total.append(utility(game, tuple(up), i) - utility(game, tuple(cur), i))
        cur = up
    return math.fsum(total)


def is_equilibrium(game: DeploymentGame, a, strict: bool = False, tol: float = TOL) -> bool:
    counts = game.counts(a) if game.simple else None
    for k in range(game.n):
        m = game.gain(k, a, counts) - game.costs[k]
        if a[k]:
            if m < -tol or (strict and m <= tol):
                return False
        else:
            if m > tol or (strict and m >= -tol):
                return False
    return True


def best_response_from(game: DeploymentGame, start, tol: float = TOL, max_passes=None) -> tuple:
    """Round-robin best response; ties keep the current action."""
    a = np.array(start, dtype=np.int64)
    n = game.n
    if max_passes is None:
        max_passes = n * (1 << min(n, 30)) + 1
    counts = game.counts(a) if game.simple else None
    for _ in range(max_passes):
        changed = False
        for k in range(n):
            m = game.gain(k, a, counts) - game.costs[k]
            new = 1 if m > tol else 0 if m < -tol else a[k]
            if new != a[k]:
                if counts is not None:
                    pf = game._pflows[k]
                    counts[pf] += 1 if new else -1
                a[k] = new
                changed = True
        if not changed:
            return tuple(int(x) for x in a)
    raise NonConvergence("best response did not settle; game may not be supermodular")


def extremal_equilibria(game: DeploymentGame) -> tuple:
    """(smallest, largest) equilibrium by best response from all-zero and all-one."""
    return best_response_from(game, game.zeros), best_response_from(game, game.ones)


def potential(game: DeploymentGame, a) -> float:
    """Phi(a), by whichever exact route is available."""
    if game.simple:
        return game.immediate_benefit(a) - float(np.dot(game.costs, a))
    return float(game.potential_masks([game.mask(a)])[0])


def _pick(masks, values, n, tol):
    best = values.max()
    win = masks[values >= best - tol]
    join = int(np.bitwise_or.reduce(win))
    if join in set(win.tolist()):
        return join
    # lexicographic on (a_0, a_1, ...): bit 0 most significant
    def key(m):
        return tuple((m >> k) & 1 for k in range(n))
    return min(win.tolist(), key=key)


def _local_search(game, a, tol):
    a = list(a)
    counts = game.counts(a) if game.simple else None
    while True:
        best_k, best_d = None, tol
        for k in range(game.n):
            m = game.gain(k, a, counts) - game.costs[k]
            d = -m if a[k] else m
            if d > best_d:
                best_k, best_d = k, d
        if best_k is None:
            return tuple(a)
        a[best_k] ^= 1
        if counts is not None:
            counts[game._pflows[best_k]] += 1 if a[best_k] else -1


@dataclass
class EquilibriumReport:
    smallest: tuple
    largest: tuple
    robust: tuple
    heuristic: bool
    potential_values: Optional[dict] = None
    all_equilibria: Optional[list] = field(default=None)


def equilibrium_report(game: DeploymentGame, tol: float = TOL, enumerate_all: bool = False) -> EquilibriumReport:
    lo, hi = extremal_equilibria(game)
    if game.n <= ENUM_CAP:
        lo_m, hi_m = game.mask(lo), game.mask(hi)
        free = [k for k in range(game.n) if (hi_m >> k) & 1 and not (lo_m >> k) & 1]
        idx = np.arange(1 << len(free), dtype=np.int64)
        masks = np.full(len(idx), lo_m, dtype=np.int64)
        for j, k in enumerate(free):
            masks |= ((idx >> j) & 1) << k
        vals = game.potential_masks(masks)
        robust = game.unmask(_pick(masks, vals, game.n, tol))
        report = EquilibriumReport(lo, hi, robust, False)
        if enumerate_all:
            allm = np.arange(1 << game.n)
            table = game.potential_masks(allm)
            report.potential_values = {game.unmask(int(m)): float(v) for m, v in zip(allm, table)}
            report.all_equilibria = [
                game.unmask(int(m)) for m in allm if is_equilibrium(game, game.unmask(int(m)), tol=tol)
            ]
        return report
    cands = [_local_search(game, lo, tol), _local_search(game, hi, tol)]
    vals = [potential(game, c) for c in cands]
    if vals[1] >= vals[0] - tol:
        robust = cands[1]
    else:
        robust = cands[0]
    return EquilibriumReport(lo, hi, robust, True)


def robust_equilibrium(game: DeploymentGame, tol: float = TOL) -> tuple:
    """Potential maximizer (exact up to 20 players, local search beyond)."""
    return equilibrium_report(game, tol).robust


def value_table(game: DeploymentGame) -> np.ndarray:
    """v(S) on every coalition mask."""
    if game.n > game.table_cap:
        raise CapExceeded(f"{game.n} players exceeds table cap {game.table_cap}")
    return np.array(
        [coalition_value(game.flows, game.model, game.deployed(game.unmask(m))) for m in range(1 << game.n)]
    )


def is_supermodular(game: DeploymentGame, tol: float = TOL) -> bool:
    """True when v has increasing marginals: v(S+i) - v(S) <= v(T+i) - v(T) for S within T."""
    t = value_table(game)
    masks = np.arange(1 << game.n)
    for k in range(game.n):
        for j in range(k + 1, game.n):
            kb, jb = 1 << k, 1 << j
            m = masks[(masks & (kb | jb)) == 0]
            if np.any(t[m | kb | jb] - t[m | jb] - t[m | kb] + t[m] < -tol):
                return False
    return True


@dataclass
class Deployability:
    deployable: bool
    immediate_benefit: float
    total_cost: float
    phi_all: float
    phi_none: float
    total_benefit: float
    profitable: bool


def deployability(game: DeploymentGame, tol: float = TOL) -> Deployability:
    """Deployable iff Phi(all-one) >= Phi(all-zero); also the profitability flag."""
    phi1 = potential(game, game.ones)
    total = float(game.costs.sum())
    v = coalition_value(game.flows, game.model, game.players)
    return Deployability(
        deployable=phi1 >= -tol,
        immediate_benefit=phi1 + total,
        total_cost=total,
        phi_all=phi1,
        phi_none=0.0,
        total_benefit=v,
        profitable=v >= total - tol,
    )
