"""Coordinator mechanism: quote-based selection, truthfulness harness,
and tipping sets that move best response to the largest equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import CapExceeded, NoProgress
from .game import ENUM_CAP, DeploymentGame, best_response_from, extremal_equilibria
from .model import TOL

QUOTE_GRID = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 4.0, 10.0)


def share_table(game: DeploymentGame) -> np.ndarray:
    """P[mask] with phi_k(S, v~) = P[S] - P[S minus k] for k in S."""
    if game.n > ENUM_CAP:
        raise CapExceeded(f"{game.n} players exceeds enumeration cap {ENUM_CAP}")
    if not game.simple:
        return game.potential_P()
    masks = np.arange(1 << game.n)
    cost = np.zeros(len(masks))
    for k in range(game.n):
        cost += game.costs[k] * ((masks >> k) & 1)
    return game.potential_masks(masks) + cost


class _Selector:
    """Precomputed per-coalition shares for repeated selection calls."""

    def __init__(self, game: DeploymentGame):
        self.game = game
        P = share_table(game)
        n = game.n
        masks = np.arange(1 << n)
        self.masks = masks
        self.size = np.bitwise_count(masks.astype(np.uint64)).astype(np.int64)
        self.phi = np.zeros((n, len(masks)))
        vt = np.zeros(len(masks))
        for k in range(n):
            bit = 1 << k
            inside = (masks & bit) != 0
            self.phi[k, inside] = P[masks[inside]] - P[masks[inside] ^ bit]
            vt += self.phi[k]
        self.vtilde = vt

    def feasible(self, q: np.ndarray, tol: float = TOL) -> np.ndarray:
        ok = np.ones(len(self.masks), dtype=bool)
        for k in range(self.game.n):
            inside = (self.masks >> k) & 1 == 1
            ok &= ~inside | (self.phi[k] >= q[k] - tol)
        return ok

    def _lex(self, ms):
        n = self.game.n
        return min(ms, key=lambda m: [k for k in range(n) if (m >> k) & 1])

    def select(self, q: np.ndarray, rule: str = "cardinality", tol: float = TOL) -> int:
        ok = self.feasible(q, tol)
        cand = self.masks[ok]
        if rule == "cardinality":
            s = self.size[cand]
            cand = cand[s == s.max()]
            v = self.vtilde[cand]
            cand = cand[v >= v.max() - tol]
        elif rule == "value":
            v = self.vtilde[cand]
            cand = cand[v >= v.max() - tol]
            s = self.size[cand]
            cand = cand[s == s.min()]
        elif rule == "smallest":
            nonempty = cand[cand != 0]
            if len(nonempty):
                s = self.size[nonempty]
                cand = nonempty[s == s.min()]
        else:
            raise ValueError(f"unknown rule {rule}")
        return int(self._lex(cand.tolist()))


def _quotes_vector(game, quotes):
    return np.array([float(quotes[p]) for p in game.players])


def select_isps(game: DeploymentGame, quotes: Mapping, rule: str = "cardinality", tol: float = TOL) -> frozenset:
    """Largest set whose Shapley shares all cover their quotes.

    Ties go to the larger v~, then the lexicographically smallest member
    list.  ``rule="value"`` (max v~) and ``rule="smallest"`` (smallest
    nonempty feasible set) exist as negative controls for the harness.
    """
    q = _quotes_vector(game, quotes)
    if game.n > ENUM_CAP:
        if rule == "cardinality" and np.allclose(q, game.costs, atol=tol, rtol=0):
            return game.deployed(best_response_from(game, game.ones))
        raise CapExceeded("exact selection limited to 20 players unless quotes equal costs")
    m = _Selector(game).select(q, rule, tol)
    return game.deployed(game.unmask(m))


def truthfulness_check(
    game: DeploymentGame,
    i,
    quote_grid=QUOTE_GRID,
    samples: int = 8,
    seed: int = 0,
    rule: str = "cardinality",
    tol: float = TOL,
):
    """(ok, worst gain from misreporting) for player i over quote multiples of its cost.

    Opponent quote profiles: truthful, plus ``samples`` draws where each
    opponent quotes a random grid multiple of its cost.
    """
    if game.n > 8:
        raise CapExceeded("truthfulness harness limited to 8 players")
    sel = _Selector(game)
    k = game.index[i]
    c = game.costs
    rng = np.random.default_rng(seed)
    grid = np.asarray(quote_grid, dtype=float)
    profiles = [c.copy()]
    for _ in range(samples):
        profiles.append(c * rng.choice(grid, size=game.n))
    worst = -math.inf

    def util(q):
        m = sel.select(q, rule, tol)
        if (m >> k) & 1:
            return sel.phi[k, m] - c[k]
        return 0.0

    for base in profiles:
        q = base.copy()
        q[k] = c[k]
        truthful = util(q)
        for mult in grid:
            q[k] = c[k] * mult
            worst = max(worst, util(q) - truthful)
    return worst <= tol, worst


def gap(game: DeploymentGame, S, quotes: Optional[Mapping] = None) -> float:
    """Total shortfall of Shapley shares below quotes (costs by default) in S."""
    S = frozenset(S)
    if not S:
        return 0.0
    a = game.profile(S)
    out = []
    for p in S:
        q = game.costs[game.index[p]] if quotes is None else float(quotes[p])
        out.append(max(q - game.share(p, a), 0.0))
    return math.fsum(out)


def minimal_tipping_set(
    game: DeploymentGame,
    S,
    rng=None,
    largest=None,
    tol: float = TOL,
) -> frozenset:
    """Greedy small set T whose subsidized deployment leaves no member of S + T short."""
    S = frozenset(S)
    rng = np.random.default_rng(rng)
    if largest is None:
        largest = game.deployed(best_response_from(game, game.ones))
    if S >= largest:
        raise NoProgress("S already contains the largest equilibrium")
    everyone = frozenset(game.players)
    outside = sorted(everyone - S)
    T = {outside[int(rng.integers(len(outside)))]}
    while gap(game, S | T) > tol:
        if S | T == everyone:
            T = set(largest - S)
            break
        rest = sorted(everyone - S - T)
        gaps = [gap(game, S | T | {j}) for j in rest]
        T.add(rest[int(np.argmin(gaps))])
    pruned = True
    while pruned:
        pruned = False
        for j in sorted(T):
            if len(T) > 1 and gap(game, S | (T - {j})) <= tol:
                T.remove(j)
                pruned = True
                break
    return frozenset(T)


@dataclass
class TippingRound:
    selected: frozenset
    deployed: frozenset
    rewards: dict


@dataclass
class TippingTrace:
    rounds: list = field(default_factory=list)
    terminated: bool = False

    def to_csv(self, path_or_buf):
        lines = ["round,selected_count,cumulative_deployers,total_reward"]
        for r, rd in enumerate(self.rounds, 1):
            total = math.fsum(rd.rewards.values())
            lines.append(f"{r},{len(rd.selected)},{len(rd.deployed)},{total!r}")
        text = "\n".join(lines) + "\n"
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w") as fh:
                fh.write(text)


def multi_round_tipping(game: DeploymentGame, seed=0, tol: float = TOL) -> TippingTrace:
    """Alternate tipping-set subsidies and best-response relaxation until the largest equilibrium."""
    rng = np.random.default_rng(seed)
    lo, hi = extremal_equilibria(game)
    largest = game.deployed(hi)
    S = game.deployed(lo)
    trace = TippingTrace()
    for _ in range(game.n + 1):
        if S == largest:
            trace.terminated = True
            return trace
        T = minimal_tipping_set(game, S, rng, largest, tol)
        a = game.profile(S | T)
        rewards = {p: game.share(p, a) for p in sorted(S | T)}
        nxt = game.deployed(best_response_from(game, a, tol))
        if not nxt > S:
            raise NoProgress("tipping round did not enlarge the deployed set")
        S = nxt
        trace.rounds.append(TippingRound(frozenset(T), S, rewards))
    trace.terminated = S == largest
    return trace
