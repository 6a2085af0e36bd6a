import io
import itertools
import math

import pytest

from archdeploy.errors import CapExceeded, NoProgress
from archdeploy.game import extremal_equilibria, is_supermodular
from archdeploy.mechanism import (
    gap,
    minimal_tipping_set,
    multi_round_tipping,
    select_isps,
    truthfulness_check,
)
from archdeploy.shapley import tilde_shapley

from instances import fig1, fig3, line_game, random_game


def brute_select(game, quotes):
    """Largest feasible set by enumeration, ties to larger v~ then lexicographic."""
    best = None
    for r in range(game.n, -1, -1):
        for S in itertools.combinations(game.players, r):
            phi = tilde_shapley(set(S), game.flows, game.model) if S else {}
            if all(phi[i] >= quotes[i] - 1e-9 for i in S):
                vt = math.fsum(phi.values())
                key = (-vt, sorted(S))
                if best is None or key < best[0]:
                    best = (key, frozenset(S))
        if best is not None:
            return best[1]
    return frozenset()


def test_fig1_selection():
    g = fig1()
    # each share is 12 / 3 = 4 >= 3, so everyone is selected, as in the largest equilibrium
    assert select_isps(g, {1: 3, 2: 3, 3: 3}) == frozenset({1, 2, 3})
    assert select_isps(g, {1: 3, 2: 3, 3: 4.5}) == frozenset()


def test_zero_quotes_select_everyone():
    g = random_game(4, n_nodes=6, n_flows=4)
    assert select_isps(g, {p: 0.0 for p in g.players}) == frozenset(g.players)


@pytest.mark.parametrize("seed", range(20))
def test_selection_matches_enumeration(seed):
    g = random_game(seed, n_nodes=6, n_flows=4, k_paths=1 + seed % 2, shares=True)
    quotes = {p: c * (0.5 + (k % 3) * 0.5) for k, (p, c) in enumerate(zip(g.players, g.costs))}
    assert select_isps(g, quotes) == brute_select(g, quotes)


@pytest.mark.parametrize("seed", range(30))
def test_truthful_selection_is_largest_equilibrium(seed):
    g = random_game(seed, n_nodes=8, n_flows=6, k_paths=1 + seed % 2, shares=True)
    if not is_supermodular(g):
        return
    S = select_isps(g, dict(zip(g.players, g.costs)))
    assert S == g.deployed(extremal_equilibria(g)[1])


def test_selection_above_cap_only_with_true_costs():
    g = line_game(22, cost=0.001)
    assert select_isps(g, dict(zip(g.players, g.costs))) == frozenset(g.players)
    with pytest.raises(CapExceeded):
        select_isps(g, {p: 0.0 for p in g.players})


def test_unknown_rule():
    g = fig1()
    with pytest.raises(ValueError):
        select_isps(g, {1: 0, 2: 0, 3: 0}, rule="nope")


def test_truthfulness_trivial_grid():
    g = random_game(1, n_nodes=6, n_flows=4)
    for i in g.players:
        ok, worst = truthfulness_check(g, i, quote_grid=(1.0,))
        assert ok and worst == 0.0


@pytest.mark.parametrize("seed", range(15))
def test_truthful_on_supermodular_games(seed):
    g = random_game(seed, n_nodes=6, n_flows=4, k_paths=1 + seed % 2, shares=True)
    if not is_supermodular(g):
        return
    for i in g.players:
        assert truthfulness_check(g, i, seed=seed)[0]


def test_negative_control_is_caught():
    found = 0
    for seed in range(40):
        g = random_game(seed, n_nodes=6, n_flows=4)
        found += sum(not truthfulness_check(g, i, rule="smallest", seed=seed)[0] for i in g.players)
    assert found >= 1


def test_truthfulness_cap():
    with pytest.raises(CapExceeded):
        truthfulness_check(line_game(9), 0)


def test_gap():
    g = fig3()
    assert gap(g, set()) == 0.0
    # {1, 2}: no flow completes, both are short by their full cost
    assert gap(g, {1, 2}) == pytest.approx(6.0)
    assert gap(g, {1, 2, 3, 4}) == 0.0
    # {1, 2, 3}: only the two flows between 1 and 3 complete, worth 2 to each
    assert gap(g, {1, 2, 3}, quotes={1: 0, 2: 0, 3: 10}) == pytest.approx(10 - 2.0)


def test_minimal_tipping_set_fig1():
    g = fig1(price=30.0, cost=3.0)
    # all-zero and all-one are both equilibria; any seed must be tipped to all three
    T = minimal_tipping_set(g, set(), rng=0)
    assert T == frozenset({1, 2, 3})
    with pytest.raises(NoProgress):
        minimal_tipping_set(g, {1, 2, 3})


@pytest.mark.parametrize("seed", range(20))
def test_tipping_set_properties(seed):
    g = random_game(seed, n_nodes=9, n_flows=7, cost_scale=None)
    lo, hi = extremal_equilibria(g)
    S = g.deployed(lo)
    if S == g.deployed(hi):
        return
    T = minimal_tipping_set(g, S, rng=seed)
    assert T and not (T & S)
    assert gap(g, S | T) <= 1e-9
    # pruning leaves no removable member
    if len(T) > 1:
        for j in T:
            assert gap(g, S | (T - {j})) > 1e-9


@pytest.mark.parametrize("seed", range(20))
def test_multi_round_tipping_reaches_largest(seed):
    g = random_game(seed, n_nodes=10, n_flows=8)
    tr = multi_round_tipping(g, seed=seed)
    lo, hi = extremal_equilibria(g)
    assert tr.terminated
    assert len(tr.rounds) <= g.n
    final = tr.rounds[-1].deployed if tr.rounds else g.deployed(lo)
    assert final == g.deployed(hi)
    prev = g.deployed(lo)
    for rd in tr.rounds:
        assert rd.selected and not (rd.selected & prev)
        assert rd.deployed >= prev
        prev = rd.deployed


def test_tipping_csv():
    g = fig1(price=30.0, cost=3.0)
    tr = multi_round_tipping(g)
    buf = io.StringIO()
    tr.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "round,selected_count,cumulative_deployers,total_reward"
    assert lines[1].startswith("1,3,3,")
