import io
import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from archdeploy.dynamics import (
    LogitConfig,
    _Quadrature,
    converged_round,
    dominance_iteration,
    logit_run,
    logit_stationary_exact,
    logit_step,
    stationary_vector,
    symmetric_profile,
    total_variation,
    transition_matrix,
)
from archdeploy.errors import CapExceeded
from archdeploy.game import potential

from instances import fig1, line_game, random_game


def test_transition_rows_are_stochastic():
    g = random_game(2, n_nodes=4, n_flows=3)
    P = transition_matrix(g, 0.5)
    assert np.allclose(P.sum(axis=1), 1.0)
    assert np.all(P >= 0)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("beta", [0.1, 1.0])
def test_gibbs_is_stationary(seed, beta):
    g = random_game(seed, n_nodes=4, n_flows=3, k_paths=seed % 2 + 1, shares=True)
    gibbs, eig = logit_stationary_exact(g, beta)
    assert np.max(np.abs(gibbs - eig)) <= 1e-9
    P = transition_matrix(g, beta)
    assert np.allclose(gibbs @ P, gibbs, atol=1e-12)


def test_gibbs_matches_potential_table():
    g = fig1(price=30.0, cost=1.0)
    gibbs, _ = logit_stationary_exact(g, 1.0)
    phis = np.array([potential(g, g.unmask(m)) for m in range(8)])
    w = np.exp(phis - phis.max())
    assert np.allclose(gibbs, w / w.sum())


def test_stationary_cap():
    with pytest.raises(CapExceeded):
        transition_matrix(line_game(13), 1.0)


def test_simulated_chain_close_to_gibbs():
    g = fig1(price=15.0, cost=1.5)
    tr = logit_run(g, LogitConfig(beta=1.0, steps=200_000, seed=3))
    gibbs, _ = logit_stationary_exact(g, 1.0)
    assert total_variation(tr.visits, gibbs) < 0.02


def test_logit_run_is_seeded():
    g = line_game(4, cost=0.1)
    a = logit_run(g, LogitConfig(beta=0.5, steps=500, seed=7, init_prob=0.5))
    b = logit_run(g, LogitConfig(beta=0.5, steps=500, seed=7, init_prob=0.5))
    assert a.final == b.final
    assert np.array_equal(a.deployers, b.deployers)


def test_logit_trace_potential_consistent():
    # large game: incremental bookkeeping path
    g = line_game(18, cost=0.001)
    tr = logit_run(g, LogitConfig(beta=0.01, steps=300, seed=1, init_prob=0.5))
    assert tr.visits is None
    assert tr.potential[-1] == pytest.approx(potential(g, tr.final), abs=1e-9)
    assert tr.deployers[-1] == sum(tr.final)


def test_logit_trace_csv():
    g = line_game(3, cost=0.1)
    tr = logit_run(g, LogitConfig(beta=0.5, steps=5, seed=0))
    buf = io.StringIO()
    tr.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "step,deployer_count,potential"
    assert len(lines) == 7


def test_logit_step_and_per_player_beta():
    g = line_game(2, cost=0.1)
    rng = np.random.default_rng(0)
    conf = LogitConfig(beta={0: 1e-6, 1: 1e-6})
    a = (1, 1)
    for t in range(20):
        a = logit_step(g, a, conf, rng, t + 1)
    # near-zero noise: all-one is a strict equilibrium and never left
    assert a == (1, 1)
    with pytest.raises(ValueError):
        LogitConfig(beta=0.0).betas(g)


def test_initial_profile_length_checked():
    g = line_game(3)
    with pytest.raises(ValueError):
        logit_run(g, LogitConfig(initial=(1, 0)))


def test_symmetric_profile():
    g = line_game(3, cost=0.2)
    gk = symmetric_profile(g)
    # phi with 0, 1 or 2 deploying opponents: nothing until the path completes
    assert gk == pytest.approx([0.0, 0.0, 1 / 3])
    assert symmetric_profile(random_game(5, n_nodes=5, n_flows=3)) is None


def test_quadrature_matches_adaptive_integral():
    gk = np.array([0.0, 0.0, 1 / 3])
    sigma = 0.3
    q = _Quadrature(gk, sigma)
    lam, tau = 1.4, 0.8

    def integrand(e):
        z = ((1 + tau) * (1 + e) / lam - 1) / sigma
        p = stats.norm.sf(z) if 1 + e > 0 else stats.norm.cdf(z)
        pmf = stats.binom.pmf(np.arange(3), 2, p)
        return stats.norm.pdf(e, scale=sigma) * float(pmf @ gk)

    ref = integrate.quad(integrand, -12 * sigma, -1, limit=200)[0]
    ref += integrate.quad(integrand, -1, 12 * sigma, limit=200)[0]
    assert q.benefit(lam, [tau] * 3) == pytest.approx(ref, abs=1e-8)


@pytest.mark.parametrize("I", [2, 3])
def test_dominance_brackets_monotone_and_converge(I):
    g = line_game(I)
    hist = dominance_iteration(g, noise_sigma=0.3, rounds=100)
    for a, b in zip(hist, hist[1:]):
        for p in g.players:
            assert b.lower[p] >= a.lower[p] - 1e-12
            assert b.upper[p] <= a.upper[p] + 1e-12
    r = converged_round(hist)
    assert r is not None and r <= 100
    # initial lower cutoff: phi_i(all) = 1 / I against cost 1 / I
    assert hist[0].lower[0] == pytest.approx(0.0)


def test_monte_carlo_close_to_quadrature():
    g = line_game(2)
    quad = dominance_iteration(g, rounds=60, method="quadrature")[-1]
    mc = dominance_iteration(g, rounds=60, method="mc", samples=100_000, seed=1)[-1]
    assert mc.lower[0] == pytest.approx(quad.lower[0], abs=0.05)
    assert mc.upper[1] == pytest.approx(quad.upper[1], abs=0.05)


def test_quadrature_requires_symmetry():
    with pytest.raises(ValueError):
        dominance_iteration(random_game(5, n_nodes=5, n_flows=3), method="quadrature")


def test_zero_cost_players_always_deploy():
    g = line_game(2, cost=0.0)
    hist = dominance_iteration(g, rounds=3)
    assert hist[-1].upper[0] == -1.0 == hist[-1].lower[0]
    assert math.isfinite(hist[0].width())


def test_stationary_vector_matches_eig_on_well_conditioned_chain():
    rng = np.random.default_rng(0)
    P = rng.random((6, 6))
    P /= P.sum(axis=1, keepdims=True)
    pi = stationary_vector(P)
    vals, vecs = np.linalg.eig(P.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
    assert np.allclose(pi, v / v.sum(), atol=1e-12)


def test_nearly_frozen_chain_keeps_small_exit_rates():
    # Phi(1) = 5 - 4.5 = 0.5 and dropping one player gives -3.0, so at beta = 0.1
    # leaving all-ones has probability ~ e^-35, which 1 - expit would round to 0
    g = fig1(price=15.0, cost=1.5)
    gibbs, stat = logit_stationary_exact(g, 0.1)
    assert np.allclose(stat, gibbs, rtol=1e-9, atol=0)
    P = transition_matrix(g, 0.1)
    full = 7
    assert P[full, full & ~1] == pytest.approx(special.expit(-35.0) / 3, rel=1e-12)
