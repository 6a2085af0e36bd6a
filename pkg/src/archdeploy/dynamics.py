"""Equilibrium selection: logit response dynamics and iterated dominance
under noisy perception of benefits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy import optimize, special, stats

from .errors import CapExceeded, NonMonotonic
from .game import DeploymentGame, potential

STATIONARY_CAP = 12
TABLE_DYNAMICS_CAP = 16


@dataclass
class LogitConfig:
    """Logit dynamics settings.

    ``beta`` is a scalar or a per-player mapping.  With ``schedule=True``
    the scalar is a base value and step t (starting at 1) uses beta / t.
    ``initial`` is a fixed profile; otherwise each player starts deployed
    with probability ``init_prob``.
    """

    beta: Union[float, Mapping] = 1.0
    steps: int = 1000
    schedule: bool = False
    initial: Optional[Sequence[int]] = None
    init_prob: float = 0.0
    seed: int = 0

    def betas(self, game: DeploymentGame) -> np.ndarray:
        if isinstance(self.beta, Mapping):
            b = np.array([float(self.beta[p]) for p in game.players])
        else:
            b = np.full(game.n, float(self.beta))
        if np.any(b <= 0):
            raise ValueError("beta must be positive")
        return b


@dataclass
class LogitTrace:
    deployers: np.ndarray          # deployer count after each step (index 0 = start)
    potential: np.ndarray          # Phi after each step
    final: tuple
    visits: Optional[np.ndarray]   # empirical state frequencies over steps 1..T, by bitmask

    def to_csv(self, path_or_buf):
        lines = ["step,deployer_count,potential"]
        for t, (c, p) in enumerate(zip(self.deployers, self.potential)):
            lines.append(f"{t},{int(c)},{p!r}")
        text = "\n".join(lines) + "\n"
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w") as fh:
                fh.write(text)


def _initial(game, config, rng):
    if config.initial is not None:
        a = tuple(int(x) for x in config.initial)
        if len(a) != game.n:
            raise ValueError("initial profile has wrong length")
        return a
    return tuple(int(x) for x in (rng.random(game.n) < config.init_prob))


def logit_step(game: DeploymentGame, a, config: LogitConfig, rng, t: int = 1) -> tuple:
    """One logit revision by a uniformly chosen player."""
    k = int(rng.integers(game.n))
    beta = config.betas(game)[k]
    if config.schedule:
        beta = beta / t
    m = game.gain(k, a) - game.costs[k]
    p1 = special.expit(m / beta)
    a = list(a)
    a[k] = int(rng.random() < p1)
    return tuple(a)


def logit_run(game: DeploymentGame, config: LogitConfig) -> LogitTrace:
    """Simulate ``config.steps`` logit revisions."""
    rng = np.random.default_rng(config.seed)
    a = _initial(game, config, rng)
    T = int(config.steps)
    betas = config.betas(game)
    n = game.n
    picks = rng.integers(n, size=T) if n else np.zeros(T, dtype=int)
    draws = rng.random(T)
    counts = np.empty(T + 1, dtype=np.int64)
    phis = np.empty(T + 1)
    counts[0] = sum(a)
    phis[0] = potential(game, a)
    small = n <= TABLE_DYNAMICS_CAP
    visits = None
    if small:
        table = game.potential_table()
        m = game.mask(a)
        states = np.empty(T, dtype=np.int64)
        for t in range(T):
            k = int(picks[t])
            bit = 1 << k
            hi, lo = table[m | bit], table[m & ~bit]
            beta = betas[k] / (t + 1) if config.schedule else betas[k]
            x = (hi - lo) / beta
            p1 = 1.0 / (1.0 + math.exp(-x)) if x > -700 else 0.0
            m = (m | bit) if draws[t] < p1 else (m & ~bit)
            states[t] = m
            phis[t + 1] = table[m]
        if T:
            visits = np.bincount(states, minlength=1 << n) / T
            pops = np.bitwise_count(states.astype(np.uint64)).astype(np.int64)
            counts[1:] = pops
        final = game.unmask(m)
        return LogitTrace(counts, phis, final, visits)
    a = np.array(a, dtype=np.int64)
    cnt = game.counts(a) if game.simple else None
    phi = phis[0]
    for t in range(T):
        k = int(picks[t])
        marg = game.gain(k, a, cnt) - game.costs[k]
        beta = betas[k] / (t + 1) if config.schedule else betas[k]
        new = int(draws[t] < special.expit(marg / beta))
        if new != a[k]:
            phi += marg if new else -marg
            if cnt is not None:
                cnt[game._pflows[k]] += 1 if new else -1
            a[k] = new
        counts[t + 1] = a.sum()
        phis[t + 1] = phi
    return LogitTrace(counts, phis, tuple(int(x) for x in a), None)


def transition_matrix(game: DeploymentGame, beta: float) -> np.ndarray:
    """Logit chain transition matrix over profiles indexed by bitmask."""
    n = game.n
    if n > STATIONARY_CAP:
        raise CapExceeded(f"{n} players exceeds stationary cap {STATIONARY_CAP}")
    table = game.potential_table()
    N = 1 << n
    P = np.zeros((N, N))
    for m in range(N):
        for k in range(n):
            bit = 1 << k
            x = (table[m | bit] - table[m & ~bit]) / beta
            # expit(-x) rather than 1 - expit(x) keeps tiny exit rates exact
            P[m, m | bit] += special.expit(x) / n
            P[m, m & ~bit] += special.expit(-x) / n
    return P


def logit_stationary_exact(game: DeploymentGame, beta: float):
    """(Gibbs distribution, eigenvector stationary distribution), both by bitmask."""
    table = game.potential_table() if game.n <= STATIONARY_CAP else None
    if table is None:
        raise CapExceeded(f"{game.n} players exceeds stationary cap {STATIONARY_CAP}")
    gibbs = special.softmax(table / beta)
    return gibbs, stationary_vector(transition_matrix(game, beta))


def stationary_vector(P: np.ndarray) -> np.ndarray:
    """Left unit eigenvector of an irreducible stochastic matrix.

    Grassmann-Taksar-Heyman state reduction: no subtractions, so it stays
    accurate when the chain is nearly reducible (small beta).
    """
    A = np.array(P, dtype=float)
    N = len(A)
    for k in range(N - 1, 0, -1):
        s = A[k, :k].sum()
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    pi = np.zeros(N)
    pi[0] = 1.0
    for k in range(1, N):
        pi[k] = pi[:k] @ A[:k, k]
    return pi / pi.sum()


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# ---- iterated dominance ----------------------------------------------------


@dataclass
class ThresholdState:
    lower: dict
    upper: dict
    round: int

    def width(self) -> float:
        return max(self.upper[i] - self.lower[i] for i in self.lower)


def _gain_tables(game: DeploymentGame):
    """gain[k][mask] = phi_k(S + k, v~) for every mask (bit k ignored)."""
    table = game.potential_table()
    N = 1 << game.n
    masks = np.arange(N)
    out = []
    for k in range(game.n):
        bit = 1 << k
        out.append(table[masks | bit] - table[masks & ~bit] + game.costs[k])
    return out


def symmetric_profile(game: DeploymentGame, tol: float = 1e-9):
    """gain by number of deploying opponents if the game is symmetric, else None."""
    if game.n > STATIONARY_CAP or game.n == 0:
        return None
    if np.ptp(game.costs) > tol:
        return None
    gains = _gain_tables(game)
    masks = np.arange(1 << game.n)
    gk = np.full(game.n, np.nan)
    for k in range(game.n):
        others = np.bitwise_count((masks & ~(1 << k)).astype(np.uint64)).astype(int)
        for c in range(game.n):
            vals = gains[k][others == c]
            if np.isnan(gk[c]):
                gk[c] = vals[0]
            if np.max(np.abs(vals - gk[c])) > tol:
                return None
    return gk


class _Quadrature:
    """Expected benefit for symmetric games, integrating the own-error draw.

    Gauss-Legendre on [-12 sigma, 12 sigma], split where 1 + e changes sign.
    """

    def __init__(self, gk, sigma, nodes=400):
        self.gk = np.asarray(gk, dtype=float)
        self.n = len(gk) - 1
        self.sigma = sigma
        x, w = np.polynomial.legendre.leggauss(nodes)
        lo, hi = -12.0 * sigma, 12.0 * sigma
        cuts = [lo, hi] if not lo < -1.0 < hi else [lo, -1.0, hi]
        es, ws = [], []
        for a, b in zip(cuts, cuts[1:]):
            es.append(0.5 * (b - a) * x + 0.5 * (a + b))
            ws.append(0.5 * (b - a) * w)
        self.e = np.concatenate(es)
        self.w = np.concatenate(ws) * stats.norm.pdf(self.e, scale=sigma)
        k = np.arange(self.n + 1)
        self.logc = special.gammaln(self.n + 1) - special.gammaln(k + 1) - special.gammaln(self.n - k + 1)
        self.k = k

    def benefit(self, lam, taus):
        tau = taus[0]
        if math.isinf(tau):
            q = np.zeros_like(self.e) if tau > 0 else np.ones_like(self.e)
        else:
            one = 1.0 + self.e
            z = ((1.0 + tau) * one / lam - 1.0) / self.sigma
            q = np.where(one > 0, special.ndtr(-z), special.ndtr(z))
        q = np.clip(q, 0.0, 1.0)
        k = self.k[None, :]
        logp = self.logc[None, :] + special.xlogy(k, q[:, None]) + special.xlog1py(self.n - k, -q[:, None])
        pmf = np.exp(logp)
        return float(self.w @ (pmf @ self.gk))


class _MonteCarlo:
    """Expected benefit by sampling errors (common random numbers across calls)."""

    def __init__(self, game, k, sigma, samples, rng):
        self.k = k
        self.gain = _gain_tables(game)[k]
        self.others = [j for j in range(game.n) if j != k]
        self.own = rng.normal(0.0, sigma, size=samples)
        self.opp = rng.normal(0.0, sigma, size=(samples, len(self.others)))
        self.bits = np.array([1 << j for j in self.others], dtype=np.int64)

    def benefit(self, lam, taus):
        ratio = (1.0 + self.opp) / (1.0 + self.own)[:, None]
        thr = 1.0 + np.array([taus[j] for j in self.others])
        act = lam * ratio >= thr[None, :]
        masks = act.astype(np.int64) @ self.bits if len(self.bits) else np.zeros(len(self.own), dtype=np.int64)
        return float(self.gain[masks].mean())


def _root(evalfn, cost, lam_max=1e6):
    """Smallest lambda > 0 with lam * benefit(lam) >= cost, as a theta value."""
    if cost <= 0:
        return -1.0

    def h(lam):
        return lam * evalfn(lam) - cost

    lo, hi = 1e-12, 1.0
    while h(hi) < 0:
        lo, hi = hi, hi * 2.0
        if hi > lam_max:
            return math.inf
    lam = optimize.brentq(h, lo, hi, xtol=1e-13, rtol=1e-13, maxiter=500)
    return lam - 1.0


def dominance_iteration(
    game: DeploymentGame,
    noise_sigma: float = 0.3,
    rounds: int = 100,
    method: str = "auto",
    samples: int = 100_000,
    seed: int = 0,
    upper_init: Optional[float] = None,
    tol: float = 1e-7,
    stop_width: Optional[float] = None,
) -> list:
    """Iterated elimination of dominated cutoff strategies.

    Player i perceives its revenue share scaled by (1 + theta_i).  Given
    own scale lam, an opponent's scale is lam (1 + e_j) / (1 + e_i) with
    e ~ N(0, noise_sigma).  Round t raises the "never deploy" cutoff to the
    largest theta whose best-case expected gain is still <= 0 and lowers the
    "always deploy" cutoff to the smallest theta whose worst-case expected
    gain is >= 0.

    ``upper_init`` seeds the "always deploy" cutoff (theta); the default is
    4 (n + 1) max_i c_i / phi_i(all) - 1.
    """
    n = game.n
    full = game.ones
    share = np.array([game.share(p, full) for p in game.players]) if n else np.zeros(0)
    costs = game.costs
    with np.errstate(divide="ignore"):
        ratio = np.where(share > 0, costs / np.where(share > 0, share, 1.0), np.inf)
    ratio = np.where(costs <= 0, 0.0, ratio)
    lower = {p: float(ratio[k] - 1.0) for k, p in enumerate(game.players)}
    if upper_init is None:
        finite = ratio[np.isfinite(ratio)]
        upper_init = 4.0 * (n + 1) * (finite.max() if len(finite) else 1.0) - 1.0
    upper = {p: max(float(upper_init), lower[p]) for p in game.players}
    history = [ThresholdState(dict(lower), dict(upper), 0)]

    gk = symmetric_profile(game) if method in ("auto", "quadrature") else None
    if method == "quadrature" and gk is None:
        raise ValueError("quadrature requires a symmetric game")
    rng = np.random.default_rng(seed)
    if gk is not None:
        quad = _Quadrature(gk, noise_sigma)
        slack = tol
    else:
        mcs = [_MonteCarlo(game, k, noise_sigma, samples, rng) for k in range(n)]
        slack = max(tol, 3.0 / math.sqrt(samples))

    for t in range(1, rounds + 1):
        new_lo, new_hi = {}, {}
        if gk is not None:
            p0 = game.players[0]
            lo_tau = [lower[p0]] * n
            hi_tau = [upper[p0]] * n
            lo_v = _root(lambda lam: quad.benefit(lam, lo_tau), costs[0])
            hi_v = _root(lambda lam: quad.benefit(lam, hi_tau), costs[0])
            for p in game.players:
                new_lo[p], new_hi[p] = lo_v, hi_v
        else:
            lo_taus = [lower[p] for p in game.players]
            hi_taus = [upper[p] for p in game.players]
            for k, p in enumerate(game.players):
                mc = mcs[k]
                new_lo[p] = _root(lambda lam: mc.benefit(lam, lo_taus), costs[k])
                new_hi[p] = _root(lambda lam: mc.benefit(lam, hi_taus), costs[k])
        for p in game.players:
            if new_lo[p] < lower[p] - slack or new_hi[p] > upper[p] + slack:
                raise NonMonotonic(
                    f"round {t}, player {p}: bracket moved outward "
                    f"({lower[p]}->{new_lo[p]}, {upper[p]}->{new_hi[p]})"
                )
            lower[p] = max(lower[p], new_lo[p])
            upper[p] = min(upper[p], new_hi[p])
            if lower[p] > upper[p]:
                lower[p] = upper[p] = 0.5 * (lower[p] + upper[p])
        history.append(ThresholdState(dict(lower), dict(upper), t))
        if stop_width is not None and history[-1].width() <= stop_width:
            break
    return history


def converged_round(history: Sequence[ThresholdState], width: float = 1e-3):
    """First round whose bracket is narrower than ``width`` (None if never)."""
    for s in history:
        if s.width() <= width:
            return s.round
    return None
