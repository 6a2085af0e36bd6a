"""Two ways of picking among equilibria: noisy best responses that slowly
cool down, and players who each see a slightly distorted benefit.

Run: python demos/03_selecting_an_equilibrium.py
"""

import itertools

from archdeploy.dynamics import LogitConfig, converged_round, dominance_iteration, logit_run
from archdeploy.game import DeploymentGame, equilibrium_report
from archdeploy.model import Flow, RevenueModel

# six ISPs, one flow between every pair
pairs = list(itertools.combinations(range(6), 2))
flows = [Flow.full_path(k, 1 / len(pairs), [p]) for k, p in enumerate(pairs)]
for cost in (1.0, 1.4):
    g = DeploymentGame(flows, RevenueModel(15.0), {i: cost for i in range(6)})
    eq = equilibrium_report(g)
    finals = [logit_run(g, LogitConfig(beta=2000.0, steps=40_000, schedule=True, seed=s)).final
              for s in range(20)]
    hits = sum(a == eq.robust for a in finals)
    print(f"cost {cost}: robust {eq.robust}, {hits}/20 annealed logit runs end there")

print("\nline games with cost 1/I, perception noise 0.3:")
for I in (2, 3, 4):
    f = Flow.full_path(0, 1.0, [tuple(range(I))])
    g = DeploymentGame([f], RevenueModel(1.0), {i: 1 / I for i in range(I)})
    hist = dominance_iteration(g, noise_sigma=0.3, rounds=100)
    last = hist[-1]
    print(f"  I = {I}: cutoff in [{last.lower[0]:.4f}, {last.upper[0]:.4f}] "
          f"after {converged_round(hist)} rounds")
print("a larger coalition needs a larger perceived boost before anyone commits")
