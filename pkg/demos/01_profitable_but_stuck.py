"""Three ISPs on one path: the architecture pays for itself, yet nobody moves.

Run: python demos/01_profitable_but_stuck.py
"""

from archdeploy.game import DeploymentGame, equilibrium_report
from archdeploy.metrics import deployment_price, report
from archdeploy.model import Flow, RevenueModel


def game(price, cost=3.0):
    f = Flow.full_path(1, 1.0, [(1, 2, 3)])
    return DeploymentGame([f], RevenueModel(price), {1: cost, 2: cost, 3: cost})


g = game(12.0)
rep = report(g)
print(f"new revenue v = {rep.total_benefit:.1f}, total cost = {rep.total_cost:.1f}")
print(f"profitable: {rep.profitable}")
print(f"immediate benefit B = {rep.immediate_benefit:.1f} (v / gamma, gamma = {rep.gamma:.1f})")
print(f"deployable (B covers the cost): {rep.necessary_condition}")

eq = equilibrium_report(g)
print(f"equilibria span {eq.smallest} .. {eq.largest}; the robust one is {eq.robust}")

pd = deployment_price(g)
print(f"\nthe price has to reach {pd:.1f} before the robust outcome flips:")
for p in (12.0, 24.0, pd, 30.0):
    print(f"  p = {p:5.1f} -> robust {equilibrium_report(game(p)).robust}")
