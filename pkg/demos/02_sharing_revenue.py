"""How the new revenue is split: even splits on fixed paths, and what changes
when deploying ISPs can pull traffic onto an alternative path.

Run: python demos/02_sharing_revenue.py
"""

from archdeploy.model import Flow, RevenueModel, tilde_value
from archdeploy.shapley import shapley_closed_form, shapley_exact, shapley_routing

# ISP 2 sits in the middle of a star and carries all six flows between 1, 3 and 4
flows = []
for a, b in [(1, 3), (1, 4), (3, 4)]:
    flows.append(Flow.full_path(len(flows), 1 / 6, [(a, 2, b)]))
    flows.append(Flow.full_path(len(flows), 1 / 6, [(b, 2, a)]))
m = RevenueModel(18.0)
phi = shapley_closed_form({1, 2, 3, 4}, flows, m)
print("star, each flow worth 3:", {i: round(x, 3) for i, x in phi.items()})
check = shapley_exact({1, 2, 3, 4}, lambda S: tilde_value(flows, m, S))
print("subset-sum oracle agrees:", all(abs(phi[i] - check[i]) < 1e-9 for i in phi))

# one flow with a short path 1-2-5 and a detour 1-3-4-5
f = Flow(0, 1.0, [(1, 2, 5), (1, 3, 4, 5)], [{1, 2, 5}, {1, 3, 4, 5}])
m = RevenueModel(3.0)
print("\nwith a detour available, everybody deploying:")
print(" ", {i: round(x, 3) for i, x in shapley_routing({1, 2, 3, 4, 5}, [f], m).items()})
print("ISP 2 stays out, the flow moves to the detour:")
print(" ", {i: round(x, 3) for i, x in shapley_routing({1, 3, 4, 5}, [f], m).items()})
