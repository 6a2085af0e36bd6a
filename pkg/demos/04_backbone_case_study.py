"""A 23-node synthetic backbone with gravity traffic: how high must the price
be, what does a flatter Internet change, and how few subsidies tip it.

Run: python demos/04_backbone_case_study.py
"""

from archdeploy.dataio import ScenarioConfig, build_scenario
from archdeploy.game import DeploymentGame, equilibrium_report
from archdeploy.mechanism import multi_round_tipping
from archdeploy.metrics import deployment_price, gamma, theorem4_threshold
from archdeploy.model import RevenueModel

cfg = ScenarioConfig(traffic={"source": "gravity", "seed": 0, "flow_fraction": 1.0})
net, flows, model, costs = build_scenario(cfg, unit_price=1.0)
g = DeploymentGame(flows, model, costs)
print(f"{len(net.nodes)} ISPs, {len(flows)} flows, gamma = {gamma(g):.3f}")
pd = deployment_price(g)
print(f"deployment price p/C = {pd:.3f}")
thr = theorem4_threshold(g)
print(f"traffic-share bound {thr.threshold:.3f}, met by every ISP: {thr.all_satisfied}")

for p in (0.8 * pd, 1.05 * pd):
    h = DeploymentGame(flows, RevenueModel(p), costs)
    print(f"  p = {p:6.2f}: robust outcome has {sum(equilibrium_report(h).robust)} deployers")

print("\nshorter paths lower the coordination burden:")
for M in (2, 3, 4):
    _, fl, _, co = build_scenario(cfg, unit_price=1.0, flatten_m=M)
    h = DeploymentGame(fl, RevenueModel(1.0), co)
    print(f"  paths of at most {M} ISPs: gamma = {gamma(h):.3f}, price = {deployment_price(h):.3f}")

# a price where all-zero and a larger equilibrium coexist
h = DeploymentGame(flows, RevenueModel(0.8 * pd), costs)
tr = multi_round_tipping(h)
print(f"\nat p = {0.8 * pd:.2f}, subsidy rounds:")
for k, rd in enumerate(tr.rounds, 1):
    print(f"  round {k}: subsidise {len(rd.selected)}, {len(rd.deployed)} deploy, reward {sum(rd.rewards.values()):.2f}")
