"""First-price equilibrium against second price and its capacitated variant (CSP).

For two uniform bidders with capacity 1/4 the first-price equilibrium earns
7/16. CSP charges the winner the larger of the second bid and own value
minus capacity. It earns more here, so first price does not dominate it on
every instance.

Run: python demos/first_price_versus_csp.py
"""

from capauct import auctions as au
from capauct.dist import AgentSpec, Uniform
from capauct.sim import best_response_gap, revenue_ordering

agents = [AgentSpec(Uniform(0, 1), 0.25)] * 2
eq = au.fpa_symmetric_equilibrium(agents[0], 2, k=2000)
for v in (0.1, 0.3, 0.5, 0.8, 1.0):
    print(f"value {v:.1f}: equilibrium bid {float(eq.bid(v)):.4f}")

res = revenue_ordering(agents, 1_000_000, 0)
for kind, est in res["estimates"].items():
    print(f"{kind:>4}: {est.mean:.4f} +/- {est.half_width_95:.4f}")
print("first price >= second price:", res["fpa>=spa"])
print("first price >= CSP:", res["fpa>=csp"])
print("best-response gap on a 2001-point audit grid:",
      f"{best_response_gap(au.make_mechanism(au.FPA, agents, 2000)):.2g}")
