"""How a capacity changes what a seller can extract from one equal-revenue buyer.

A risk-neutral buyer with these values pays about 1 at any posted price. With
capacity 1 the seller can always sell and charge value minus one, which earns
about ln h. The LP optimum on a coarse grid sits above both.

Run: python demos/capacity_and_revenue.py
"""

import math

from capauct.dist import AgentSpec, EqualRevenue, discretize
from capauct.instances import monopoly_revenue, sell_always_rule
from capauct.optlp import optimal_two_priced
from capauct.two_price import expected_payment

for h in (100.0, 1000.0):
    d = EqualRevenue(h)
    fine = discretize(d, 10_000, "mean")
    coarse = discretize(d, 60, "mean")
    sell = expected_payment(sell_always_rule(fine, 1.0), fine.masses)
    lp = optimal_two_priced(AgentSpec(coarse, 1.0)).revenue
    print(f"h={h:g}: posted price {monopoly_revenue(d):.3f}, sell-always {sell:.3f} "
          f"(ln h = {math.log(h):.3f}), LP optimum on 60 types {lp:.3f}")
