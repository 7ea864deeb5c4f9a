"""A two-type rule that is incentive compatible although the chance of winning falls with value.

Run: python demos/two_type_rule.py
"""

from capauct.instances import two_type_rule, two_type_utilities
from capauct.two_price import check_bic

rule = two_type_rule()
print(f"capacity {rule.capacity}, types {list(map(str, rule.grid))}")
for v, qv, qc in zip(rule.grid, rule.qv, rule.qc):
    print(f"  type {v}: pay value w.p. {qv}, pay value minus capacity w.p. {qc}, win w.p. {qv + qc}")

print("\nutility of (true type, report):")
for (t, r), u in sorted(two_type_utilities(rule).items()):
    print(f"  ({t}, {r}) -> {u}")

print("\nincentive compatible:", check_bic(rule).ok)
