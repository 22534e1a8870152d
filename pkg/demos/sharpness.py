"""
The factor two is sharp
=======================

For two symmetric two-point laws the inverse transform martingale coupling
moves mass at an L1 cost that approaches twice the Wasserstein distance.
"""

from mcouple import build_itmc, verify_coupling
from mcouple.generators import rademacher_pair

# mu puts mass 1/2 at -1 and 1, nu at -b and b
for b in (2.0, 1.5, 1.1, 1.01, 1.001):
    mu, nu = rademacher_pair(1.0, b)
    rep = verify_coupling(build_itmc(mu, nu), mu, nu)
    print(f"b={b:<6} cost1={rep.cost1:.6f} w1={rep.w1:.6f} ratio={rep.ratio:.6f}")

# the ratio is 1 + 1/b, so it tends to 2 as b decreases to 1
