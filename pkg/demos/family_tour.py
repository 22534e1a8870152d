"""
One pair, several couplings
===========================

Every parameter in the family gives a martingale coupling with the same
marginals. They differ in how they spend the transport cost.
"""

import numpy as np

from mcouple import (build_coupling, comonotone, crho_extremality, from_atoms, min_cost_coupling,
                     q_it, q_mix, q_nit, q_product, q_zeta, verify_coupling)
from mcouple.generators import random_single_crossing_pair

mu = from_atoms([(-1, 0.5), (1, 0.5)])
nu = from_atoms([(-8, 0.125), (-6, 0.25), (4, 0.625)])

qs = [q_it(mu, nu), q_nit(mu, nu), q_product(mu, nu), q_zeta(mu, nu)]
qs.append(q_mix(0.5, qs[0], qs[3]))
for q in qs:
    rep = verify_coupling(build_coupling(q, mu, nu), mu, nu)
    print(f"{q.kind:<8} cost1={rep.cost1:.4f} ratio={rep.ratio:.4f} defect={rep.martingale_defect:.1e}")

# the comonotone coupling is cheaper but is not a martingale
rep = verify_coupling(comonotone(mu, nu), mu, nu)
print(f"comonotone cost1={rep.cost1:.4f} drift={rep.drift_sign}")

lo = min_cost_coupling(mu, nu, mode="martingale").value
hi = min_cost_coupling(mu, nu, mode="martingale", sense="max").value
print(f"martingale LP range [{lo:.4f}, {hi:.4f}]")

# with more atoms in mu the kernels separate: the increasing map minimizes the
# rho-cost for rho outside (1, 2) and maximizes it inside
mu, nu = random_single_crossing_pair(np.random.default_rng(1), max_mu=6, max_nu=10)
qs = [q_it(mu, nu), q_product(mu, nu), q_nit(mu, nu)]
print(crho_extremality(mu, nu, qs, [0.0, 0.5, 1.0, 1.5, 2.0, 3.0]).to_csv(), end="")
