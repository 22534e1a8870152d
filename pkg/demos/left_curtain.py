"""
A martingale coupling that breaks the bound
===========================================

The kernel x -> {5x/4, -x/4} is a martingale kernel on (0, inf). Applied to an
exponential law it costs more than twice the Wasserstein distance between its
marginals, while the inverse transform coupling of the same pair stays below.
"""

from mcouple import build_itmc, discretize, left_curtain_family, verify_coupling

mu = discretize("exponential", (1.0,), 2000)
j, rep, nu = left_curtain_family(mu, 1.25, 0.25)
print("two-point kernel :", f"cost1={rep.cost1:.5f}", f"2*w1={2 * rep.w1:.5f}", f"ratio={rep.ratio:.4f}")

it = verify_coupling(build_itmc(mu, nu), mu, nu)
print("inverse transform:", f"cost1={it.cost1:.5f}", f"2*w1={2 * it.w1:.5f}", f"ratio={it.ratio:.4f}")
