"""
Quadratic cost between nested Gaussians
=======================================

Between N(0, n^2) and N(0, (n+1)^2) the cheapest martingale coupling has
quadratic cost 2n+1 while W2 stays equal to one. Their ratio grows without bound.
Each row solves one exact LP; pass a smaller atom count for a quick look.
"""

import sys

from mcouple.analysis import gaussian_blowup

atoms = int(sys.argv[1]) if len(sys.argv) > 1 else 100
print("n,cost2,w2,ratio")
for row in gaussian_blowup(range(1, 7), n_atoms=atoms):
    print(f"{row['n']},{row['cost2']:.4f},{row['w2']:.5f},{row['ratio']:.4f}")
