"""
Stability in the marginals
==========================

Shrinking mu toward its mean by a factor 1 - 1/n gives pairs that converge to
the reference pair. The inverse transform couplings converge too, measured by
an exact transport LP on the plane.
"""

from mcouple import from_atoms, stability_experiment
from mcouple.analysis import stability_csv

mu = from_atoms([(-1, 0.5), (1, 0.5)])
nu = from_atoms([(-8, 0.125), (-6, 0.25), (4, 0.625)])

ns = [5, 10, 50, 200, 1000]
schedule = [(from_atoms(zip((1 - 1 / n) * mu.locations, mu.weights)), nu) for n in ns]
print(stability_csv(stability_experiment(mu, nu, schedule), ns), end="")
