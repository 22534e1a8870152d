"""Equal-mass quantile discretization of a few continuous laws."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.stats import norm

from .errors import UnknownDistribution
from .measures import DiscreteMeasure

__all__ = ["DISTRIBUTIONS", "discretize"]

DISTRIBUTIONS = {
    "exponential": 1,  # rate
    "gaussian": 2,  # mean, standard deviation
    "uniform": 2,  # lower, upper
}


def _ppf(name: str, params: Sequence[float], p: np.ndarray) -> np.ndarray:
    if name == "exponential":
        (lam,) = params
        if lam <= 0:
            raise ValueError("rate must be positive")
        return -np.log1p(-p) / lam
    if name == "gaussian":
        m, s = params
        if s <= 0:
            raise ValueError("standard deviation must be positive")
        return m + s * norm.ppf(p)
    if name == "uniform":
        a, b = params
        if not b > a:
            raise ValueError("need lower < upper")
        return a + (b - a) * p
    raise UnknownDistribution(name)


def discretize(name: str, params: Sequence[float], n: int, scheme: str = "equal-mass-quantile") -> DiscreteMeasure:
    """``n`` atoms of weight ``1/n`` at the quantiles ``(2k - 1) / (2n)``.

    Examples
    --------
    >>> discretize("uniform", (-1, 1), 2).atoms()
    [(-0.5, 0.5), (0.5, 0.5)]
    """
    if name not in DISTRIBUTIONS:
        raise UnknownDistribution(f"unknown distribution {name!r}; choose from {sorted(DISTRIBUTIONS)}")
    if scheme != "equal-mass-quantile":
        raise ValueError(f"unknown scheme {scheme!r}")
    if n < 2:
        raise ValueError("need at least two atoms")
    params = tuple(float(v) for v in params)
    if len(params) != DISTRIBUTIONS[name]:
        raise ValueError(f"{name} takes {DISTRIBUTIONS[name]} parameter(s)")
    p = (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)
    x = _ppf(name, params, p)
    return DiscreteMeasure(x, np.full(n, 1.0 / n))
