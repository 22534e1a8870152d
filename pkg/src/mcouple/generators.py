"""Random and canonical instances for tests, demos and experiments."""

from __future__ import annotations

import numpy as np

from .measures import DiscreteMeasure, check_order, from_atoms
from .quantile_calculus import has_single_sign_change

__all__ = [
    "rademacher_pair",
    "spread",
    "random_measure",
    "random_cx_pair",
    "random_single_crossing_pair",
    "random_symmetric_pair",
    "random_dcx_pair",
    "random_icx_pair",
    "random_pair",
]


def rademacher_pair(a: float, b: float) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """``(1/2 d_{-a} + 1/2 d_a, 1/2 d_{-b} + 1/2 d_b)`` with ``0 < a < b``."""
    return from_atoms([(-a, 0.5), (a, 0.5)]), from_atoms([(-b, 0.5), (b, 0.5)])


def spread(m: DiscreteMeasure, i: int, left: float, right: float, frac: float = 1.0) -> DiscreteMeasure:
    """Mean-preserving spread of a fraction of atom ``i`` to ``x - left`` and ``x + right``."""
    x, w = float(m.locations[i]), float(m.weights[i])
    moved = frac * w
    pairs = [(float(a), float(b)) for k, (a, b) in enumerate(m.atoms()) if k != i]
    pairs.append((x - left, moved * right / (left + right)))
    pairs.append((x + right, moved * left / (left + right)))
    if frac < 1.0:
        pairs.append((x, w - moved))
    return from_atoms(pairs, normalize=True)


def random_measure(rng: np.random.Generator, k: int, scale: float = 3.0) -> DiscreteMeasure:
    x = np.unique(np.round(rng.normal(0.0, scale, size=k), 6))
    w = rng.dirichlet(np.full(len(x), 2.0))
    w = np.maximum(w, 1e-3)
    return from_atoms(zip(x, w), normalize=True)


def random_cx_pair(rng: np.random.Generator, max_mu: int = 5, max_nu: int = 10,
                   ) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """A strictly convex-ordered pair obtained by one to three random spreads."""
    while True:
        mu = random_measure(rng, int(rng.integers(1, max_mu + 1)))
        nu = mu
        for _ in range(int(rng.integers(1, 4))):
            i = int(rng.integers(0, nu.n_atoms))
            frac = 1.0 if rng.random() < 0.5 else float(rng.uniform(0.3, 0.9))
            nu = spread(nu, i, float(rng.uniform(0.2, 3.0)), float(rng.uniform(0.2, 3.0)), frac)
        if nu.n_atoms <= max_nu:
            return mu, nu


def random_single_crossing_pair(rng: np.random.Generator, max_mu: int = 5, max_nu: int = 10,
                                tries: int = 1000) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """A strictly convex-ordered pair whose quantile difference changes sign once."""
    for _ in range(tries):
        mu, nu = random_cx_pair(rng, max_mu, max_nu)
        if has_single_sign_change(mu, nu):
            return mu, nu
    raise RuntimeError("no single-crossing pair found")


def random_symmetric_pair(rng: np.random.Generator, max_half: int = 3) -> tuple[DiscreteMeasure, DiscreteMeasure, float]:
    """Both measures symmetric about a common center, with a single crossing."""
    while True:
        c = float(np.round(rng.normal(0.0, 2.0), 3))
        k = int(rng.integers(1, max_half + 1))
        half = np.unique(np.round(rng.uniform(0.1, 3.0, size=k), 4))
        hw = rng.dirichlet(np.full(len(half), 2.0)) * 0.5
        mu_pairs = [(c - a, w) for a, w in zip(half, hw)] + [(c + a, w) for a, w in zip(half, hw)]
        if rng.random() < 0.5:
            mu_pairs.append((c, 0.3))
        mu = from_atoms(mu_pairs, normalize=True)
        lam = float(rng.uniform(1.1, 2.5))
        nu = from_atoms([(c + lam * (x - c), w) for x, w in mu.atoms()], normalize=True)
        if rng.random() < 0.5:
            # symmetric pair of outward spreads
            j = int(rng.integers(0, nu.n_atoms))
            x = float(nu.locations[j])
            d = float(rng.uniform(0.2, 1.0))
            jm = int(np.argmin(np.abs(nu.locations - (2 * c - x))))
            if jm != j:
                nu = spread(nu, j, d, d)
                jm = int(np.argmin(np.abs(nu.locations - (2 * c - x))))
                nu = spread(nu, jm, d, d)
        if has_single_sign_change(mu, nu) and check_order(mu, nu).cx:
            return mu, nu, c


def random_dcx_pair(rng: np.random.Generator, max_mu: int = 5, max_nu: int = 10,
                    ) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """A pair in the decreasing convex order; about half of them have equal means."""
    mu, nu = random_cx_pair(rng, max_mu, max_nu)
    if rng.random() < 0.5:
        return mu, nu
    if rng.random() < 0.5:
        return mu, nu.shift(-float(rng.uniform(0.05, 2.0)))
    # push a random subset of atoms down (a stochastically smaller measure)
    drop = rng.uniform(0.0, 1.5, size=nu.n_atoms) * (rng.random(nu.n_atoms) < 0.5)
    return mu, from_atoms(zip(nu.locations - drop, nu.weights), normalize=True)


def random_icx_pair(rng: np.random.Generator, max_mu: int = 5, max_nu: int = 10,
                    ) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    mu, nu = random_dcx_pair(rng, max_mu, max_nu)
    return mu.reflect(), nu.reflect()


def random_pair(rng: np.random.Generator, max_atoms: int = 8) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """Two unrelated random measures; occasionally in convex order."""
    if rng.random() < 0.4:
        return random_cx_pair(rng, max(1, max_atoms // 2), max_atoms)
    return (random_measure(rng, int(rng.integers(1, max_atoms + 1))),
            random_measure(rng, int(rng.integers(1, max_atoms + 1))))
