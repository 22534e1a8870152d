"""Finitely supported probability measures on the real line.

A ``DiscreteMeasure`` stores strictly increasing locations and positive
weights. Everything else in the package (quantile calculus, couplings, the LP
oracle) is built on top of the evaluators defined here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    InvalidRho,
    NonPositiveWeight,
    OutOfRange,
    UnnormalizedWeights,
)

__all__ = [
    "DEFAULT_TOL",
    "GRID_SNAP",
    "DiscreteMeasure",
    "OrderReport",
    "from_atoms",
    "cdf",
    "quantile",
    "merged_grid",
    "wasserstein_1d",
    "check_order",
    "mean_and_moment",
    "is_symmetric",
]

DEFAULT_TOL = 1e-9
NORMALIZATION_TOL = 1e-12
# Two cumulative levels closer than this are treated as the same breakpoint.
# Only floating-point dust (e.g. 0.1 + 0.2 against 0.3) is merged this way.
GRID_SNAP = 1e-13


class DiscreteMeasure:
    """Probability measure with finitely many atoms.

    Instances are immutable: the arrays exposed by ``locations``, ``weights``
    and ``cumulative`` are read-only views.
    """

    __slots__ = ("_x", "_w", "_cum")

    def __init__(self, locations: np.ndarray, weights: np.ndarray):
        x = np.array(locations, dtype=float)
        w = np.array(weights, dtype=float)
        cum = np.cumsum(w)
        cum[-1] = 1.0
        for arr in (x, w, cum):
            arr.setflags(write=False)
        self._x = x
        self._w = w
        self._cum = cum

    @property
    def locations(self) -> np.ndarray:
        return self._x

    @property
    def weights(self) -> np.ndarray:
        return self._w

    @property
    def cumulative(self) -> np.ndarray:
        """Right-continuous CDF values at the atoms; the last entry is exactly 1."""
        return self._cum

    @property
    def n_atoms(self) -> int:
        return len(self._x)

    def __len__(self) -> int:
        return len(self._x)

    @property
    def mean(self) -> float:
        return float(np.dot(self._x, self._w))

    def atoms(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self._x, self._w)]

    def reflect(self) -> "DiscreteMeasure":
        """Image measure under x -> -x."""
        return DiscreteMeasure(-self._x[::-1], self._w[::-1])

    def shift(self, t: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self._x + t, self._w)

    def to_dict(self) -> dict:
        return {"atoms": [{"x": float(a), "w": float(b)} for a, b in zip(self._x, self._w)]}

    @classmethod
    def from_dict(cls, data: dict, normalize: bool = False) -> "DiscreteMeasure":
        try:
            pairs = [(float(a["x"]), float(a["w"])) for a in data["atoms"]]
        except (KeyError, TypeError) as exc:
            raise EmptyInput(f"malformed measure document: {exc}") from exc
        return from_atoms(pairs, normalize=normalize)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return np.array_equal(self._x, other._x) and np.array_equal(self._w, other._w)

    def __hash__(self) -> int:
        return hash((self._x.tobytes(), self._w.tobytes()))

    def __repr__(self) -> str:
        body = ", ".join(f"{a:.6g}: {b:.6g}" for a, b in zip(self._x, self._w))
        return f"DiscreteMeasure({{{body}}})"


@dataclass(frozen=True)
class OrderReport:
    equal_mean: bool
    cx: bool
    dcx: bool
    icx: bool
    strict: bool
    max_violation: float

    def to_dict(self) -> dict:
        return {
            "equal_mean": self.equal_mean,
            "cx": self.cx,
            "dcx": self.dcx,
            "icx": self.icx,
            "strict": self.strict,
            "max_violation": self.max_violation,
        }


def from_atoms(pairs: Iterable[Sequence[float]], normalize: bool = False) -> DiscreteMeasure:
    """Build a measure from ``(location, weight)`` pairs.

    Duplicate locations are merged by summing their weights. Without
    ``normalize`` the weights must already sum to one within 1e-12.

    Examples
    --------
    >>> from_atoms([(1, 0.3), (1, 0.7)]).atoms()
    [(1.0, 1.0)]
    """
    arr = np.asarray(list(pairs), dtype=float)
    if arr.size == 0:
        raise EmptyInput("a measure needs at least one atom")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise EmptyInput("atoms must be (location, weight) pairs")
    x, w = arr[:, 0], arr[:, 1]
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(w)):
        raise OutOfRange("atom locations and weights must be finite")
    if np.any(w <= 0):
        raise NonPositiveWeight("all weights must be strictly positive")
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    ux, start = np.unique(x, return_index=True)
    uw = np.add.reduceat(w, start)
    total = float(uw.sum())
    if not normalize and abs(total - 1.0) > NORMALIZATION_TOL:
        raise UnnormalizedWeights(f"weights sum to {total!r}, expected 1")
    return DiscreteMeasure(ux, uw / total)


def cdf(m: DiscreteMeasure, x, side: str = "right"):
    """F(x) for ``side='right'`` and the left limit F(x-) for ``side='left'``."""
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    idx = np.searchsorted(m.locations, x, side=side) - 1
    cum = np.concatenate(([0.0], m.cumulative))
    out = cum[np.asarray(idx) + 1]
    return float(out) if np.ndim(out) == 0 else out


def quantile(m: DiscreteMeasure, u):
    """Left-continuous quantile function inf{x : F(x) >= u} for u in (0, 1]."""
    uu = np.asarray(u, dtype=float)
    if np.any(uu <= 0.0) or np.any(uu > 1.0) or np.any(np.isnan(uu)):
        raise OutOfRange("quantile levels must lie in (0, 1]")
    idx = np.minimum(np.searchsorted(m.cumulative, uu, side="left"), m.n_atoms - 1)
    out = m.locations[idx]
    return float(out) if np.ndim(out) == 0 else out


def merged_grid(*cumulatives: np.ndarray) -> np.ndarray:
    """Sorted union of 0 and the given cumulative levels, dust-merged.

    Levels within ``GRID_SNAP`` of an already kept level are dropped; 0 and 1
    are always kept exactly.
    """
    pts = np.unique(np.concatenate([np.array([0.0, 1.0])] + [np.asarray(c, float) for c in cumulatives]))
    keep = [0.0]
    for p in pts[1:]:
        if p - keep[-1] > GRID_SNAP:
            keep.append(float(p))
    if keep[-1] != 1.0:
        keep[-1] = 1.0
    return np.array(keep)


def _cell_quantiles(m1: DiscreteMeasure, m2: DiscreteMeasure):
    grid = merged_grid(m1.cumulative, m2.cumulative)
    mid = 0.5 * (grid[:-1] + grid[1:])
    return grid, quantile(m1, mid), quantile(m2, mid)


def wasserstein_1d(m1: DiscreteMeasure, m2: DiscreteMeasure, rho: float = 1.0) -> float:
    """Exact W_rho between two discrete measures via their quantile functions.

    Parameters
    ----------
    m1, m2 : DiscreteMeasure
    rho : float
        Order of the distance, at least 1.

    Returns
    -------
    float
        ``(int_0^1 |F1^-1 - F2^-1|^rho du)^(1/rho)`` summed cell by cell over the
        merged breakpoint grid.
    """
    if not rho >= 1:
        raise InvalidRho(f"rho must be >= 1, got {rho!r}")
    grid, q1, q2 = _cell_quantiles(m1, m2)
    total = float(np.sum(np.abs(q1 - q2) ** rho * np.diff(grid)))
    return total ** (1.0 / rho)


def _scale(m1: DiscreteMeasure, m2: DiscreteMeasure) -> float:
    return 1.0 + max(float(np.dot(np.abs(m1.locations), m1.weights)),
                     float(np.dot(np.abs(m2.locations), m2.weights)))


def _integrated_gap(m1: DiscreteMeasure, m2: DiscreteMeasure) -> np.ndarray:
    grid, q1, q2 = _cell_quantiles(m1, m2)
    return np.concatenate(([0.0], np.cumsum((q1 - q2) * np.diff(grid))))


def check_order(m1: DiscreteMeasure, m2: DiscreteMeasure, tol: float = DEFAULT_TOL) -> OrderReport:
    """Compare ``m1`` and ``m2`` in the convex, decreasing and increasing convex orders.

    All checks use integrated quantile functions at the merged breakpoints,
    where the integrated difference is piecewise linear, so checking the
    breakpoints is exact. ``tol`` is relative to ``1 + max(E|X1|, E|X2|)``.
    """
    atol = tol * _scale(m1, m2)
    gap = _integrated_gap(m1, m2)
    worst = float(gap.min())
    dcx = worst >= -atol
    equal_mean = abs(float(gap[-1])) <= atol
    icx = float(_integrated_gap(m1.reflect(), m2.reflect()).min()) >= -atol
    strict = wasserstein_1d(m1, m2, 1.0) > atol
    return OrderReport(
        equal_mean=equal_mean,
        cx=dcx and equal_mean,
        dcx=dcx,
        icx=icx,
        strict=strict,
        max_violation=worst,
    )


def mean_and_moment(m: DiscreteMeasure, rho: float) -> tuple[float, float]:
    """Return ``(mean, int |x|^rho dm)``."""
    if not rho >= 0:
        raise InvalidRho(f"rho must be >= 0, got {rho!r}")
    return m.mean, float(np.dot(np.abs(m.locations) ** rho, m.weights))


def is_symmetric(m: DiscreteMeasure, tol: float = DEFAULT_TOL) -> tuple[bool, float]:
    """Test invariance of ``m`` under the reflection x -> 2*mean - x.

    Returns the verdict together with the mean, which is the only possible
    center of symmetry.
    """
    alpha = m.mean
    atol = tol * (1.0 + float(np.max(np.abs(m.locations))))
    mirrored = 2.0 * alpha - m.locations[::-1]
    ok = bool(
        np.allclose(mirrored, m.locations, rtol=0.0, atol=atol)
        and np.allclose(m.weights[::-1], m.weights, rtol=0.0, atol=tol)
    )
    return ok, alpha
