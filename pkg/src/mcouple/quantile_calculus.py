"""Step and piecewise-linear calculus on the unit interval.

The quantile functions of two discrete measures are step functions on (0, 1].
Integrating the positive and negative parts of their difference gives two
continuous nondecreasing piecewise-linear functions ``psi_plus`` and
``psi_minus`` with the same total mass ``gamma`` (when the means agree).
Every coupling in the package is obtained by matching these two functions
level by level, so this module also hosts the level-pairing engine used by the
builders.

Conventions
-----------
* Step functions are left-continuous: the value on ``(u[j-1], u[j]]``.
* Generalized inverses are left-continuous: ``inv(w) = inf{u : psi(u) >= w}``.
  Right limits are available through ``right_limit``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    IdenticalMeasures,
    MassMismatch,
    OrderViolation,
    SingleSignChangeViolation,
    UnequalMeans,
)
from .measures import (
    DEFAULT_TOL,
    GRID_SNAP,
    DiscreteMeasure,
    check_order,
    merged_grid,
    quantile,
)

__all__ = [
    "StepFunction",
    "PiecewiseLinear",
    "GeneralizedInverse",
    "LevelFlip",
    "ComposedMap",
    "BreakpointPartition",
    "QuantilePair",
    "LevelPiece",
    "LevelPairing",
    "quantile_pair",
    "psi_pair",
    "gen_inverse",
    "phi_maps",
    "chi_maps",
    "sign_pattern",
    "has_single_sign_change",
    "partition",
    "change_of_variables_check",
    "substitution_check",
    "pair_levels",
]

U_PLUS, U_MINUS, U_ZERO = "U+", "U-", "U0"


def _dedupe(points: np.ndarray, snap: float) -> np.ndarray:
    pts = np.sort(np.asarray(points, dtype=float))
    if pts.size == 0:
        return pts
    keep = [pts[0]]
    for p in pts[1:]:
        if p - keep[-1] > snap:
            keep.append(p)
    return np.array(keep)


class StepFunction:
    """Left-continuous step function on ``(breakpoints[0], breakpoints[-1]]``.

    ``values[j]`` is the value on ``(breakpoints[j], breakpoints[j+1]]``.
    Evaluation outside the domain clips to the first or last value.
    """

    __slots__ = ("breakpoints", "values")

    def __init__(self, breakpoints: Sequence[float], values: Sequence[float]):
        bp = np.array(breakpoints, dtype=float)
        vals = np.array(values, dtype=float)
        if bp.ndim != 1 or vals.ndim != 1 or len(bp) != len(vals) + 1 or len(vals) == 0:
            raise ValueError("need k+1 breakpoints for k values")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        bp.setflags(write=False)
        vals.setflags(write=False)
        self.breakpoints = bp
        self.values = vals

    @classmethod
    def quantile_of(cls, m: DiscreteMeasure) -> "StepFunction":
        """The quantile function of ``m``."""
        return cls(np.concatenate(([0.0], m.cumulative)), m.locations)

    def __call__(self, u):
        idx = np.searchsorted(self.breakpoints, u, side="left") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        out = self.values[idx]
        return float(out) if np.ndim(out) == 0 else out

    def right_limit(self, u):
        idx = np.searchsorted(self.breakpoints, u, side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        out = self.values[idx]
        return float(out) if np.ndim(out) == 0 else out

    def _combine(self, other: "StepFunction", op) -> "StepFunction":
        grid = _dedupe(np.concatenate((self.breakpoints, other.breakpoints)), GRID_SNAP)
        mid = 0.5 * (grid[:-1] + grid[1:])
        return StepFunction(grid, op(self(mid), other(mid)))

    def __sub__(self, other: "StepFunction") -> "StepFunction":
        return self._combine(other, np.subtract)

    def __add__(self, other: "StepFunction") -> "StepFunction":
        return self._combine(other, np.add)

    def positive_part(self) -> "StepFunction":
        return StepFunction(self.breakpoints, np.maximum(self.values, 0.0))

    def negative_part(self) -> "StepFunction":
        return StepFunction(self.breakpoints, np.maximum(-self.values, 0.0))

    def integral(self) -> float:
        return float(np.dot(self.values, np.diff(self.breakpoints)))

    def antiderivative(self) -> "PiecewiseLinear":
        """``u -> int_{start}^u f``; requires ``f >= 0``."""
        nodes = np.concatenate(([0.0], np.cumsum(self.values * np.diff(self.breakpoints))))
        return PiecewiseLinear(self.breakpoints, nodes)


class PiecewiseLinear:
    """Continuous nondecreasing piecewise-linear function given by its nodes."""

    __slots__ = ("nodes", "values")

    def __init__(self, nodes: Sequence[float], values: Sequence[float]):
        u = np.array(nodes, dtype=float)
        v = np.array(values, dtype=float)
        if u.ndim != 1 or u.shape != v.shape or len(u) < 2:
            raise ValueError("nodes and values must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(u) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(np.diff(v) < 0) or not np.all(np.isfinite(v)):
            raise ValueError("piecewise-linear values must be finite and nondecreasing")
        u.setflags(write=False)
        v.setflags(write=False)
        self.nodes = u
        self.values = v

    def __call__(self, u):
        out = np.interp(u, self.nodes, self.values)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.nodes)

    @property
    def total(self) -> float:
        return float(self.values[-1] - self.values[0])

    def inverse(self) -> "GeneralizedInverse":
        return GeneralizedInverse(self)


class GeneralizedInverse:
    """Left-continuous generalized inverse ``w -> inf{u : psi(u) >= w}``.

    The inverse is affine on every level interval swept by an increasing
    segment of ``psi`` and jumps across every flat segment. Levels above
    ``psi(1)`` map to the right end of the domain (no partner).
    """

    __slots__ = ("psi",)

    def __init__(self, psi: PiecewiseLinear):
        self.psi = psi

    def __call__(self, w):
        u, v = self.psi.nodes, self.psi.values
        ww = np.asarray(w, dtype=float)
        i = np.searchsorted(v, ww, side="left")
        out = np.empty(ww.shape)
        low = i == 0
        high = i >= len(v)
        mid = ~(low | high)
        out[low] = u[0]
        out[high] = u[-1]
        j = i[mid]
        out[mid] = u[j - 1] + (ww[mid] - v[j - 1]) / (v[j] - v[j - 1]) * (u[j] - u[j - 1])
        return float(out) if out.ndim == 0 else out

    def right_limit(self, w):
        """``sup{u : psi(u) <= w}``, the right limit of the inverse at ``w``."""
        u, v = self.psi.nodes, self.psi.values
        ww = np.asarray(w, dtype=float)
        i = np.searchsorted(v, ww, side="right")
        out = np.empty(ww.shape)
        low = i == 0
        high = i >= len(v)
        mid = ~(low | high)
        out[low] = u[0]
        out[high] = u[-1]
        j = i[mid]
        out[mid] = u[j - 1] + (ww[mid] - v[j - 1]) / (v[j] - v[j - 1]) * (u[j] - u[j - 1])
        return float(out) if out.ndim == 0 else out

    def jump_levels(self) -> np.ndarray:
        """Levels at which the inverse is discontinuous (flat segments of psi)."""
        v = self.psi.values
        flat = np.diff(v) == 0
        return np.unique(v[:-1][flat])

    def pieces(self) -> list[tuple[float, float, float, float]]:
        """``(w_lo, w_hi, u_lo, u_hi)`` for each increasing segment of psi."""
        u, v = self.psi.nodes, self.psi.values
        return [
            (float(v[k]), float(v[k + 1]), float(u[k]), float(u[k + 1]))
            for k in range(len(v) - 1)
            if v[k + 1] > v[k]
        ]


@dataclass(frozen=True)
class LevelFlip:
    """Affine involution of the level interval ``(lo, hi]``, identity elsewhere."""

    lo: float
    hi: float

    def __call__(self, w):
        ww = np.asarray(w, dtype=float)
        inside = (ww > self.lo) & (ww <= self.hi)
        out = np.where(inside, self.lo + self.hi - ww, ww)
        return float(out) if out.ndim == 0 else out


class ComposedMap:
    """The map ``u -> outer(flip(inner(u)))``, optionally followed by ``v -> 1 - v``.

    ``inner`` is a piecewise-linear function and ``outer`` a generalized
    inverse. The pair is kept symbolic; ``breakpoints`` lists every ``u`` where
    the composition may stop being affine.
    """

    def __init__(
        self,
        inner: PiecewiseLinear,
        outer: GeneralizedInverse,
        flip: LevelFlip | None = None,
        reflect_out: bool = False,
        name: str = "",
    ):
        self.inner = inner
        self.outer = outer
        self.flip = flip
        self.reflect_out = reflect_out
        self.name = name

    def __call__(self, u):
        w = self.inner(u)
        if self.flip is not None:
            w = self.flip(w)
        v = self.outer(w)
        return 1.0 - v if self.reflect_out else v

    def _level_preimages(self, levels: np.ndarray) -> np.ndarray:
        inv = self.inner.inverse()
        lo, hi = self.inner.values[0], self.inner.values[-1]
        lv = levels[(levels > lo) & (levels < hi)]
        return np.concatenate((inv(lv), inv.right_limit(lv))) if lv.size else np.empty(0)

    def breakpoints(self) -> np.ndarray:
        levels = np.asarray(self.outer.psi.values, dtype=float)
        extra = []
        if self.flip is not None:
            levels = np.concatenate((levels, self.flip(levels)))
            extra = [self.flip.lo, self.flip.hi]
        levels = np.concatenate((levels, np.asarray(extra, dtype=float)))
        pts = np.concatenate((self.inner.nodes, self._level_preimages(levels)))
        return np.unique(pts)


@dataclass(frozen=True)
class BreakpointPartition:
    """Cells ``(edges[k], edges[k+1]]`` with constant quantiles and a sign tag."""

    edges: np.ndarray
    tags: tuple[str, ...]
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.tags)

    def cells(self) -> list[tuple[float, float, str]]:
        return [(float(self.edges[k]), float(self.edges[k + 1]), self.tags[k]) for k in range(len(self.tags))]


class QuantilePair:
    """Both quantile functions on their merged grid, plus psi_plus and psi_minus.

    Attributes
    ----------
    edges : ndarray, shape (K+1,)
        Merged breakpoints of the two quantile functions.
    x, y : ndarray, shape (K,)
        Values of the mu- and nu-quantile functions on each cell.
    pos, neg : ndarray, shape (K,)
        Positive and negative parts of ``x - y``.
    P, M : ndarray, shape (K+1,)
        Node values of psi_plus and psi_minus.
    """

    def __init__(self, mu: DiscreteMeasure, nu: DiscreteMeasure):
        self.mu = mu
        self.nu = nu
        edges = merged_grid(mu.cumulative, nu.cumulative)
        mid = 0.5 * (edges[:-1] + edges[1:])
        self.edges = edges
        self.lengths = np.diff(edges)
        self.x = quantile(mu, mid)
        self.y = quantile(nu, mid)
        diff = self.x - self.y
        self.pos = np.maximum(diff, 0.0)
        self.neg = np.maximum(-diff, 0.0)
        self.P = np.concatenate(([0.0], np.cumsum(self.pos * self.lengths)))
        self.M = np.concatenate(([0.0], np.cumsum(self.neg * self.lengths)))
        self.tags = tuple(U_PLUS if d > 0 else U_MINUS if d < 0 else U_ZERO for d in diff)

    @property
    def gamma_plus(self) -> float:
        return float(self.P[-1])

    @property
    def gamma_minus(self) -> float:
        return float(self.M[-1])

    def psi_plus(self) -> PiecewiseLinear:
        return PiecewiseLinear(self.edges, self.P)

    def psi_minus(self) -> PiecewiseLinear:
        return PiecewiseLinear(self.edges, self.M)

    def level_snap(self) -> float:
        return 1e-12 * max(self.gamma_plus, self.gamma_minus, 1e-300)


def quantile_pair(mu: DiscreteMeasure, nu: DiscreteMeasure) -> QuantilePair:
    return QuantilePair(mu, nu)


def _mean_scale(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    return 1.0 + max(float(np.dot(np.abs(mu.locations), mu.weights)),
                     float(np.dot(np.abs(nu.locations), nu.weights)))


def psi_pair(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = DEFAULT_TOL):
    """Return ``(psi_plus, psi_minus, gamma)`` for a pair with equal means.

    Raises
    ------
    UnequalMeans
        If the means differ by more than ``tol`` (relative).
    IdenticalMeasures
        If ``gamma`` vanishes, i.e. ``mu == nu``.
    """
    qp = QuantilePair(mu, nu)
    atol = tol * _mean_scale(mu, nu)
    if abs(qp.gamma_plus - qp.gamma_minus) > atol:
        raise UnequalMeans(f"means differ: {mu.mean!r} vs {nu.mean!r}")
    if qp.gamma_plus <= atol:
        raise IdenticalMeasures("gamma vanishes: the two measures coincide")
    return qp.psi_plus(), qp.psi_minus(), qp.gamma_plus


def gen_inverse(psi: PiecewiseLinear) -> GeneralizedInverse:
    return GeneralizedInverse(psi)


def phi_maps(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = DEFAULT_TOL):
    """Return ``(phi, phi_tilde, u_d)``.

    ``phi`` sends ``u`` to the level-matched point on the psi_minus side and
    ``phi_tilde`` goes back. ``u_d`` is the psi_plus-preimage of the total
    psi_minus mass; it equals 1 when the means agree.
    """
    if not check_order(mu, nu, tol).dcx:
        raise OrderViolation("the pair is not ordered in the decreasing convex order")
    qp = QuantilePair(mu, nu)
    psi_p, psi_m = qp.psi_plus(), qp.psi_minus()
    if qp.gamma_plus == 0.0:
        raise IdenticalMeasures("psi_plus vanishes identically")
    phi = ComposedMap(psi_p, psi_m.inverse(), name="phi")
    phi_t = ComposedMap(psi_m, psi_p.inverse(), name="phi_tilde")
    if abs(qp.gamma_plus - qp.gamma_minus) <= qp.level_snap():
        u_d = 1.0
    else:
        u_d = float(psi_p.inverse()(qp.gamma_minus))
    return phi, phi_t, u_d


def sign_pattern(mu: DiscreteMeasure, nu: DiscreteMeasure) -> list[int]:
    """Signs of the quantile difference on consecutive cells, zeros removed and runs collapsed."""
    qp = QuantilePair(mu, nu)
    out: list[int] = []
    for d in np.sign(qp.x - qp.y):
        if d != 0 and (not out or out[-1] != d):
            out.append(int(d))
    return out


def has_single_sign_change(mu: DiscreteMeasure, nu: DiscreteMeasure) -> bool:
    return sign_pattern(mu, nu) in ([], [1], [-1], [1, -1])


def chi_maps(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = DEFAULT_TOL):
    """Return ``(chi_plus, chi_minus, Gamma)`` for a single-crossing pair.

    ``chi_minus(u) = gamma - psi_minus(1 - u)`` accumulates the negative part
    from the right end, and ``Gamma = chi_minus^{-1} o chi_plus``.
    """
    rep = check_order(mu, nu, tol)
    if not rep.cx:
        raise OrderViolation("the pair is not in convex order")
    if not rep.strict:
        raise IdenticalMeasures("the two measures coincide")
    if not has_single_sign_change(mu, nu):
        raise SingleSignChangeViolation(f"sign pattern {sign_pattern(mu, nu)} is not (+, -)")
    qp = QuantilePair(mu, nu)
    gamma = qp.gamma_plus
    chi_p = qp.psi_plus()
    vals = np.clip(gamma - qp.M[::-1], 0.0, gamma)
    vals[0] = 0.0
    vals[-1] = gamma
    vals = np.maximum.accumulate(vals)
    chi_m = PiecewiseLinear(1.0 - qp.edges[::-1], vals)
    return chi_p, chi_m, ComposedMap(chi_p, chi_m.inverse(), name="Gamma")


def partition(mu: DiscreteMeasure, nu: DiscreteMeasure, maps: Sequence[ComposedMap] = ()) -> BreakpointPartition:
    """Common refinement on which both quantiles are constant and every map is affine.

    Because each map's outer function has a node at every quantile breakpoint,
    refining at the map breakpoints also makes ``F_nu^{-1} o map`` constant.
    """
    base = merged_grid(mu.cumulative, nu.cumulative)
    pts = [base]
    for mp in maps:
        b = mp.breakpoints()
        pts.append(b[(b > 0.0) & (b < 1.0)])
    edges = _dedupe(np.concatenate(pts), GRID_SNAP)
    edges[0], edges[-1] = 0.0, 1.0
    mid = 0.5 * (edges[:-1] + edges[1:])
    x, y = quantile(mu, mid), quantile(nu, mid)
    tags = tuple(U_PLUS if a > b else U_MINUS if a < b else U_ZERO for a, b in zip(x, y))
    for arr in (edges, x, y):
        arr.setflags(write=False)
    return BreakpointPartition(edges=edges, tags=tags, x=x, y=y)


def _step_cells_exact(f: StepFunction, g: PiecewiseLinear, lo: float, hi: float,
                      levels: np.ndarray) -> np.ndarray:
    """Cells of ``(lo, hi]`` refined at the breakpoints of ``f`` and at g-preimages of ``levels``."""
    inv = g.inverse()
    lv = levels[(levels > g.values[0]) & (levels < g.values[-1])]
    pts = np.concatenate(([lo, hi], f.breakpoints, g.nodes, inv(lv), inv.right_limit(lv)))
    pts = pts[(pts >= lo) & (pts <= hi)]
    return _dedupe(pts, 0.0)


def change_of_variables_check(f1: StepFunction, f2: StepFunction, u0: float, h: StepFunction,
                              tol: float = 1e-12) -> tuple[float, float]:
    """Both sides of ``int_0^u0 h(G(u)) f1(u) du = int_0^1 h(v) f2(v) dv``.

    Here ``G = Psi2^{-1} o Psi1`` with ``Psi_i`` the antiderivatives of the
    nonnegative densities. Both sides are computed exactly by summing over
    cells on which every integrand is constant.
    """
    if np.any(f1.values < 0) or np.any(f2.values < 0):
        raise ValueError("densities must be nonnegative")
    psi1, psi2 = f1.antiderivative(), f2.antiderivative()
    m1, m2 = psi1(u0), psi2.total
    if abs(m1 - m2) > tol * max(1.0, abs(m2)):
        raise MassMismatch(f"mass up to u0 is {m1!r}, target mass is {m2!r}")
    gmap = ComposedMap(psi1, psi2.inverse())
    edges = _step_cells_exact(f1, psi1, f1.breakpoints[0], u0, psi2(h.breakpoints))
    mid = 0.5 * (edges[:-1] + edges[1:])
    lhs = float(np.sum(h(gmap(mid)) * f1(mid) * np.diff(edges)))
    rgrid = _dedupe(np.concatenate((f2.breakpoints, h.breakpoints)), 0.0)
    rgrid = rgrid[(rgrid >= f2.breakpoints[0]) & (rgrid <= f2.breakpoints[-1])]
    rmid = 0.5 * (rgrid[:-1] + rgrid[1:])
    rhs = float(np.sum(h(rmid) * f2(rmid) * np.diff(rgrid)))
    return lhs, rhs


def substitution_check(psi: PiecewiseLinear, f: StepFunction) -> tuple[float, float]:
    """Both sides of ``int f(psi(s)) dpsi(s) = int_{psi(start)}^{psi(end)} f(t) dt``, exactly."""
    edges = _step_cells_exact(f, psi, psi.nodes[0], psi.nodes[-1], f.breakpoints)
    mid = 0.5 * (edges[:-1] + edges[1:])
    dpsi = np.diff(psi(edges))
    lhs = float(np.sum(f(psi(mid)) * dpsi))
    lo, hi = psi.values[0], psi.values[-1]
    grid = np.unique(np.concatenate(([lo, hi], f.breakpoints)))
    grid = grid[(grid >= lo) & (grid <= hi)]
    tmid = 0.5 * (grid[:-1] + grid[1:])
    rhs = float(np.sum(f(tmid) * np.diff(grid)))
    return lhs, rhs


# ---------------------------------------------------------------------------
# Level pairing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevelPiece:
    """``g(w) = sign * w + offset`` on the level interval ``(lo, hi]``."""

    lo: float
    hi: float
    sign: int
    offset: float

    def __call__(self, w):
        return self.sign * w + self.offset


@dataclass(frozen=True)
class LevelPairing:
    """Elementary matches between psi_plus levels and psi_minus levels.

    Row ``i`` matches the levels ``(w_lo[i], w_hi[i]]`` of the U+ cell
    ``kp[i]`` with their images under the level map inside the U- cell
    ``km[i]``. ``u_a, u_b`` are the U+ positions at ``w_lo, w_hi`` and
    ``v_a, v_b`` the U- positions at the images of ``w_lo, w_hi`` (so
    ``v_a > v_b`` for a decreasing level map). The tail lists the pieces of
    U+ cells above ``w_max`` as ``(cell, u_lo, u_hi)``.
    """

    w_lo: np.ndarray
    w_hi: np.ndarray
    kp: np.ndarray
    km: np.ndarray
    u_a: np.ndarray
    u_b: np.ndarray
    v_a: np.ndarray
    v_b: np.ndarray
    tail: tuple[tuple[int, float, float], ...]
    w_max: float


def _position(edges, nodes, slopes, k, w):
    """Position inside cell ``k`` at level ``w`` of an increasing segment."""
    lo, hi = edges[k], edges[k + 1]
    u = lo + (w - nodes[k]) / slopes[k]
    u = np.where(w == nodes[k + 1], hi, u)
    u = np.where(w == nodes[k], lo, u)
    snap = GRID_SNAP
    u = np.where(np.abs(u - hi) <= snap, hi, u)
    u = np.where(np.abs(u - lo) <= snap, lo, u)
    return np.clip(u, lo, hi)


def pair_levels(qp: QuantilePair, pieces: Sequence[LevelPiece], w_max: float | None = None) -> LevelPairing:
    """Match psi_plus levels in ``(0, w_max]`` with psi_minus levels through a level map.

    ``pieces`` must describe a measure-preserving bijection of ``(0, w_max]``
    built from slope +1 or -1 pieces. With the identity map this produces the
    inverse transform pairing; with ``w -> w_max - w`` the nonincreasing one.
    """
    eps = qp.level_snap()
    gp, gm = qp.gamma_plus, qp.gamma_minus
    if w_max is None:
        w_max = gp
    w_max = float(w_max)
    edges, P, M = qp.edges, qp.P, qp.M
    plus = np.flatnonzero(qp.pos > 0)
    minus = np.flatnonzero(qp.neg > 0)
    # treat sub-snap differences in total mass as rounding
    Mn = M.copy()
    if abs(gm - w_max) <= eps:
        Mn[Mn >= gm] = w_max
        Mn = np.minimum(Mn, w_max)
    cand = [np.array([0.0, w_max]), P[plus + 1]]
    for pc in pieces:
        cand.append(np.array([pc.lo, pc.hi]))
        img = Mn[minus + 1]
        pre = pc.sign * (img - pc.offset)
        cand.append(pre[(pre > pc.lo) & (pre < pc.hi)])
    w = np.concatenate(cand)
    w = w[(w >= 0.0) & (w <= w_max)]
    w = _dedupe(w, eps)
    w[0], w[-1] = 0.0, w_max
    w_lo, w_hi = w[:-1], w[1:]
    mid = 0.5 * (w_lo + w_hi)

    plus_hi = P[plus + 1]
    kp = plus[np.minimum(np.searchsorted(plus_hi, mid, side="left"), len(plus) - 1)]
    piece_hi = np.array([pc.hi for pc in pieces])
    pidx = np.minimum(np.searchsorted(piece_hi, mid, side="left"), len(pieces) - 1)
    sgn = np.array([pieces[i].sign for i in pidx], dtype=float)
    off = np.array([pieces[i].offset for i in pidx], dtype=float)
    gmid = sgn * mid + off
    minus_hi = Mn[minus + 1]
    km = minus[np.minimum(np.searchsorted(minus_hi, gmid, side="left"), len(minus) - 1)]

    u_a = _position(edges, P, qp.pos, kp, w_lo)
    u_b = _position(edges, P, qp.pos, kp, w_hi)
    g_lo = sgn * w_lo + off
    g_hi = sgn * w_hi + off
    # snap images onto psi_minus nodes so adjacent subcells share endpoints
    for arr in (g_lo, g_hi):
        for node_arr in (Mn[km], Mn[km + 1]):
            close = np.abs(arr - node_arr) <= eps
            arr[close] = node_arr[close]
    v_a = _position(edges, Mn, qp.neg, km, g_lo)
    v_b = _position(edges, Mn, qp.neg, km, g_hi)

    tail: list[tuple[int, float, float]] = []
    if gp - w_max > eps:
        for k in plus:
            if P[k + 1] <= w_max:
                continue
            lo = edges[k] if P[k] >= w_max else float(_position(edges, P, qp.pos, k, np.array(w_max)))
            if edges[k + 1] > lo:
                tail.append((int(k), float(lo), float(edges[k + 1])))

    return LevelPairing(
        w_lo=w_lo, w_hi=w_hi, kp=kp, km=km,
        u_a=u_a, u_b=u_b, v_a=v_a, v_b=v_b,
        tail=tuple(tail), w_max=w_max,
    )
