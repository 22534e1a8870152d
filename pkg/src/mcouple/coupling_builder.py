"""Kernels on the quantile scale and the joint couplings they induce.

A kernel is a list of ``KernelCell`` objects tiling (0, 1]. On a cell the
mu-quantile ``x`` and the nu-quantile ``stay_y`` are constant; the kernel keeps
mass ``1 - sum(p)`` at ``stay_y`` and sends ``p`` to each target. Each target
probability is chosen so that the cell's conditional mean is exactly ``x``.
Integrating the cells over the quantile interval of a mu-atom gives the joint
law.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import KernelBranchViolation, OrderViolation
from .measures import DEFAULT_TOL, DiscreteMeasure, check_order, merged_grid, quantile
from .qparam import QParam, level_pieces
from .quantile_calculus import (
    U_MINUS,
    U_PLUS,
    U_ZERO,
    LevelPairing,
    LevelPiece,
    QuantilePair,
    pair_levels,
)

__all__ = [
    "KernelCell",
    "JointMeasure",
    "DUST",
    "build_kernel",
    "lift_to_joint",
    "build_coupling",
    "build_itmc",
    "build_supermartingale",
    "supermartingale_kernel",
    "build_submartingale",
    "comonotone",
    "symmetric_kernel",
    "sample",
    "mix_kernels",
]

TAIL = "tail"
DUST = 1e-15


@dataclass(frozen=True)
class KernelCell:
    a: float
    b: float
    x: float
    stay_y: float
    targets: tuple[tuple[float, float], ...]
    tag: str

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def stay_weight(self) -> float:
        return 1.0 - sum(p for _, p in self.targets)

    def mean(self) -> float:
        return self.stay_weight * self.stay_y + sum(y * p for y, p in self.targets)


class JointMeasure:
    """Finitely supported probability measure on the plane.

    Atoms are sorted by ``(x, y)`` and deduplicated. Atoms lighter than
    ``DUST`` are dropped when built through ``from_triples``.
    """

    __slots__ = ("_x", "_y", "_w")

    def __init__(self, x: np.ndarray, y: np.ndarray, w: np.ndarray):
        for arr in (x, y, w):
            arr.setflags(write=False)
        self._x, self._y, self._w = x, y, w

    @classmethod
    def from_triples(cls, x, y, w, drop_dust: bool = True) -> "JointMeasure":
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        w = np.asarray(w, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("a joint measure needs at least one atom")
        order = np.lexsort((y, x))
        x, y, w = x[order], y[order], w[order]
        new = np.ones(len(x), dtype=bool)
        new[1:] = (x[1:] != x[:-1]) | (y[1:] != y[:-1])
        start = np.flatnonzero(new)
        x, y, w = x[start], y[start], np.add.reduceat(w, start)
        if drop_dust:
            keep = w >= DUST
            total = float(w.sum())
            x, y, w = x[keep], y[keep], w[keep]
            w = w * (total / float(w.sum()))
        return cls(np.array(x), np.array(y), np.array(w))

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def y(self) -> np.ndarray:
        return self._y

    @property
    def w(self) -> np.ndarray:
        return self._w

    @property
    def n_atoms(self) -> int:
        return len(self._w)

    def atoms(self) -> list[tuple[float, float, float]]:
        return [(float(a), float(b), float(c)) for a, b, c in zip(self._x, self._y, self._w)]

    def as_dict(self) -> dict[tuple[float, float], float]:
        return {(float(a), float(b)): float(c) for a, b, c in zip(self._x, self._y, self._w)}

    def _marginal(self, v: np.ndarray) -> DiscreteMeasure:
        ux, inv = np.unique(v, return_inverse=True)
        return DiscreteMeasure(ux, np.bincount(inv, weights=self._w))

    def marginal_x(self) -> DiscreteMeasure:
        return self._marginal(self._x)

    def marginal_y(self) -> DiscreteMeasure:
        return self._marginal(self._y)

    def conditional_means(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(x atoms, x-marginal weights, E[Y | X = x])``."""
        ux, inv = np.unique(self._x, return_inverse=True)
        mass = np.bincount(inv, weights=self._w)
        first = np.bincount(inv, weights=self._w * self._y)
        return ux, mass, first / mass

    def reflect(self) -> "JointMeasure":
        return JointMeasure.from_triples(-self._x, -self._y, self._w, drop_dust=False)

    def shift(self, tx: float, ty: float) -> "JointMeasure":
        return JointMeasure.from_triples(self._x + tx, self._y + ty, self._w, drop_dust=False)

    def mix(self, other: "JointMeasure", lam: float) -> "JointMeasure":
        return JointMeasure.from_triples(
            np.concatenate((self._x, other._x)),
            np.concatenate((self._y, other._y)),
            np.concatenate((lam * self._w, (1.0 - lam) * other._w)),
        )

    def to_dict(self) -> dict:
        return {"atoms": [{"x": a, "y": b, "w": c} for a, b, c in self.atoms()]}

    @classmethod
    def from_dict(cls, data: dict) -> "JointMeasure":
        atoms = data["atoms"]
        return cls.from_triples(
            [a["x"] for a in atoms], [a["y"] for a in atoms], [a["w"] for a in atoms], drop_dust=False
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,y,w\n")
        for a, b, c in self.atoms():
            buf.write(f"{a!r},{b!r},{c!r}\n")
        return buf.getvalue()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, JointMeasure):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip((self._x, self._y, self._w), (other._x, other._y, other._w)))

    def __hash__(self) -> int:
        return hash((self._x.tobytes(), self._y.tobytes(), self._w.tobytes()))

    def __repr__(self) -> str:
        body = ", ".join(f"({a:.6g}, {b:.6g}): {c:.6g}" for a, b, c in self.atoms())
        return f"JointMeasure({{{body}}})"


def _check_cell(cell: KernelCell) -> None:
    x, s = cell.x, cell.stay_y
    total = 0.0
    for y, p in cell.targets:
        total += p
        if cell.tag == U_PLUS and not (y > x > s):
            raise KernelBranchViolation(f"U+ cell {cell.a, cell.b}: need target {y} > x {x} > stay {s}")
        if cell.tag == U_MINUS and not (y < x < s):
            raise KernelBranchViolation(f"U- cell {cell.a, cell.b}: need target {y} < x {x} < stay {s}")
        if not 0.0 <= p <= 1.0:
            raise KernelBranchViolation(f"target probability {p} outside [0, 1]")
    if total > 1.0 + 1e-12:
        raise KernelBranchViolation(f"target probabilities sum to {total}")


def _zero_cells(qp: QuantilePair) -> list[KernelCell]:
    return [
        KernelCell(float(qp.edges[k]), float(qp.edges[k + 1]), float(qp.x[k]), float(qp.y[k]), (), U_ZERO)
        for k in range(len(qp.lengths))
        if qp.pos[k] == 0 and qp.neg[k] == 0
    ]


def _cells_from_pairing(qp: QuantilePair, pr: LevelPairing) -> list[KernelCell]:
    cells: list[KernelCell] = []
    xs, ys = qp.x, qp.y
    for i in range(len(pr.w_lo)):
        kp, km = int(pr.kp[i]), int(pr.km[i])
        a, b = float(pr.u_a[i]), float(pr.u_b[i])
        if b > a:
            x, s, t = float(xs[kp]), float(ys[kp]), float(ys[km])
            cells.append(KernelCell(a, b, x, s, ((t, (x - s) / (t - s)),), U_PLUS))
        lo, hi = float(min(pr.v_a[i], pr.v_b[i])), float(max(pr.v_a[i], pr.v_b[i]))
        if hi > lo:
            x, s, t = float(xs[km]), float(ys[km]), float(ys[kp])
            cells.append(KernelCell(lo, hi, x, s, ((t, (x - s) / (t - s)),), U_MINUS))
    for k, lo, hi in pr.tail:
        cells.append(KernelCell(lo, hi, float(xs[k]), float(ys[k]), (), TAIL))
    return cells


def _blocks(qp: QuantilePair, idx: np.ndarray, density: np.ndarray) -> list[tuple[float, float]]:
    """Group cells by their nu-quantile value; return ``(y, psi mass / gamma)`` per block."""
    gamma = qp.gamma_plus
    out: dict[float, float] = {}
    for k in idx:
        y = float(qp.y[k])
        out[y] = out.get(y, 0.0) + float(density[k] * qp.lengths[k]) / gamma
    return sorted(out.items())


def _product_cells(qp: QuantilePair) -> list[KernelCell]:
    plus = np.flatnonzero(qp.pos > 0)
    minus = np.flatnonzero(qp.neg > 0)
    to_minus = _blocks(qp, minus, qp.neg)
    to_plus = _blocks(qp, plus, qp.pos)
    cells = []
    for k in range(len(qp.lengths)):
        x, s = float(qp.x[k]), float(qp.y[k])
        if qp.pos[k] > 0:
            blocks, tag = to_minus, U_PLUS
        elif qp.neg[k] > 0:
            blocks, tag = to_plus, U_MINUS
        else:
            continue
        targets = tuple((y, pi * (x - s) / (y - s)) for y, pi in blocks)
        cells.append(KernelCell(float(qp.edges[k]), float(qp.edges[k + 1]), x, s, targets, tag))
    return cells


def _merge_targets(items: Iterable[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    acc: dict[float, float] = {}
    for y, p in items:
        acc[y] = acc.get(y, 0.0) + p
    return tuple(sorted((y, p) for y, p in acc.items() if p > 0.0))


def mix_kernels(lam: float, k1: Sequence[KernelCell], k2: Sequence[KernelCell]) -> list[KernelCell]:
    """Pointwise convex combination of two kernels on their common refinement."""
    edges = np.unique(np.concatenate(([c.a for c in k1], [c.b for c in k1], [c.a for c in k2], [c.b for c in k2])))
    r1 = np.array([c.b for c in k1])
    r2 = np.array([c.b for c in k2])
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        c1 = k1[min(int(np.searchsorted(r1, mid)), len(k1) - 1)]
        c2 = k2[min(int(np.searchsorted(r2, mid)), len(k2) - 1)]
        targets = _merge_targets(
            [(y, lam * p) for y, p in c1.targets] + [(y, (1.0 - lam) * p) for y, p in c2.targets]
        )
        tag = c1.tag if c1.tag == c2.tag else (c1.tag if c1.targets else c2.tag)
        out.append(KernelCell(float(lo), float(hi), c1.x, c1.stay_y, targets, tag))
    return out


def _sorted(cells: list[KernelCell]) -> list[KernelCell]:
    return sorted(cells, key=lambda c: c.a)


def build_kernel(q: QParam, mu: DiscreteMeasure, nu: DiscreteMeasure) -> list[KernelCell]:
    """Materialize the quantile-scale kernel of ``q`` as exact cells.

    Raises
    ------
    KernelBranchViolation
        If some cell sends mass to the wrong side of ``x``; this can only
        happen for a parameter that is not valid for ``(mu, nu)``.
    """
    q.check(mu, nu)
    if q.kind == "Mixture":
        return mix_kernels(q.lam, build_kernel(q.left, mu, nu), build_kernel(q.right, mu, nu))
    qp = QuantilePair(mu, nu)
    if q.is_deterministic:
        cells = _cells_from_pairing(qp, pair_levels(qp, level_pieces(q, qp)))
    else:
        cells = _product_cells(qp)
    cells = _sorted(cells + _zero_cells(qp))
    for c in cells:
        _check_cell(c)
    return cells


def lift_to_joint(cells: Sequence[KernelCell], mu: DiscreteMeasure | None = None) -> JointMeasure:
    """Integrate the kernel over (0, 1] and return the joint law of ``(x, y)``.

    Each cell lies inside the quantile interval of a single mu-atom, so the
    integral is a finite sum of cell lengths times kernel weights. When ``mu``
    is given, the cell values are checked against its quantile function.
    """
    xs, ys, ws = [], [], []
    for c in cells:
        L = c.b - c.a
        if L <= 0:
            continue
        xs.append(c.x)
        ys.append(c.stay_y)
        ws.append(L * c.stay_weight)
        for y, p in c.targets:
            xs.append(c.x)
            ys.append(y)
            ws.append(L * p)
    if mu is not None:
        mids = np.array([0.5 * (c.a + c.b) for c in cells if c.b > c.a])
        if not np.array_equal(quantile(mu, mids), np.array([c.x for c in cells if c.b > c.a])):
            raise ValueError("kernel cells do not match the quantile function of mu")
    w = np.array(ws)
    w = np.where(np.abs(w) < 1e-300, 0.0, w)
    keep = w > 0
    return JointMeasure.from_triples(np.array(xs)[keep], np.array(ys)[keep], w[keep])


def build_coupling(q: QParam, mu: DiscreteMeasure, nu: DiscreteMeasure) -> JointMeasure:
    """Joint coupling of ``q``; mixtures are resolved by mixing the component joints."""
    if q.kind == "Mixture":
        q.check(mu, nu)
        return build_coupling(q.left, mu, nu).mix(build_coupling(q.right, mu, nu), q.lam)
    return lift_to_joint(build_kernel(q, mu, nu), mu)


def build_itmc(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = DEFAULT_TOL) -> JointMeasure:
    from .qparam import q_it

    return build_coupling(q_it(mu, nu, tol), mu, nu)


def comonotone(mu: DiscreteMeasure, nu: DiscreteMeasure) -> JointMeasure:
    """Law of ``(F_mu^{-1}(U), F_nu^{-1}(U))`` for a single uniform ``U``."""
    grid = merged_grid(mu.cumulative, nu.cumulative)
    mid = 0.5 * (grid[:-1] + grid[1:])
    return JointMeasure.from_triples(quantile(mu, mid), quantile(nu, mid), np.diff(grid))


def supermartingale_kernel(mu: DiscreteMeasure, nu: DiscreteMeasure,
                           tol: float = DEFAULT_TOL) -> tuple[list[KernelCell], float]:
    """Kernel of the inverse-transform supermartingale coupling and its level ``u_d``.

    Levels of psi_plus up to the total psi_minus mass are matched with the
    identity level map; U+ points above that level keep their mass in place.
    """
    if not check_order(mu, nu, tol).dcx:
        raise OrderViolation("the pair is not in the decreasing convex order")
    qp = QuantilePair(mu, nu)
    gm = qp.gamma_minus
    if gm <= qp.level_snap() or qp.gamma_plus == 0.0:
        cells = [
            KernelCell(float(qp.edges[k]), float(qp.edges[k + 1]), float(qp.x[k]), float(qp.y[k]), (),
                       TAIL if qp.pos[k] > 0 else U_ZERO)
            for k in range(len(qp.lengths))
        ]
        return cells, 0.0
    if qp.gamma_plus - gm <= qp.level_snap():
        w_max, u_d = qp.gamma_plus, 1.0
    else:
        w_max = gm
        u_d = float(qp.psi_plus().inverse()(gm))
    pr = pair_levels(qp, [LevelPiece(0.0, w_max, 1, 0.0)], w_max=w_max)
    cells = _sorted(_cells_from_pairing(qp, pr) + _zero_cells(qp))
    for c in cells:
        _check_cell(c)
    return cells, u_d


def build_supermartingale(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = DEFAULT_TOL) -> JointMeasure:
    cells, _ = supermartingale_kernel(mu, nu, tol)
    return lift_to_joint(cells, mu)


def build_submartingale(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = DEFAULT_TOL) -> JointMeasure:
    """Submartingale coupling obtained by reflecting the supermartingale construction."""
    if not check_order(mu, nu, tol).icx:
        raise OrderViolation("the pair is not in the increasing convex order")
    return build_supermartingale(mu.reflect(), nu.reflect(), tol).reflect()


def symmetric_kernel(mu: DiscreteMeasure, nu: DiscreteMeasure, center: float) -> list[KernelCell]:
    """Closed-form kernel for a pair symmetric about ``center``.

    Every cell keeps weight ``(x + s - 2c) / (2 (s - c))`` at its nu-quantile
    ``s`` and sends the rest to the mirror point ``2c - s``, read off the
    nu-quantile of the mirrored cell so that it is an atom of nu.
    """
    qp = QuantilePair(mu, nu)
    cells = []
    for k in range(len(qp.lengths)):
        x, s = float(qp.x[k]), float(qp.y[k])
        a, b = float(qp.edges[k]), float(qp.edges[k + 1])
        if x == s:
            cells.append(KernelCell(a, b, x, s, (), U_ZERO))
            continue
        p = (s - x) / (2.0 * (s - center))
        mirror = float(quantile(nu, 1.0 - 0.5 * (a + b)))
        cells.append(KernelCell(a, b, x, s, ((mirror, p),), U_PLUS if x > s else U_MINUS))
    return cells


def sample(cells: Sequence[KernelCell], mu: DiscreteMeasure | None, n: int, seed: int = 0) -> np.ndarray:
    """Draw ``n`` i.i.d. pairs ``(x, y)`` from the coupling of a kernel.

    Uses numpy's PCG64 generator seeded with ``seed``: one uniform picks the
    cell (and hence ``x``), a second picks the target inside the cell.

    Returns
    -------
    ndarray of shape (n, 2)
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    u = 1.0 - rng.random(n)
    v = rng.random(n)
    cells = [c for c in cells if c.b > c.a]
    rights = np.array([c.b for c in cells])
    rights[-1] = 1.0
    idx = np.minimum(np.searchsorted(rights, u, side="left"), len(cells) - 1)
    width = max(len(c.targets) for c in cells) + 1
    vals = np.zeros((len(cells), width))
    cum = np.ones((len(cells), width))
    for i, c in enumerate(cells):
        acc = 0.0
        for j, (y, p) in enumerate(c.targets):
            acc += p
            vals[i, j] = y
            cum[i, j] = acc
        vals[i, len(c.targets):] = c.stay_y
    xs = np.array([c.x for c in cells])[idx]
    choice = (v[:, None] >= cum[idx]).sum(axis=1)
    ys = vals[idx, np.minimum(choice, width - 1)]
    if mu is not None and not np.array_equal(xs, quantile(mu, u)):
        raise ValueError("kernel cells do not match the quantile function of mu")
    return np.column_stack((xs, ys))
