"""Verification, cost functionals and experiments on built couplings."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coupling_builder import (
    JointMeasure,
    KernelCell,
    build_coupling,
    build_itmc,
    comonotone,
)
from .errors import InvalidRho, OrderViolation, SupportViolation
from .lp_oracle import min_cost_coupling, w1_r2
from .measures import (
    DEFAULT_TOL,
    GRID_SNAP,
    DiscreteMeasure,
    cdf,
    check_order,
    mean_and_moment,
    quantile,
    wasserstein_1d,
)
from .qparam import QParam

__all__ = [
    "CouplingReport",
    "Component",
    "IrreducibleDecomposition",
    "CrhoTable",
    "StabilityRow",
    "verify_coupling",
    "cost",
    "c_rho",
    "monge_check",
    "irreducible_components",
    "comonotone_is_martingale",
    "left_curtain_family",
    "coarsen_joint",
    "stability_experiment",
    "crho_extremality",
    "tensorized_bound",
    "product_coupling_cost",
    "gaussian_blowup",
]


@dataclass(frozen=True)
class CouplingReport:
    marginal_err_mu: float
    marginal_err_nu: float
    martingale_defect: float
    drift_sign: str
    cost1: float
    w1: float
    ratio: float
    bound_2w1_holds: bool
    cost2_identity_err: float

    def to_dict(self) -> dict:
        return {
            "marginal_err_mu": self.marginal_err_mu,
            "marginal_err_nu": self.marginal_err_nu,
            "martingale_defect": self.martingale_defect,
            "drift_sign": self.drift_sign,
            "cost1": self.cost1,
            "w1": self.w1,
            "ratio": self.ratio,
            "bound_2w1_holds": self.bound_2w1_holds,
            "cost2_identity_err": self.cost2_identity_err,
        }


def _atom_error(a: DiscreteMeasure, b: DiscreteMeasure) -> float:
    locs = np.union1d(a.locations, b.locations)
    wa = np.zeros(len(locs))
    wb = np.zeros(len(locs))
    wa[np.searchsorted(locs, a.locations)] = a.weights
    wb[np.searchsorted(locs, b.locations)] = b.weights
    return float(np.max(np.abs(wa - wb)))


def cost(j: JointMeasure, rho: float) -> float:
    """``sum w |x - y|^rho`` over the atoms of ``j``."""
    if not rho >= 0:
        raise InvalidRho(f"rho must be >= 0, got {rho!r}")
    return float(np.dot(j.w, np.abs(j.x - j.y) ** rho))


def verify_coupling(j: JointMeasure, mu: DiscreteMeasure, nu: DiscreteMeasure,
                    tol: float = DEFAULT_TOL) -> CouplingReport:
    """Marginals, drift, L1 cost against ``2 W1`` and the quadratic identity.

    The drift is classified from the per-atom defects ``E[Y | X = x] - x``:
    defects within ``tol * (1 + |x|)`` count as zero, and a mix of strictly
    positive and strictly negative defects is reported as ``none``.
    """
    ux, _, cm = j.conditional_means()
    defect = cm - ux
    thr = tol * (1.0 + np.abs(ux))
    if np.all(np.abs(defect) <= thr):
        drift = "martingale"
    elif np.all(defect <= thr):
        drift = "super"
    elif np.all(defect >= -thr):
        drift = "sub"
    else:
        drift = "none"
    c1 = cost(j, 1.0)
    w1 = wasserstein_1d(mu, nu, 1.0)
    target = mean_and_moment(nu, 2.0)[1] - mean_and_moment(mu, 2.0)[1]
    scale = 1.0 + max(float(np.dot(np.abs(mu.locations), mu.weights)),
                      float(np.dot(np.abs(nu.locations), nu.weights)))
    return CouplingReport(
        marginal_err_mu=_atom_error(j.marginal_x(), mu),
        marginal_err_nu=_atom_error(j.marginal_y(), nu),
        martingale_defect=float(np.max(np.abs(defect))),
        drift_sign=drift,
        cost1=c1,
        w1=w1,
        ratio=c1 / w1 if w1 > 0 else float("nan"),
        bound_2w1_holds=bool(c1 <= 2.0 * w1 + tol * scale),
        cost2_identity_err=abs(cost(j, 2.0) - target) / max(1.0, abs(target)),
    )


def c_rho(cells: Sequence[KernelCell], rho: float) -> float:
    """Off-diagonal cost of a kernel measured from the nu-quantile of each cell.

    Stay mass and targets equal to the stay point do not contribute, which
    makes the functional finite for negative ``rho``.
    """
    total = 0.0
    for c in cells:
        L = c.b - c.a
        for y, p in c.targets:
            if y != c.stay_y and p > 0:
                total += L * p * abs(c.stay_y - y) ** rho
    return total


def monge_check(mu: DiscreteMeasure, nu: DiscreteMeasure, j: JointMeasure,
                tol: float = DEFAULT_TOL) -> tuple[bool, float, bool]:
    """Compare ``j`` with the Monge map ``T = F_nu^{-1} o F_mu`` when that map exists.

    Returns ``(applicable, int |y - T(x)| dj, equals_w1)``; the last two are
    ``nan`` and ``False`` when the comonotone coupling is not deterministic.
    """
    lefts = np.concatenate(([0.0], mu.cumulative[:-1]))
    rights = mu.cumulative
    inner = nu.cumulative[:-1]
    for lo, hi in zip(lefts, rights):
        if np.any((inner > lo + GRID_SNAP) & (inner < hi - GRID_SNAP)):
            return False, float("nan"), False
    T = dict(zip(mu.locations.tolist(), np.atleast_1d(quantile(nu, 0.5 * (lefts + rights))).tolist()))
    tx = np.array([T[float(x)] for x in j.x])
    c = float(np.dot(j.w, np.abs(j.y - tx)))
    w1 = wasserstein_1d(mu, nu, 1.0)
    return True, c, abs(c - w1) <= tol * (1.0 + w1)


@dataclass(frozen=True)
class Component:
    t_low: float
    t_high: float
    mu_n: DiscreteMeasure
    nu_n: DiscreteMeasure
    mass: float


@dataclass(frozen=True)
class IrreducibleDecomposition:
    components: tuple[Component, ...]

    def __len__(self) -> int:
        return len(self.components)

    def to_dict(self) -> dict:
        return {
            "components": [
                {"t_low": c.t_low, "t_high": c.t_high, "mass": c.mass,
                 "mu_n": c.mu_n.to_dict(), "nu_n": c.nu_n.to_dict()}
                for c in self.components
            ]
        }


def _potential(m: DiscreteMeasure, t: np.ndarray) -> np.ndarray:
    """``int_{-inf}^t F_m = E (t - X)^+``."""
    idx = np.searchsorted(m.locations, t, side="right")
    first = np.concatenate(([0.0], np.cumsum(m.weights * m.locations)))
    mass = np.concatenate(([0.0], m.cumulative))
    return t * mass[idx] - first[idx]


def irreducible_components(mu: DiscreteMeasure, nu: DiscreteMeasure,
                           tol: float = DEFAULT_TOL) -> IrreducibleDecomposition:
    """Maximal open intervals where the potential of ``mu`` is strictly below that of ``nu``.

    Both potentials are piecewise linear with kinks at the atoms, so the
    comparison at the merged atoms is exact.
    """
    rep = check_order(mu, nu, tol)
    if not rep.cx:
        raise OrderViolation("irreducible components need a pair in convex order")
    t = np.union1d(mu.locations, nu.locations)
    gap = _potential(nu, t) - _potential(mu, t)
    scale = 1.0 + max(float(np.dot(np.abs(mu.locations), mu.weights)),
                      float(np.dot(np.abs(nu.locations), nu.weights)))
    positive = gap > tol * scale
    comps = []
    i = 0
    while i < len(t):
        if not positive[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(t) and positive[j + 1]:
            j += 1
        lo, hi = float(t[i - 1]), float(t[j + 1])
        comps.append(_component(mu, nu, lo, hi))
        i = j + 1
    return IrreducibleDecomposition(tuple(comps))


def _component(mu: DiscreteMeasure, nu: DiscreteMeasure, lo: float, hi: float) -> Component:
    inside_mu = (mu.locations > lo) & (mu.locations < hi)
    mass = float(mu.weights[inside_mu].sum())
    inside_nu = (nu.locations > lo) & (nu.locations < hi)
    left = cdf(nu, lo, "right") - cdf(mu, lo, "right")
    right = cdf(mu, hi, "left") - cdf(nu, hi, "left")
    xs = list(nu.locations[inside_nu])
    ws = list(nu.weights[inside_nu])
    if left > 1e-15:
        xs.append(lo)
        ws.append(left)
    if right > 1e-15:
        xs.append(hi)
        ws.append(right)
    order = np.argsort(xs)
    mu_n = DiscreteMeasure(mu.locations[inside_mu], mu.weights[inside_mu] / mass)
    nu_n = DiscreteMeasure(np.array(xs)[order], np.array(ws)[order] / mass)
    return Component(lo, hi, mu_n, nu_n, mass)


def comonotone_is_martingale(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = DEFAULT_TOL) -> bool:
    """True iff the nu-quantile averages over every mu-atom's quantile interval equal the atom."""
    ux, _, cm = comonotone(mu, nu).conditional_means()
    return bool(np.all(np.abs(cm - ux) <= tol * (1.0 + np.abs(ux))))


def left_curtain_family(mu: DiscreteMeasure, u: float, d: float,
                        tol: float = DEFAULT_TOL) -> tuple[JointMeasure, CouplingReport, DiscreteMeasure]:
    """Two-point martingale kernel ``x -> {u x, -d x}`` on a positive measure.

    Returns the joint, its report against the implied second marginal, and
    that marginal.
    """
    if np.any(mu.locations <= 0):
        raise SupportViolation("the parametric family needs a measure on (0, inf)")
    if not (u > 1 and d > 0):
        raise ValueError("need u > 1 and d > 0")
    q = (1.0 + d) / (u + d)
    x, w = mu.locations, mu.weights
    j = JointMeasure.from_triples(
        np.concatenate((x, x)), np.concatenate((u * x, -d * x)), np.concatenate((q * w, (1.0 - q) * w))
    )
    nu = j.marginal_y()
    return j, verify_coupling(j, mu, nu, tol), nu


def coarsen_joint(j: JointMeasure, max_atoms: int) -> JointMeasure:
    """Merge lexicographically consecutive atoms into ``max_atoms`` equal-mass bins."""
    if j.n_atoms <= max_atoms:
        return j
    cum = np.cumsum(j.w) - 0.5 * j.w
    b = np.minimum((cum * max_atoms).astype(int), max_atoms - 1)
    mass = np.bincount(b, weights=j.w, minlength=max_atoms)
    used = mass > 0
    bx = np.bincount(b, weights=j.w * j.x, minlength=max_atoms)[used] / mass[used]
    by = np.bincount(b, weights=j.w * j.y, minlength=max_atoms)[used] / mass[used]
    return JointMeasure.from_triples(bx, by, mass[used], drop_dust=False)


@dataclass(frozen=True)
class StabilityRow:
    w1_mu: float
    w1_nu: float
    w1_joint: float


def stability_experiment(mu: DiscreteMeasure, nu: DiscreteMeasure,
                         schedule: Sequence[tuple[DiscreteMeasure, DiscreteMeasure]],
                         max_atoms: int = 40, tol: float = DEFAULT_TOL) -> list[StabilityRow]:
    """Distances between the inverse transform couplings of perturbed and reference pairs."""
    ref = coarsen_joint(build_itmc(mu, nu, tol), max_atoms)
    rows = []
    for mn, nn in schedule:
        rep = check_order(mn, nn, tol)
        if not (rep.cx and rep.strict):
            raise OrderViolation("schedule entries must be strictly ordered in convex order")
        jn = coarsen_joint(build_itmc(mn, nn, tol), max_atoms)
        rows.append(StabilityRow(wasserstein_1d(mn, mu), wasserstein_1d(nn, nu), w1_r2(jn, ref)))
    return rows


def stability_csv(rows: Sequence[StabilityRow], labels: Sequence = ()) -> str:
    buf = io.StringIO()
    buf.write("n,w1_mu,w1_nu,w1_joint\n")
    for i, r in enumerate(rows):
        lab = labels[i] if i < len(labels) else i
        buf.write(f"{lab},{r.w1_mu!r},{r.w1_nu!r},{r.w1_joint!r}\n")
    return buf.getvalue()


@dataclass(frozen=True)
class CrhoTable:
    names: tuple[str, ...]
    rhos: tuple[float, ...]
    values: np.ndarray  # shape (len(names), len(rhos))

    def value(self, name: str, rho: float) -> float:
        return float(self.values[self.names.index(name), self.rhos.index(rho)])

    def argmin(self, rho: float, tol: float = 1e-12) -> list[str]:
        col = self.values[:, self.rhos.index(rho)]
        return [n for n, v in zip(self.names, col) if v <= col.min() + tol * (1 + abs(col.min()))]

    def argmax(self, rho: float, tol: float = 1e-12) -> list[str]:
        col = self.values[:, self.rhos.index(rho)]
        return [n for n, v in zip(self.names, col) if v >= col.max() - tol * (1 + abs(col.max()))]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("q,rho,value,is_min,is_max\n")
        for rho in self.rhos:
            lo, hi = self.argmin(rho), self.argmax(rho)
            for name in self.names:
                buf.write(f"{name},{rho!r},{self.value(name, rho)!r},{int(name in lo)},{int(name in hi)}\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "rows": [
                {"q": n, "rho": r, "value": self.value(n, r), "is_min": n in self.argmin(r),
                 "is_max": n in self.argmax(r)}
                for r in self.rhos for n in self.names
            ]
        }


def _label(q: QParam) -> str:
    if q.kind == "Mixture":
        return f"mix({q.lam:g},{_label(q.left)},{_label(q.right)})"
    return q.kind


def crho_extremality(mu: DiscreteMeasure, nu: DiscreteMeasure, qs: Sequence[QParam],
                     rhos: Sequence[float], names: Sequence[str] | None = None) -> CrhoTable:
    from .coupling_builder import build_kernel

    kernels = [build_kernel(q, mu, nu) for q in qs]
    vals = np.array([[c_rho(k, r) for r in rhos] for k in kernels])
    labels = tuple(names) if names else tuple(_label(q) for q in qs)
    return CrhoTable(labels, tuple(float(r) for r in rhos), vals)


def tensorized_bound(pairs: Sequence[tuple[DiscreteMeasure, DiscreteMeasure]]) -> tuple[float, float]:
    """L1 cost of the coordinatewise product of inverse transform couplings, and ``sum 2 W1``.

    The product kernel moves each coordinate independently, so its L1 cost
    is the sum of the one-dimensional costs.
    """
    joints = [build_itmc(m, n) for m, n in pairs]
    total = sum(cost(j, 1.0) for j in joints)
    bound = sum(2.0 * wasserstein_1d(m, n) for m, n in pairs)
    return total, bound


def product_coupling_cost(joints: Sequence[JointMeasure]) -> float:
    """L1 cost of the product of joints, summed over every combination of atoms."""
    ws = np.ones(1)
    dist = np.zeros(1)
    for j in joints:
        dist = (dist[:, None] + np.abs(j.x - j.y)[None, :]).ravel()
        ws = (ws[:, None] * j.w[None, :]).ravel()
    return float(np.dot(ws, dist))


def gaussian_blowup(ns: Sequence[int], n_atoms: int = 400, method: str = "highs") -> list[dict]:
    """Quadratic martingale cost against W2 between discretized N(0, n^2) and N(0, (n+1)^2)."""
    from .discretize import discretize

    rows = []
    for n in ns:
        mu = discretize("gaussian", (0.0, float(n)), n_atoms)
        nu = discretize("gaussian", (0.0, float(n + 1)), n_atoms)
        sol = min_cost_coupling(mu, nu, rho=2.0, mode="martingale", sense="min", method=method)
        w2 = wasserstein_1d(mu, nu, 2.0)
        rows.append({"n": n, "cost2": sol.value, "w2": w2, "ratio": float(np.sqrt(sol.value) / w2),
                     "residual": sol.residual, "status": sol.status})
    return rows


def family_builds(mu: DiscreteMeasure, nu: DiscreteMeasure, qs: Sequence[QParam]) -> list[JointMeasure]:
    return [build_coupling(q, mu, nu) for q in qs]
