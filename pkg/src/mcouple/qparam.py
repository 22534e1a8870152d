"""Parameters of the martingale couplings: measures on the unit square.

A ``QParam`` couples the two "excess" densities of a convex-ordered pair: its
first marginal is the positive part of ``F_mu^{-1} - F_nu^{-1}`` and its second
the negative part, both normalized by ``gamma``, and it only charges
``{u < v}``. Four families are provided:

``IT``
    deterministic and nondecreasing, ``v = phi(u)``;
``NIT``
    deterministic and nonincreasing (single sign change only);
``Product``
    the independent coupling of the two marginals (single sign change only);
``Zeta``
    ``IT`` with its level map reversed on a small window.

Convex mixtures of these are again valid and are kept as a tree.

Deterministic families are described by a level map ``g`` of ``(0, gamma]``:
the point of U+ at psi_plus level ``w`` is matched with the point of U- at
psi_minus level ``g(w)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    FingerprintMismatch,
    IdenticalMeasures,
    NoValidWindow,
    OrderViolation,
    SingleSignChangeViolation,
)
from .measures import DEFAULT_TOL, GRID_SNAP, DiscreteMeasure, check_order
from .quantile_calculus import (
    ComposedMap,
    LevelFlip,
    LevelPairing,
    LevelPiece,
    QuantilePair,
    chi_maps,
    has_single_sign_change,
    pair_levels,
    sign_pattern,
)

__all__ = [
    "QParam",
    "QValidationReport",
    "fingerprint",
    "q_it",
    "q_nit",
    "q_product",
    "q_zeta",
    "q_mix",
    "validate_q",
    "map_distance",
    "level_pieces",
]

KINDS = ("IT", "NIT", "Product", "Zeta", "Mixture")


def fingerprint(mu: DiscreteMeasure, nu: DiscreteMeasure) -> str:
    """Short content hash identifying the pair a parameter was built for."""
    h = hashlib.sha256()
    for m in (mu, nu):
        h.update(np.ascontiguousarray(m.locations, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(m.weights, dtype="<f8").tobytes())
        h.update(b"|")
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class QParam:
    kind: str
    fingerprint: str
    u0: Optional[float] = None
    eps: Optional[float] = None
    lam: Optional[float] = None
    left: Optional["QParam"] = None
    right: Optional["QParam"] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "Mixture":
            if self.lam is None or not 0.0 <= self.lam <= 1.0:
                raise ValueError("mixture weight must lie in [0, 1]")
            if self.left is None or self.right is None:
                raise ValueError("mixture needs two components")
        if self.kind == "Zeta" and (self.u0 is None or self.eps is None):
            raise ValueError("Zeta needs a window (u0, eps)")

    @property
    def is_deterministic(self) -> bool:
        return self.kind in ("IT", "NIT", "Zeta")

    def check(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
        if fingerprint(mu, nu) != self.fingerprint:
            raise FingerprintMismatch("parameter was built for a different pair of measures")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "fingerprint": self.fingerprint}
        if self.kind == "Zeta":
            out["params"] = {"u0": self.u0, "eps": self.eps}
        elif self.kind == "Mixture":
            out["params"] = {"lambda": self.lam, "left": self.left.to_dict(), "right": self.right.to_dict()}
        else:
            out["params"] = {}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "QParam":
        kind = data["kind"]
        params = data.get("params", {})
        if kind == "Zeta":
            return cls(kind, data["fingerprint"], u0=float(params["u0"]), eps=float(params["eps"]))
        if kind == "Mixture":
            return cls(
                kind, data["fingerprint"], lam=float(params["lambda"]),
                left=cls.from_dict(params["left"]), right=cls.from_dict(params["right"]),
            )
        return cls(kind, data["fingerprint"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def partner_map(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> ComposedMap:
        """The map ``u -> v`` on U+ for deterministic kinds, as a symbolic composition."""
        self.check(mu, nu)
        qp = QuantilePair(mu, nu)
        psi_p, psi_m = qp.psi_plus(), qp.psi_minus()
        if self.kind == "IT":
            return ComposedMap(psi_p, psi_m.inverse(), name="phi")
        if self.kind == "Zeta":
            flip = LevelFlip(float(psi_p(self.u0 - self.eps)), float(psi_p(self.u0)))
            return ComposedMap(psi_p, psi_m.inverse(), flip=flip, name="zeta")
        if self.kind == "NIT":
            chi_p, chi_m, _ = chi_maps(mu, nu)
            return ComposedMap(chi_p, chi_m.inverse(), reflect_out=True, name="1-Gamma")
        raise TypeError(f"{self.kind} parameters are not deterministic")

    def pi_plus(self, mu: DiscreteMeasure, nu: DiscreteMeasure):
        """Materialized transition from U+ to U-.

        Deterministic kinds give a list of affine pieces ``(u_a, u_b, v_a, v_b)``.
        ``Product`` gives, per U+ cell ``(a, b)``, the list of target U- cells
        ``(c, d, probability)``.
        """
        self.check(mu, nu)
        qp = QuantilePair(mu, nu)
        if self.is_deterministic:
            pr = pair_levels(qp, level_pieces(self, qp))
            return [
                (float(a), float(b), float(c), float(d))
                for a, b, c, d in zip(pr.u_a, pr.u_b, pr.v_a, pr.v_b)
                if b > a
            ]
        if self.kind == "Product":
            gamma = qp.gamma_plus
            minus = np.flatnonzero(qp.neg > 0)
            targets = [(float(qp.edges[j]), float(qp.edges[j + 1]), float(qp.neg[j] * qp.lengths[j] / gamma))
                       for j in minus]
            return [((float(qp.edges[k]), float(qp.edges[k + 1])), targets) for k in np.flatnonzero(qp.pos > 0)]
        raise TypeError("mixtures have no single transition; inspect the components")


def level_pieces(q: QParam, qp: QuantilePair) -> list[LevelPiece]:
    """Level map of a deterministic parameter as slope +-1 pieces on ``(0, gamma]``."""
    gamma = qp.gamma_plus
    if q.kind == "IT":
        return [LevelPiece(0.0, gamma, 1, 0.0)]
    if q.kind == "NIT":
        return [LevelPiece(0.0, gamma, -1, gamma)]
    if q.kind == "Zeta":
        psi_p = qp.psi_plus()
        a, b = float(psi_p(q.u0 - q.eps)), float(psi_p(q.u0))
        out = []
        if a > 0.0:
            out.append(LevelPiece(0.0, a, 1, 0.0))
        out.append(LevelPiece(a, b, -1, a + b))
        if b < gamma:
            out.append(LevelPiece(b, gamma, 1, 0.0))
        return out
    raise TypeError(f"{q.kind} has no level map")


def _require_cx(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float) -> None:
    rep = check_order(mu, nu, tol)
    if not rep.strict:
        raise IdenticalMeasures("the two measures coincide")
    if not rep.cx:
        raise OrderViolation("the pair is not in convex order")


def _require_single_crossing(mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
    if not has_single_sign_change(mu, nu):
        raise SingleSignChangeViolation(
            f"quantile difference has sign pattern {sign_pattern(mu, nu)}, expected (+, -)"
        )


def q_it(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = DEFAULT_TOL) -> QParam:
    _require_cx(mu, nu, tol)
    return QParam("IT", fingerprint(mu, nu))


def q_nit(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = DEFAULT_TOL) -> QParam:
    _require_cx(mu, nu, tol)
    _require_single_crossing(mu, nu)
    return QParam("NIT", fingerprint(mu, nu))


def q_product(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = DEFAULT_TOL) -> QParam:
    _require_cx(mu, nu, tol)
    _require_single_crossing(mu, nu)
    return QParam("Product", fingerprint(mu, nu))


def q_zeta(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = DEFAULT_TOL) -> QParam:
    """Find a window ``[u0 - eps, u0]`` inside a U+ cell and flip the level map there.

    The window must satisfy ``u0 < phi(u) < 1`` on it, and the lower flip level
    must avoid the jump levels of the psi_minus inverse.
    """
    _require_cx(mu, nu, tol)
    qp = QuantilePair(mu, nu)
    psi_p, psi_m = qp.psi_plus(), qp.psi_minus()
    inv_m = psi_m.inverse()
    jumps = inv_m.jump_levels()
    snap = qp.level_snap()
    phi = ComposedMap(psi_p, inv_m)
    for k in np.flatnonzero(qp.pos > 0):
        if not qp.P[k + 1] > qp.M[k + 1] + snap:
            continue
        a, b = qp.edges[k], qp.edges[k + 1]
        u0 = 0.5 * (a + b)
        eps = 0.25 * (b - a)
        for _ in range(60):
            lo = float(psi_p(u0 - eps))
            ok = (
                phi(u0 - eps) > u0
                and phi(u0) < 1.0
                and psi_p(u0) - qp.gamma_plus < -snap
                and (jumps.size == 0 or np.min(np.abs(jumps - lo)) > snap)
                and eps > GRID_SNAP
            )
            if ok:
                return QParam("Zeta", fingerprint(mu, nu), u0=float(u0), eps=float(eps))
            eps *= 0.5
    raise NoValidWindow("no admissible flipping window found")


def q_mix(lam: float, q1: QParam, q2: QParam) -> QParam:
    if q1.fingerprint != q2.fingerprint:
        raise FingerprintMismatch("mixture components were built for different pairs")
    return QParam("Mixture", q1.fingerprint, lam=float(lam), left=q1, right=q2)


@dataclass(frozen=True)
class QValidationReport:
    marginal1_err: float
    marginal2_err: float
    support_mass_above_diagonal: float
    component_mass: float
    tol: float

    @property
    def valid(self) -> bool:
        return (
            self.marginal1_err <= self.tol
            and self.marginal2_err <= self.tol
            and self.support_mass_above_diagonal >= 1.0 - self.tol
            and self.component_mass >= 1.0 - self.tol
        )

    def to_dict(self) -> dict:
        return {
            "marginal1_err": self.marginal1_err,
            "marginal2_err": self.marginal2_err,
            "support_mass_above_diagonal": self.support_mass_above_diagonal,
            "component_mass": self.component_mass,
            "valid": self.valid,
        }


def _neg_fraction(da: np.ndarray, db: np.ndarray) -> np.ndarray:
    """Fraction of [0, 1] where the affine function from ``da`` to ``db`` is negative."""
    out = np.zeros(np.shape(da))
    out[(da <= 0) & (db <= 0) & ~((da == 0) & (db == 0))] = 1.0
    up = (da < 0) & (db > 0)
    down = (da > 0) & (db < 0)
    out[up] = da[up] / (da[up] - db[up])
    out[down] = 1.0 - da[down] / (da[down] - db[down])
    return out


def _component_intervals(mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    from .analysis import irreducible_components
    from .measures import cdf

    dec = irreducible_components(mu, nu)
    return np.array([(cdf(mu, c.t_low, "right"), cdf(mu, c.t_high, "left")) for c in dec.components]).reshape(-1, 2)


def _in_component(lo: np.ndarray, hi: np.ndarray, comps: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(comps[:, 1], 0.5 * (lo + hi), side="left") if len(comps) else np.zeros(len(lo), int)
    idx = np.minimum(idx, max(len(comps) - 1, 0))
    if len(comps) == 0:
        return np.zeros(len(lo), dtype=bool), idx
    ok = (lo >= comps[idx, 0] - GRID_SNAP) & (hi <= comps[idx, 1] + GRID_SNAP)
    return ok, idx


def _stats(q: QParam, qp: QuantilePair, comps: np.ndarray):
    """Per-cell marginal masses, mass above the diagonal, and mass inside components."""
    K = len(qp.lengths)
    gamma = qp.gamma_plus
    m1, m2 = np.zeros(K), np.zeros(K)
    if q.kind == "Mixture":
        a = _stats(q.left, qp, comps)
        b = _stats(q.right, qp, comps)
        lam = q.lam
        return tuple(lam * x + (1.0 - lam) * y for x, y in zip(a, b))
    if q.is_deterministic:
        pr: LevelPairing = pair_levels(qp, level_pieces(q, qp))
        np.add.at(m1, pr.kp, (pr.u_b - pr.u_a) * qp.pos[pr.kp] / gamma)
        np.add.at(m2, pr.km, np.abs(pr.v_b - pr.v_a) * qp.neg[pr.km] / gamma)
        dw = (pr.w_hi - pr.w_lo) / gamma
        above = float(np.sum(_neg_fraction(pr.u_a - pr.v_a, pr.u_b - pr.v_b) * dw))
        v_lo, v_hi = np.minimum(pr.v_a, pr.v_b), np.maximum(pr.v_a, pr.v_b)
        ok_u, iu = _in_component(pr.u_a, pr.u_b, comps)
        ok_v, iv = _in_component(v_lo, v_hi, comps)
        inside = float(np.sum(dw[ok_u & ok_v & (iu == iv)]))
        return m1, m2, np.array(above), np.array(inside)
    # Product: exact cell-product sums
    plus = np.flatnonzero(qp.pos > 0)
    minus = np.flatnonzero(qp.neg > 0)
    pm = qp.pos[plus] * qp.lengths[plus] / gamma
    mm = qp.neg[minus] * qp.lengths[minus] / gamma
    mass = np.outer(pm, mm)
    m1[plus] = mass.sum(axis=1)
    m2[minus] = mass.sum(axis=0)
    before = qp.edges[plus + 1][:, None] <= qp.edges[minus][None, :]
    above = float(np.sum(mass[before]))
    ok_u, iu = _in_component(qp.edges[plus], qp.edges[plus + 1], comps)
    ok_v, iv = _in_component(qp.edges[minus], qp.edges[minus + 1], comps)
    same = ok_u[:, None] & ok_v[None, :] & (iu[:, None] == iv[None, :])
    inside = float(np.sum(mass[same]))
    return m1, m2, np.array(above), np.array(inside)


def validate_q(q: QParam, mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = 1e-10) -> QValidationReport:
    """Check the three defining properties of ``q`` plus the component support property.

    Marginals are compared cell by cell with the exact psi increments; the
    support checks use the affine structure of every matched piece, so no
    sampling is involved.
    """
    q.check(mu, nu)
    qp = QuantilePair(mu, nu)
    gamma = qp.gamma_plus
    comps = _component_intervals(mu, nu)
    m1, m2, above, inside = _stats(q, qp, comps)
    t1 = qp.pos * qp.lengths / gamma
    t2 = qp.neg * qp.lengths / gamma
    return QValidationReport(
        marginal1_err=float(np.max(np.abs(m1 - t1))),
        marginal2_err=float(np.max(np.abs(m2 - t2))),
        support_mass_above_diagonal=float(above),
        component_mass=float(inside),
        tol=tol,
    )


def _v_affine(pr: LevelPairing, w: np.ndarray, row: np.ndarray) -> np.ndarray:
    lo, hi = pr.w_lo[row], pr.w_hi[row]
    t = np.where(hi > lo, (w - lo) / np.where(hi > lo, hi - lo, 1.0), 0.0)
    return pr.v_a[row] + t * (pr.v_b[row] - pr.v_a[row])


def map_distance(q1: QParam, q2: QParam, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """``int |v1(u) - v2(u)| dQ-marginal(u)`` for two deterministic parameters.

    The partner positions are affine in the psi_plus level on a common
    refinement, so the integral of their absolute difference is exact.
    """
    q1.check(mu, nu)
    q2.check(mu, nu)
    qp = QuantilePair(mu, nu)
    p1 = pair_levels(qp, level_pieces(q1, qp))
    p2 = pair_levels(qp, level_pieces(q2, qp))
    w = np.unique(np.concatenate((p1.w_lo, p1.w_hi, p2.w_lo, p2.w_hi)))
    lo, hi = w[:-1], w[1:]
    mid = 0.5 * (lo + hi)
    r1 = np.minimum(np.searchsorted(p1.w_hi, mid, side="left"), len(p1.w_hi) - 1)
    r2 = np.minimum(np.searchsorted(p2.w_hi, mid, side="left"), len(p2.w_hi) - 1)
    da = _v_affine(p1, lo, r1) - _v_affine(p2, lo, r2)
    db = _v_affine(p1, hi, r1) - _v_affine(p2, hi, r2)
    same = (da >= 0) == (db >= 0)
    aa, ab = np.abs(da), np.abs(db)
    with np.errstate(divide="ignore", invalid="ignore"):
        integ = np.where(same, 0.5 * (aa + ab), np.where(aa + ab > 0, 0.5 * (aa**2 + ab**2) / (aa + ab), 0.0))
    return float(np.sum(integ * (hi - lo)) / qp.gamma_plus)
