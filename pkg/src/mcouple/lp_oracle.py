"""Brute-force linear programs over couplings of two discrete measures.

The oracle is deliberately independent of the quantile constructions: it sees
only atoms, weights and a cost matrix. Two solvers are available:

``simplex``
    a dense two-phase primal simplex with Bland's anti-cycling rule, used for
    desk-scale instances (at most 64 atoms per side);
``highs``
    scipy's HiGHS solver on a sparse formulation, used for the larger
    discretizations of the blow-up demo.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import NumericalFailure, SizeLimit
from .measures import DiscreteMeasure

__all__ = [
    "TransportLP",
    "LPSolution",
    "SIMPLEX_MAX_ATOMS",
    "MAX_ATOMS",
    "simplex",
    "solve",
    "min_cost_coupling",
    "martingale_cost_range",
    "w1_r2",
]

MODES = ("none", "martingale", "supermartingale", "submartingale")
SIMPLEX_MAX_ATOMS = 64
MAX_ATOMS = 512
MAX_ITER = 10**6
PHASE_ONE_TOL = 1e-9
IPM_MIN_ATOMS = 150


@dataclass(frozen=True)
class TransportLP:
    row_weights: np.ndarray
    col_weights: np.ndarray
    cost: np.ndarray
    mode: str = "none"
    sense: str = "min"
    row_locations: np.ndarray | None = None
    col_locations: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        if self.mode != "none" and (self.row_locations is None or self.col_locations is None):
            raise ValueError("drift constraints need atom locations")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.row_weights), len(self.col_weights)

    def constraints(self):
        """Sparse ``(A_eq, b_eq, A_ub, b_ub)`` over the row-major flattened plan."""
        n, m = self.shape
        rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
        cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
        A_eq = [rows, cols]
        b_eq = [self.row_weights, self.col_weights]
        A_ub, b_ub = [], []
        if self.mode != "none":
            x, y = self.row_locations, self.col_locations
            scale = 1.0 / (1.0 + max(np.max(np.abs(x)), np.max(np.abs(y))))
            drift = sparse.kron(sparse.eye(n), y[None, :]) - sparse.diags(x).dot(rows)
            drift = scale * sparse.csr_matrix(drift)
            if self.mode == "martingale":
                A_eq.append(drift)
                b_eq.append(np.zeros(n))
            elif self.mode == "supermartingale":
                A_ub.append(drift)
                b_ub.append(np.zeros(n))
            else:
                A_ub.append(-drift)
                b_ub.append(np.zeros(n))
        A_eq = sparse.vstack(A_eq).tocsr()
        b_eq = np.concatenate(b_eq)
        if A_ub:
            return A_eq, b_eq, sparse.vstack(A_ub).tocsr(), np.concatenate(b_ub)
        return A_eq, b_eq, None, None


@dataclass(frozen=True)
class LPSolution:
    value: float
    plan: np.ndarray | None
    status: str
    residual: float = float("nan")
    method: str = ""
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    def plan_sparse(self):
        return None if self.plan is None else sparse.coo_matrix(self.plan)

    def to_dict(self) -> dict:
        return {"value": self.value, "status": self.status}


# ---------------------------------------------------------------------------
# Dense two-phase simplex
# ---------------------------------------------------------------------------


def _pivot(T: np.ndarray, r: int, j: int) -> None:
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run(T: np.ndarray, basis: list[int], n_cols: int, tol: float, max_iter: int) -> tuple[str, int]:
    """Bland's rule on tableau ``T`` whose last row holds reduced costs."""
    m = T.shape[0] - 1
    it = 0
    while True:
        red = T[m, :n_cols]
        cand = np.flatnonzero(red < -tol)
        if cand.size == 0:
            return "optimal", it
        j = int(cand[0])
        col = T[:m, j]
        ok = col > tol
        if not ok.any():
            return "unbounded", it
        ratios = np.full(m, np.inf)
        ratios[ok] = T[:m, -1][ok] / col[ok]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, r, j)
        basis[r] = j
        it += 1
        if it >= max_iter:
            raise NumericalFailure("simplex iteration cap reached")


def simplex(c: np.ndarray, A_eq: np.ndarray, b_eq: np.ndarray, tol: float = 1e-11,
            max_iter: int = MAX_ITER) -> tuple[str, np.ndarray | None, int]:
    """Minimize ``c @ x`` subject to ``A_eq @ x = b_eq`` and ``x >= 0``.

    Returns ``(status, x, iterations)`` with status ``optimal``, ``infeasible``
    or ``unbounded``.
    """
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    c = np.asarray(c, dtype=float)
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    m, N = A.shape
    T = np.zeros((m + 1, N + m + 1))
    T[:m, :N] = A
    T[:m, N:N + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :N] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = list(range(N, N + m))
    status, it1 = _run(T, basis, N, tol, max_iter)
    if -T[m, -1] > PHASE_ONE_TOL:
        return "infeasible", None, it1
    # drive artificial variables out of the basis; rows that cannot be pivoted are redundant
    keep = []
    for r in range(m):
        if basis[r] >= N:
            nz = np.flatnonzero(np.abs(T[r, :N]) > 1e-9)
            if nz.size:
                _pivot(T, r, int(nz[0]))
                basis[r] = int(nz[0])
                keep.append(r)
        else:
            keep.append(r)
    T = np.vstack((T[keep][:, list(range(N)) + [N + m]], np.zeros((1, N + 1))))
    basis = [basis[r] for r in keep]
    m2 = len(keep)
    T[m2, :N] = c
    for r, j in enumerate(basis):
        if c[j] != 0.0:
            T[m2] -= c[j] * T[r]
    status, it2 = _run(T, basis, N, tol, max_iter)
    if status != "optimal":
        return status, None, it1 + it2
    x = np.zeros(N)
    for r, j in enumerate(basis):
        x[j] = T[r, -1]
    return "optimal", np.maximum(x, 0.0), it1 + it2


def _residual(lp: TransportLP, P: np.ndarray) -> float:
    res = max(
        float(np.max(np.abs(P.sum(axis=1) - lp.row_weights))),
        float(np.max(np.abs(P.sum(axis=0) - lp.col_weights))),
    )
    if lp.mode != "none":
        drift = P @ lp.col_locations - P.sum(axis=1) * lp.row_locations
        if lp.mode == "martingale":
            res = max(res, float(np.max(np.abs(drift))))
        elif lp.mode == "supermartingale":
            res = max(res, float(np.max(drift)), 0.0)
        else:
            res = max(res, float(np.max(-drift)), 0.0)
    return res


def _solve_simplex(lp: TransportLP) -> tuple[str, np.ndarray | None, int]:
    A_eq, b_eq, A_ub, b_ub = lp.constraints()
    c = lp.cost.ravel() * (1.0 if lp.sense == "min" else -1.0)
    A = A_eq.toarray()
    b = b_eq
    if A_ub is not None:
        k = A_ub.shape[0]
        A = np.block([[A, np.zeros((A.shape[0], k))], [A_ub.toarray(), np.eye(k)]])
        b = np.concatenate((b, b_ub))
        c = np.concatenate((c, np.zeros(k)))
    status, x, it = simplex(c, A, b)
    return status, None if x is None else x[: lp.cost.size], it


def _solve_highs(lp: TransportLP) -> tuple[str, np.ndarray | None, int]:
    A_eq, b_eq, A_ub, b_ub = lp.constraints()
    c = lp.cost.ravel() * (1.0 if lp.sense == "min" else -1.0)
    # dual simplex stalls on large martingale problems; the interior point
    # solver with crossover still returns a vertex
    if max(lp.shape) > IPM_MIN_ATOMS:
        method, options = "highs-ipm", {}
    else:
        method = "highs"
        options = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=(0, None),
                  method=method, options=options)
    if res.status == 0:
        return "optimal", np.maximum(res.x, 0.0), int(getattr(res, "nit", 0))
    if res.status == 2:
        return "infeasible", None, 0
    if res.status == 3:
        return "unbounded", None, 0
    raise NumericalFailure(f"HiGHS failed: {res.message}")


def solve(lp: TransportLP, method: str = "auto") -> LPSolution:
    n, m = lp.shape
    if max(n, m) > MAX_ATOMS:
        raise SizeLimit(f"{n}x{m} exceeds the oracle limit of {MAX_ATOMS} atoms per side")
    if method == "auto":
        method = "simplex" if max(n, m) <= SIMPLEX_MAX_ATOMS else "highs"
    if method == "simplex":
        if max(n, m) > SIMPLEX_MAX_ATOMS:
            raise SizeLimit(f"dense simplex is limited to {SIMPLEX_MAX_ATOMS} atoms per side")
        status, x, it = _solve_simplex(lp)
    elif method == "highs":
        status, x, it = _solve_highs(lp)
    else:
        raise ValueError(f"unknown method {method!r}")
    if status != "optimal":
        return LPSolution(value=float("nan"), plan=None, status=status, method=method, iterations=it)
    P = x.reshape(n, m)
    return LPSolution(
        value=float(np.sum(P * lp.cost)),
        plan=P,
        status=status,
        residual=_residual(lp, P),
        method=method,
        iterations=it,
    )


def min_cost_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure, cost=None, rho: float = 1.0,
                      mode: str = "none", sense: str = "min", method: str = "auto") -> LPSolution:
    """Optimize ``sum P_ij c_ij`` over couplings of ``mu`` and ``nu``.

    Parameters
    ----------
    cost : array of shape (len(mu), len(nu)), optional
        Defaults to ``|x - y|**rho``.
    mode : {'none', 'martingale', 'supermartingale', 'submartingale'}
        Drift constraint on each row: ``E[Y | X = x] - x`` is ``= 0``,
        ``<= 0`` or ``>= 0``.
    sense : {'min', 'max'}
    """
    x, y = mu.locations, nu.locations
    if cost is None:
        cost = np.abs(x[:, None] - y[None, :]) ** rho
    lp = TransportLP(
        row_weights=np.asarray(mu.weights, float),
        col_weights=np.asarray(nu.weights, float),
        cost=np.asarray(cost, float),
        mode=mode,
        sense=sense,
        row_locations=np.asarray(x, float),
        col_locations=np.asarray(y, float),
    )
    return solve(lp, method)


def martingale_cost_range(mu: DiscreteMeasure, nu: DiscreteMeasure, rho: float = 1.0,
                          method: str = "auto") -> tuple[float, float]:
    lo = min_cost_coupling(mu, nu, rho=rho, mode="martingale", sense="min", method=method)
    hi = min_cost_coupling(mu, nu, rho=rho, mode="martingale", sense="max", method=method)
    return lo.value, hi.value


def w1_r2(j1, j2, max_atoms: int = 80, method: str = "auto") -> float:
    """Optimal transport cost between two joint measures with L1 ground cost on the plane."""
    if j1.n_atoms + j2.n_atoms > max_atoms:
        raise SizeLimit(f"combined support {j1.n_atoms + j2.n_atoms} exceeds {max_atoms}; coarsen first")
    cost = np.abs(j1.x[:, None] - j2.x[None, :]) + np.abs(j1.y[:, None] - j2.y[None, :])
    lp = TransportLP(
        row_weights=np.asarray(j1.w, float) / j1.w.sum(),
        col_weights=np.asarray(j2.w, float) / j2.w.sum(),
        cost=cost,
    )
    sol = solve(lp, method)
    if sol.status != "optimal":
        raise NumericalFailure(f"transport LP ended with status {sol.status}")
    return sol.value
