import numpy as np
import pytest
from scipy import sparse

from mcouple import (
    SizeLimit,
    build_coupling,
    build_itmc,
    check_order,
    comonotone,
    from_atoms,
    min_cost_coupling,
    q_it,
    q_zeta,
    w1_r2,
    wasserstein_1d,
)
from mcouple.coupling_builder import JointMeasure
from mcouple.generators import random_cx_pair, random_pair
from mcouple.lp_oracle import TransportLP, martingale_cost_range, simplex, solve


def test_simplex_small_problem():
    # min x1 + 2 x2 with x1 + x2 = 1, x1 - x3 = 0.25
    status, x, _ = simplex(np.array([1.0, 2.0, 0.0]), np.array([[1.0, 1.0, 0.0], [1.0, 0.0, -1.0]]),
                           np.array([1.0, 0.25]))
    assert status == "optimal"
    assert np.allclose(x, [1.0, 0.0, 0.75])
    status, x, _ = simplex(np.array([1.0, 1.0]), np.array([[1.0, 1.0]]), np.array([-1.0]))
    assert status == "infeasible" and x is None


def test_pair_a_values(pair_a):
    assert min_cost_coupling(*pair_a, mode="martingale").value == pytest.approx(1.5, abs=1e-12)
    assert min_cost_coupling(*pair_a, mode="martingale", sense="max").value == pytest.approx(1.5, abs=1e-12)
    assert min_cost_coupling(*pair_a).value == pytest.approx(1.0, abs=1e-12)


def test_infeasible_martingale():
    sol = min_cost_coupling(from_atoms([(-1, 0.5), (1, 0.5)]), from_atoms([(0, 1.0)]), mode="martingale")
    assert sol.status == "infeasible" and sol.plan is None


def test_unconstrained_is_w1(rng):
    for _ in range(100):
        mu, nu = random_pair(rng)
        assert min_cost_coupling(mu, nu).value == pytest.approx(wasserstein_1d(mu, nu), abs=1e-9)


def test_simplex_agrees_with_highs(rng):
    for _ in range(40):
        mu, nu = random_cx_pair(rng)
        for mode in ("none", "martingale"):
            a = min_cost_coupling(mu, nu, rho=1.5, mode=mode, method="simplex")
            b = min_cost_coupling(mu, nu, rho=1.5, mode=mode, method="highs")
            assert a.status == b.status == "optimal"
            assert a.value == pytest.approx(b.value, abs=1e-8 * (1 + abs(b.value)))


def test_martingale_feasible_iff_cx(rng):
    for i in range(100):
        mu, nu = random_cx_pair(rng) if i % 2 else random_pair(rng, 6)
        sol = min_cost_coupling(mu, nu, mode="martingale")
        assert (sol.status == "optimal") == check_order(mu, nu).cx, (mu, nu)


def test_drift_modes(pair_d):
    sup = min_cost_coupling(*pair_d, mode="supermartingale")
    assert sup.status == "optimal" and sup.residual <= 1e-12
    assert min_cost_coupling(*pair_d, mode="submartingale").status == "infeasible"


def _plan_vector(j, mu, nu):
    P = np.zeros((mu.n_atoms, nu.n_atoms))
    ix = {x: i for i, x in enumerate(mu.locations.tolist())}
    iy = {y: i for i, y in enumerate(nu.locations.tolist())}
    for (x, y), w in j.as_dict().items():
        P[ix[x], iy[y]] += w
    return P


def test_family_builds_are_lp_feasible(rng):
    # the LP constraint matrices are an independent check of the builders
    for _ in range(50):
        mu, nu = random_cx_pair(rng)
        lp = TransportLP(mu.weights, nu.weights, np.abs(mu.locations[:, None] - nu.locations[None, :]),
                         mode="martingale", row_locations=mu.locations, col_locations=nu.locations)
        A_eq, b_eq, _, _ = lp.constraints()
        lo = solve(lp).value
        for q in (q_it(mu, nu), q_zeta(mu, nu)):
            P = _plan_vector(build_coupling(q, mu, nu), mu, nu)
            assert float(np.max(np.abs(A_eq @ P.ravel() - b_eq))) <= 1e-10
            assert np.min(P) >= 0.0
            assert lo <= float(np.sum(P * lp.cost)) + 1e-10


def test_constraints_are_sparse(pair_b):
    mu, nu = pair_b
    lp = TransportLP(mu.weights, nu.weights, np.zeros((2, 3)), mode="submartingale",
                     row_locations=mu.locations, col_locations=nu.locations)
    A_eq, b_eq, A_ub, b_ub = lp.constraints()
    assert sparse.issparse(A_eq) and A_eq.shape == (5, 6) and A_ub.shape == (2, 6)
    assert b_ub.tolist() == [0.0, 0.0]


def test_cost_range_pair_b(pair_b):
    lo, hi = martingale_cost_range(*pair_b)
    c = float(np.dot(build_itmc(*pair_b).w, np.abs(build_itmc(*pair_b).x - build_itmc(*pair_b).y)))
    assert lo - 1e-10 <= c <= hi + 1e-10


def test_w1_r2(pair_a):
    j = build_itmc(*pair_a)
    assert w1_r2(j, j) == pytest.approx(0.0, abs=1e-15)
    assert w1_r2(j, comonotone(*pair_a)) == pytest.approx(0.5, abs=1e-12)
    shifted = JointMeasure.from_triples(j.x + 0.75, j.y - 0.75, j.w)
    assert w1_r2(j, shifted) == pytest.approx(1.5, abs=1e-12)
    for t in (0.3, -2.0):
        moved = JointMeasure.from_triples(j.x + t, j.y + t, j.w)
        assert w1_r2(j, moved) == pytest.approx(2 * abs(t), abs=1e-12)
    with pytest.raises(SizeLimit):
        w1_r2(j, j, max_atoms=4)


def test_size_limit():
    big = from_atoms([(float(i), 1.0) for i in range(600)], normalize=True)
    with pytest.raises(SizeLimit):
        min_cost_coupling(big, big)
    mid = from_atoms([(float(i), 1.0) for i in range(80)], normalize=True)
    with pytest.raises(SizeLimit):
        min_cost_coupling(mid, mid, method="simplex")
