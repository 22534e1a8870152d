import json

import numpy as np
import pytest

from mcouple import (
    JointMeasure,
    OrderViolation,
    build_coupling,
    build_itmc,
    build_kernel,
    build_submartingale,
    build_supermartingale,
    comonotone,
    from_atoms,
    lift_to_joint,
    q_it,
    q_mix,
    q_nit,
    q_product,
    q_zeta,
    sample,
    verify_coupling,
)
from mcouple.coupling_builder import supermartingale_kernel, symmetric_kernel
from mcouple.generators import (
    random_cx_pair,
    random_dcx_pair,
    random_icx_pair,
    random_single_crossing_pair,
    random_symmetric_pair,
)
from mcouple.measures import mean_and_moment


def close(j1, j2, tol=1e-12):
    a, b = j1.as_dict(), j2.as_dict()
    return a.keys() == b.keys() and all(abs(a[k] - b[k]) <= tol for k in a)


def test_it_kernel_pair_a(pair_a):
    cells = [c for c in build_kernel(q_it(*pair_a), *pair_a) if c.b > c.a]
    assert [(c.a, c.b, c.tag) for c in cells] == [(0.0, 0.5, "U+"), (0.5, 1.0, "U-")]
    lo, hi = cells
    assert (lo.x, lo.stay_y, lo.targets) == (-1.0, -2.0, ((2.0, 0.25),))
    assert (hi.x, hi.stay_y, hi.targets) == (1.0, 2.0, ((-2.0, 0.25),))
    assert lo.stay_weight == 0.75


def test_lift_pair_a(pair_a):
    j = build_itmc(*pair_a)
    assert j.as_dict() == {(-1.0, -2.0): 0.375, (-1.0, 2.0): 0.125, (1.0, -2.0): 0.125, (1.0, 2.0): 0.375}


def test_single_atom_spread():
    mu, nu = from_atoms([(0, 1.0)]), from_atoms([(-1, 0.5), (1, 0.5)])
    assert build_itmc(mu, nu).as_dict() == {(0.0, -1.0): 0.5, (0.0, 1.0): 0.5}
    for c in build_kernel(q_it(mu, nu), mu, nu):
        if c.b > c.a:
            assert c.targets[0][1] == 0.5


def test_product_equals_it_on_pair_a(pair_a):
    assert close(build_coupling(q_product(*pair_a), *pair_a), build_itmc(*pair_a))


def test_pair_b(pair_b):
    j = build_itmc(*pair_b)
    assert j.n_atoms == 6
    rep = verify_coupling(j, *pair_b)
    assert rep.drift_sign == "martingale"
    assert rep.martingale_defect <= 1e-12
    assert max(rep.marginal_err_mu, rep.marginal_err_nu) <= 1e-12


def test_mixture_is_linear(pair_a, pair_b):
    it, z = q_it(*pair_b), q_zeta(*pair_b)
    mixed = build_coupling(q_mix(0.5, it, z), *pair_b)
    assert close(mixed, build_coupling(it, *pair_b).mix(build_coupling(z, *pair_b), 0.5))
    assert close(build_coupling(q_mix(1.0, it, z), *pair_b), build_coupling(it, *pair_b))
    assert close(build_coupling(q_mix(0.3, q_it(*pair_a), q_nit(*pair_a)), *pair_a), build_itmc(*pair_a))


def test_mixed_kernel_lifts_to_mixed_joint(rng):
    for _ in range(30):
        mu, nu = random_cx_pair(rng)
        lam = float(rng.uniform())
        q = q_mix(lam, q_it(mu, nu), q_zeta(mu, nu))
        assert close(lift_to_joint(build_kernel(q, mu, nu), mu), build_coupling(q, mu, nu), 1e-12)


def test_supermartingale_hand_example(pair_d):
    cells, u_d = supermartingale_kernel(*pair_d)
    assert u_d == 0.25
    j = build_supermartingale(*pair_d)
    assert j.as_dict() == {(0.0, -2.0): 0.5, (0.0, 1.0): 0.5}
    _, _, cm = j.conditional_means()
    assert cm.tolist() == [-0.5]


def test_supermartingale_u_d_zero_is_comonotone():
    mu = from_atoms([(1, 0.5), (3, 0.5)])
    nu = from_atoms([(0, 0.5), (2, 0.5)])
    assert close(build_supermartingale(mu, nu), comonotone(mu, nu))


def test_supermartingale_rejects_unordered(pair_a):
    with pytest.raises(OrderViolation):
        build_supermartingale(pair_a[1], pair_a[0])


def test_submartingale_hand_example():
    mu, nu = from_atoms([(0, 1.0)]), from_atoms([(-1, 0.5), (2, 0.5)])
    j = build_submartingale(mu, nu)
    assert j.as_dict() == {(0.0, -1.0): 0.5, (0.0, 2.0): 0.5}


def test_drift_builders_random(rng):
    for _ in range(60):
        mu, nu = random_dcx_pair(rng)
        j = build_supermartingale(mu, nu)
        rep = verify_coupling(j, mu, nu)
        assert max(rep.marginal_err_mu, rep.marginal_err_nu) <= 1e-12
        ux, _, cm = j.conditional_means()
        assert np.all(cm <= ux + 1e-12 * (1 + np.abs(ux)))
        if abs(mu.mean - nu.mean) <= 1e-12:
            assert rep.martingale_defect <= 1e-12 * (1 + np.max(np.abs(ux)))
        mu, nu = random_icx_pair(rng)
        j = build_submartingale(mu, nu)
        ux, _, cm = j.conditional_means()
        assert np.all(cm >= ux - 1e-12 * (1 + np.abs(ux)))
        rep = verify_coupling(j, mu, nu)
        assert max(rep.marginal_err_mu, rep.marginal_err_nu) <= 1e-12


def test_comonotone_examples(pair_a):
    assert comonotone(*pair_a).as_dict() == {(-1.0, -2.0): 0.5, (1.0, 2.0): 0.5}
    nu = from_atoms([(-2, 0.25), (0, 0.5), (2, 0.25)])
    assert comonotone(pair_a[0], nu).as_dict() == {(-1.0, -2.0): 0.25, (-1.0, 0.0): 0.25,
                                                   (1.0, 0.0): 0.25, (1.0, 2.0): 0.25}
    assert comonotone(nu, nu).as_dict() == {(-2.0, -2.0): 0.25, (0.0, 0.0): 0.5, (2.0, 2.0): 0.25}


def test_sampler_pair_a(pair_a):
    n = 10**5
    cells = build_kernel(q_it(*pair_a), *pair_a)
    pts = sample(cells, pair_a[0], n, seed=7)
    exact = build_itmc(*pair_a).as_dict()
    for (x, y), p in exact.items():
        freq = np.mean((pts[:, 0] == x) & (pts[:, 1] == y))
        assert abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_sampler_spread_mean_and_determinism():
    mu, nu = from_atoms([(0, 1.0)]), from_atoms([(-1, 0.5), (1, 0.5)])
    cells = build_kernel(q_it(mu, nu), mu, nu)
    n = 10**4
    pts = sample(cells, mu, n, seed=3)
    assert abs(pts[:, 1].mean()) <= 4 / np.sqrt(n)
    assert sample(cells, mu, n, seed=3).tobytes() == pts.tobytes()


def test_kernel_sign_structure_and_invariants(rng):
    for _ in range(120):
        mu, nu = random_cx_pair(rng)
        qs = [q_it(mu, nu), q_zeta(mu, nu)]
        for q in qs:
            cells = build_kernel(q, mu, nu)
            for c in cells:
                total = sum(p for _, p in c.targets)
                assert all(0.0 <= p <= 1.0 for _, p in c.targets) and total <= 1.0 + 1e-15
                if c.tag == "U+":
                    assert c.stay_y < c.x and all(y > c.x for y, _ in c.targets)
                elif c.tag == "U-":
                    assert c.stay_y > c.x and all(y < c.x for y, _ in c.targets)
                assert c.mean() == pytest.approx(c.x, abs=1e-12 * (1 + abs(c.x)))
            j = lift_to_joint(cells, mu)
            rep = verify_coupling(j, mu, nu)
            scale = 1 + np.max(np.abs(mu.locations))
            assert max(rep.marginal_err_mu, rep.marginal_err_nu) <= 1e-12
            assert rep.martingale_defect <= 1e-12 * scale
            assert rep.cost2_identity_err <= 1e-10


def test_symmetric_closed_form(rng):
    for _ in range(30):
        mu, nu, c = random_symmetric_pair(rng)
        direct = lift_to_joint(symmetric_kernel(mu, nu, c), mu)
        assert close(direct, build_coupling(q_nit(mu, nu), mu, nu), 1e-12)


def test_single_crossing_product_and_nit(rng):
    for _ in range(40):
        mu, nu = random_single_crossing_pair(rng)
        for q in (q_nit(mu, nu), q_product(mu, nu)):
            rep = verify_coupling(build_coupling(q, mu, nu), mu, nu)
            assert rep.martingale_defect <= 1e-12 * (1 + np.max(np.abs(mu.locations)))
            assert rep.bound_2w1_holds


def test_quadratic_identity(pair_b):
    j = build_itmc(*pair_b)
    var = mean_and_moment(pair_b[1], 2)[1] - mean_and_moment(pair_b[0], 2)[1]
    assert float(np.dot(j.w, (j.x - j.y) ** 2)) == pytest.approx(var, rel=1e-12)


def test_joint_serialization(pair_b):
    j = build_itmc(*pair_b)
    assert JointMeasure.from_dict(json.loads(json.dumps(j.to_dict()))) == j
    lines = j.to_csv().splitlines()
    assert lines[0] == "x,y,w" and len(lines) == 7
    assert float(sum(float(l.split(",")[2]) for l in lines[1:])) == pytest.approx(1.0, abs=1e-12)


def test_dust_is_dropped():
    j = JointMeasure.from_triples([0.0, 0.0, 1.0], [0.0, 1.0, 1.0], [0.5, 1e-17, 0.5])
    assert j.n_atoms == 2
    assert j.w.sum() == 1.0
