import json

import numpy as np
import pytest

from mcouple import (
    FingerprintMismatch,
    IdenticalMeasures,
    KernelBranchViolation,
    OrderViolation,
    SingleSignChangeViolation,
    build_kernel,
    from_atoms,
    phi_maps,
    q_it,
    q_mix,
    q_nit,
    q_product,
    q_zeta,
    validate_q,
)
from mcouple.generators import random_cx_pair, random_single_crossing_pair, random_symmetric_pair
from mcouple.qparam import QParam, fingerprint, map_distance
from mcouple.quantile_calculus import StepFunction, psi_pair

ALTERNATING = (
    from_atoms([(-3, 1 / 3), (0, 1 / 3), (3, 1 / 3)], normalize=True),
    from_atoms([(v, 1 / 6) for v in (-4, -2, -1, 1, 2, 4)], normalize=True),
)


def test_q_it_pair_a(pair_a):
    q = q_it(*pair_a)
    assert q.pi_plus(*pair_a) == [(0.0, 0.5, 0.5, 1.0)]
    rep = validate_q(q, *pair_a)
    assert rep.marginal1_err == rep.marginal2_err == 0.0
    assert rep.support_mass_above_diagonal == rep.component_mass == 1.0


def test_q_it_pair_b_breakpoint(pair_b):
    pieces = q_it(*pair_b).pi_plus(*pair_b)
    assert any(abs(b - 5 / 56) < 1e-15 for _, b, _, _ in pieces)
    assert validate_q(q_it(*pair_b), *pair_b).valid


def test_constructors_reject_bad_pairs(pair_a, pair_d):
    for ctor in (q_it, q_nit, q_product, q_zeta):
        with pytest.raises(IdenticalMeasures):
            ctor(pair_a[0], pair_a[0])
        with pytest.raises(OrderViolation):
            ctor(*pair_d)
    for ctor in (q_nit, q_product):
        with pytest.raises(SingleSignChangeViolation):
            ctor(*ALTERNATING)


def test_q_product_pair_a(pair_a):
    [(cell, targets)] = q_product(*pair_a).pi_plus(*pair_a)
    assert cell == (0.0, 0.5)
    assert targets == [(0.5, 1.0, 1.0)]


def test_q_product_pair_b_valid(pair_b):
    assert validate_q(q_product(*pair_b), *pair_b).valid


def test_q_nit_pair_a(pair_a):
    assert q_nit(*pair_a).pi_plus(*pair_a) == [(0.0, 0.5, 1.0, 0.5)]


def test_q_nit_symmetric_matches_reflection(rng):
    # for symmetric pairs the decreasing map is u -> 1 - u
    for _ in range(20):
        mu, nu, _ = random_symmetric_pair(rng)
        for a, b, va, vb in q_nit(mu, nu).pi_plus(mu, nu):
            assert va == pytest.approx(1.0 - a, abs=1e-12)
            assert vb == pytest.approx(1.0 - b, abs=1e-12)


def test_q_zeta_pair_b(pair_b):
    q = q_zeta(*pair_b)
    assert 0.0 < q.u0 - q.eps < q.u0 < 3 / 8
    assert validate_q(q, *pair_b).valid
    assert map_distance(q, q_it(*pair_b), *pair_b) > 0.0


def test_q_zeta_pair_a_differs_but_same_coupling(pair_a):
    from mcouple import build_coupling

    q = q_zeta(*pair_a)
    assert map_distance(q, q_it(*pair_a), *pair_a) > 0.0
    a = build_coupling(q, *pair_a).as_dict()
    b = build_coupling(q_it(*pair_a), *pair_a).as_dict()
    assert a.keys() == b.keys()
    assert all(abs(a[k] - b[k]) <= 1e-12 for k in a)


def test_q_mix(pair_a, pair_b):
    q = q_mix(0.5, q_it(*pair_b), q_zeta(*pair_b))
    assert validate_q(q, *pair_b).valid
    with pytest.raises(FingerprintMismatch):
        q_mix(0.5, q_it(*pair_a), q_it(*pair_b))
    with pytest.raises(ValueError):
        q_mix(1.5, q_it(*pair_b), q_it(*pair_b))


def test_support_below_diagonal_flagged():
    mu, nu = ALTERNATING
    bad = QParam("Zeta", fingerprint(mu, nu), u0=0.95, eps=0.9)
    rep = validate_q(bad, mu, nu)
    assert not rep.valid
    assert rep.support_mass_above_diagonal < 1.0
    with pytest.raises(KernelBranchViolation):
        build_kernel(bad, mu, nu)


def test_json_round_trip(pair_b):
    q = q_mix(0.25, q_zeta(*pair_b), q_mix(0.5, q_it(*pair_b), q_nit(*pair_b)))
    back = QParam.from_dict(json.loads(q.to_json()))
    assert back == q
    assert json.loads(q.to_json())["kind"] == "Mixture"


def test_fingerprint_check(pair_a, pair_b):
    with pytest.raises(FingerprintMismatch):
        validate_q(q_it(*pair_a), *pair_b)
    assert fingerprint(*pair_a) != fingerprint(*pair_b)


def test_every_constructor_validates(rng):
    for _ in range(150):
        mu, nu = random_cx_pair(rng, max_mu=6, max_nu=12)
        qs = [q_it(mu, nu), q_zeta(mu, nu)]
        qs.append(q_mix(float(rng.uniform()), qs[0], qs[1]))
        for q in qs:
            assert validate_q(q, mu, nu).valid, q
    for _ in range(100):
        mu, nu = random_single_crossing_pair(rng, max_mu=6, max_nu=12)
        for q in (q_nit(mu, nu), q_product(mu, nu), q_mix(0.3, q_nit(mu, nu), q_product(mu, nu))):
            assert validate_q(q, mu, nu).valid, q


def test_reverse_factorization_of_it(rng):
    # both factorizations integrate hu(u) hv(v) as an integral over psi levels;
    # refining the level grid at every breakpoint makes each side an exact sum
    for _ in range(40):
        mu, nu = random_cx_pair(rng)
        pp, pm, gamma = psi_pair(mu, nu)
        phi, phi_t, _ = phi_maps(mu, nu)
        hu = StepFunction([0, 0.25, 0.6, 1], rng.normal(size=3))
        hv = StepFunction([0, 0.4, 0.8, 1], rng.normal(size=3))
        levels = np.unique(np.concatenate((pp(hu.breakpoints), pm(hv.breakpoints), pp.values, pm.values)))
        levels = levels[(levels >= 0) & (levels <= gamma)]
        wm = 0.5 * (levels[1:] + levels[:-1])
        dw = np.diff(levels)
        u = pp.inverse()(wm)
        v = pm.inverse()(wm)
        fwd = float(np.sum(hu(u) * hv(phi(u)) * dw))
        back = float(np.sum(hu(phi_t(v)) * hv(v) * dw))
        assert fwd == pytest.approx(back, abs=1e-12 * (1 + gamma))
