import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbsos_slam.factor_graph import FactorGraph, LandmarkFactor, RelPoseFactor, VariableIndex, factor_cost_landmark, factor_cost_pose
from sbsos_slam.poly import (
    Polynomial,
    build_constraints,
    build_landmark_cost,
    build_pose_cost,
    constant_hessian,
    hessian,
    is_sos_convex,
    monomial,
    poly_sum,
)

from conftest import random_assignment

X = Polynomial.variable


def test_arithmetic_identities():
    c, s = X(0), X(1)
    p = c * c + 3 * s
    assert p + Polynomial() == p
    assert (c + s) * (c - s) == c * c - s * s


def test_pruning():
    p = X(0) + 1e-16 * X(1)
    assert p.support == frozenset({0})


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_degree_of_product(seed):
    rng = np.random.default_rng(seed)

    def rand_poly():
        out = Polynomial()
        for _ in range(4):
            vs = rng.integers(0, 4, size=rng.integers(0, 4))
            out = out + float(rng.uniform(1, 2)) * Polynomial({monomial(*vs): 1.0})
        return out + X(0) * X(1)

    p, q = rand_poly(), rand_poly()
    assert (p * q).degree == p.degree + q.degree


def test_pose_cost_matches_oracle(rng):
    idx = VariableIndex(2)
    for _ in range(20):
        f = RelPoseFactor(0, 1, float(rng.uniform(-3, 3)), *rng.normal(size=2), *rng.uniform(0.1, 5, 3))
        p = build_pose_cost(f, idx)
        assert p.degree == 2
        assert p.support <= set(range(8))
        for _ in range(50):
            a = random_assignment(rng, 2, normalized=False)
            assert p.eval(a.to_vector()) == pytest.approx(factor_cost_pose(f, a), rel=1e-10, abs=1e-10)


def test_pose_cost_cj_squared_coefficient():
    f = RelPoseFactor(0, 1, 0.7, 0.0, 0.0, w_rot2=3.0)
    p = build_pose_cost(f, VariableIndex(2))
    assert p.coefficient(monomial(4, 4)) == pytest.approx(2 * 3.0)


def test_landmark_cost_matches_oracle(rng):
    idx = VariableIndex(1, 1)
    for _ in range(20):
        f = LandmarkFactor(0, 0, *rng.normal(size=2), *rng.uniform(0.1, 5, 2))
        p = build_landmark_cost(f, idx)
        assert p.degree == 2
        assert p.support <= set(range(6))
        for _ in range(50):
            a = random_assignment(rng, 1, 1, normalized=False)
            assert p.eval(a.to_vector()) == pytest.approx(factor_cost_landmark(f, a), rel=1e-10, abs=1e-10)


def test_constraints():
    cons = build_constraints(3, VariableIndex(3))
    assert len(cons) == 6
    g1, g2 = cons[0].g, cons[1].g
    v = np.zeros(12)
    v[0] = 1.0
    assert g1.eval(v) == 0.0 and g2.eval(v) == 1.0
    v[0] = v[1] = 0.5
    assert g1.eval(v) == pytest.approx(0.5)


def test_hessian_examples():
    c, s = X(0), X(1)
    _, H = constant_hessian(c * c + s * s - 1.0)
    assert np.array_equal(H, 2 * np.eye(2))
    vs, Hp = hessian(3 * c + 2 * s)
    assert all(e.is_zero for row in Hp for e in row)


def test_rotation_residual_hessian_is_rank_one():
    # one rotation residual (c_j - c_i c_ij + s_i s_ij) weighted by w: Hessian 2 w v v'
    cm, sm, w = np.cos(0.4), np.sin(0.4), 2.5
    ci, si, cj = X(0), X(1), X(4)
    r = cj - cm * ci + sm * si
    _, H = constant_hessian(w * r * r, (0, 1, 4))
    v = np.sqrt(2 * w) * np.array([-cm, sm, 1.0])
    assert np.allclose(H, np.outer(v, v), atol=1e-12)


def test_is_sos_convex_examples():
    c, s = X(0), X(1)
    ok, L = is_sos_convex(c * c + s * s - 1.0)
    assert ok and np.allclose(L @ L.T, 2 * np.eye(2), atol=1e-8)
    ok, _ = is_sos_convex(-1.0 * c * c)
    assert not ok
    with pytest.raises(ValueError):
        is_sos_convex(c * c * c)


def test_sum_of_costs_is_sos_convex(rng):
    idx = VariableIndex(3, 1)
    fs = [RelPoseFactor(0, 1, 0.3, 1.0, 0.0, 2.0, 3.0, 4.0), RelPoseFactor(1, 2, -1.0, 0.5, 0.5)]
    ps = [build_pose_cost(f, idx) for f in fs] + [build_landmark_cost(LandmarkFactor(2, 0, 1.0, 1.0), idx)]
    ok, L = is_sos_convex(poly_sum(ps))
    assert ok
    _, H = constant_hessian(poly_sum(ps))
    assert np.abs(L @ L.T - H).max() <= 1e-8


def test_substitute_and_shift():
    p = X(0) * X(1) + 2 * X(1) + 1.0
    assert p.substitute({0: 3.0}) == 5 * X(1) + 1.0
    q = p.shift({0: 1.0, 1: -2.0})
    rng = np.random.default_rng(0)
    for _ in range(10):
        v = rng.normal(size=2)
        assert q.eval(v) == pytest.approx(p.eval(v + np.array([1.0, -2.0])))
