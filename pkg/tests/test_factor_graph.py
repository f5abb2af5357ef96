import math

import numpy as np
import pytest

from sbsos_slam.factor_graph import (
    Assignment,
    FactorGraph,
    Landmark2,
    LandmarkFactor,
    Pose2,
    RelPoseFactor,
    compose,
    factor_cost_landmark,
    factor_cost_pose,
    inverse,
    relative,
    total_cost,
    wrap_angle,
)

from conftest import random_assignment, random_graph


def close_pose(a, b, tol=1e-9):
    return all(abs(u - v) <= tol for u, v in zip((a.c, a.s, a.x, a.y), (b.c, b.s, b.x, b.y)))


def test_compose_identity():
    assert close_pose(compose(Pose2.identity(), Pose2.identity()), Pose2.identity())


def test_compose_quarter_turn():
    a = Pose2.from_angle(math.pi / 2)
    b = Pose2.from_angle(0.0, 1.0, 0.0)
    assert close_pose(compose(a, b), Pose2.from_angle(math.pi / 2, 0.0, 1.0))


def test_compose_inverse(rng):
    for _ in range(20):
        a = Pose2.from_angle(rng.uniform(-3, 3), *rng.normal(size=2))
        assert close_pose(compose(a, inverse(a)), Pose2.identity())


def test_relative_properties(rng):
    p = Pose2.from_angle(0.3, 1.0, -2.0)
    assert close_pose(relative(p, p), Pose2.identity())
    assert close_pose(relative(Pose2.identity(), Pose2.from_angle(0.0, 2.0, 3.0)), Pose2.from_angle(0.0, 2.0, 3.0))
    for _ in range(50):
        a = Pose2.from_angle(rng.uniform(-3, 3), *rng.normal(size=2))
        b = Pose2.from_angle(rng.uniform(-3, 3), *rng.normal(size=2))
        assert close_pose(compose(a, relative(a, b)), b)


def test_pose_cost_examples():
    ident = Assignment.from_poses([Pose2.identity(), Pose2.identity()])
    f = RelPoseFactor(0, 1, 0.0, 0.0, 0.0)
    assert factor_cost_pose(f, ident) == 0.0
    # quarter turn at the origin against an identity measurement: four unit residuals
    a = Assignment.from_poses([Pose2.identity(), Pose2.from_angle(math.pi / 2)])
    assert factor_cost_pose(f, a) == pytest.approx(4.0, abs=1e-12)
    a = Assignment.from_poses([Pose2.identity(), Pose2.from_angle(0.0, 2.0, 0.0)])
    assert factor_cost_pose(RelPoseFactor(0, 1, 0.0, 1.0, 0.0), a) == pytest.approx(1.0, abs=1e-12)


def test_landmark_cost_examples():
    base = [Pose2.identity()]
    a = Assignment.from_poses(base, [Landmark2(1.0, 2.0)])
    assert factor_cost_landmark(LandmarkFactor(0, 0, 1.0, 2.0), a) == 0.0
    a = Assignment.from_poses(base, [Landmark2(0.0, 0.0)])
    assert factor_cost_landmark(LandmarkFactor(0, 0, 1.0, 0.0), a) == pytest.approx(1.0)
    a = Assignment.from_poses([Pose2.from_angle(math.pi / 2)], [Landmark2(0.0, 1.0)])
    assert factor_cost_landmark(LandmarkFactor(0, 0, 1.0, 0.0), a) == pytest.approx(0.0, abs=1e-24)


def test_missing_variable_raises():
    a = Assignment.from_poses([Pose2.identity()])
    with pytest.raises(KeyError):
        factor_cost_pose(RelPoseFactor(0, 1, 0.0, 0.0, 0.0), a)


def test_total_cost_is_additive(rng):
    g = random_graph(rng, 5, 2)
    a = random_assignment(rng, 5, 2)
    expect = sum(factor_cost_pose(f, a) for f in g.edges) + sum(factor_cost_landmark(f, a) for f in g.land_edges)
    assert total_cost(g, a) == pytest.approx(expect, rel=1e-15)
    single = FactorGraph(2, 0, [g.edges[0]]) if g.edges[0].i < 2 and g.edges[0].j < 2 else None
    if single is not None:
        assert total_cost(single, Assignment(a.poses[:2])) == factor_cost_pose(g.edges[0], a)


def test_empty_graph_cost():
    assert total_cost(FactorGraph(1), Assignment.from_poses([Pose2.identity()])) == 0.0


def _isotropic(g):
    edges = [RelPoseFactor(f.i, f.j, f.theta, f.x, f.y, f.w_rot2, f.w_x2, f.w_x2) for f in g.edges]
    land = [LandmarkFactor(f.i, f.ell, f.x, f.y, f.w_x2, f.w_x2) for f in g.land_edges]
    return FactorGraph(g.n, g.w, edges, land)


def test_gauge_invariance(rng):
    # residuals live in the world frame, so full SE(2) invariance needs w_x2 == w_y2
    g = _isotropic(random_graph(rng, 6, 2))
    a = random_assignment(rng, 6, 2)
    for _ in range(5):
        t = Pose2.from_angle(rng.uniform(-3, 3), *rng.normal(scale=5, size=2))
        assert total_cost(g, a.transformed(t)) == pytest.approx(total_cost(g, a), rel=1e-8)


def test_translation_invariance_anisotropic(rng):
    g = random_graph(rng, 6, 2)
    a = random_assignment(rng, 6, 2)
    t = Pose2.from_angle(0.0, *rng.normal(scale=5, size=2))
    assert total_cost(g, a.transformed(t)) == pytest.approx(total_cost(g, a), rel=1e-8)


def test_zero_noise_consistency(rng):
    poses = [Pose2.from_angle(rng.uniform(-3, 3), *rng.normal(size=2)) for _ in range(6)]
    lms = [Landmark2(*rng.normal(size=2)) for _ in range(2)]
    edges = [RelPoseFactor.from_pose(i, i + 1, relative(poses[i], poses[i + 1]), 3.0, 5.0, 7.0) for i in range(5)]
    lf = []
    for ell, m in enumerate(lms):
        loc = poses[0].rotation.T @ (np.array([m.lx, m.ly]) - poses[0].translation)
        lf.append(LandmarkFactor(0, ell, *loc))
    g = FactorGraph(6, 2, edges, lf)
    assert total_cost(g, Assignment.from_poses(poses, lms)) <= 1e-12


def test_validation():
    with pytest.raises(ValueError):
        RelPoseFactor(0, 0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        RelPoseFactor(0, 1, 0.0, 0.0, 0.0, w_rot2=0.0)
    with pytest.raises(ValueError):
        FactorGraph(3, 0, [RelPoseFactor(0, 1, 0.0, 0.0, 0.0)])  # pose 2 disconnected
    with pytest.raises(ValueError):
        FactorGraph(2, 0, [RelPoseFactor(0, 2, 0.0, 0.0, 0.0)])


def test_measured_rotation_is_unit():
    f = RelPoseFactor(0, 1, 1.234, 0.0, 0.0)
    assert abs(f.c**2 + f.s**2 - 1) <= 1e-9


def test_wrap_angle():
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(0.5) == 0.5
