import numpy as np
import pytest

from sbsos_slam.factor_graph import Assignment, FactorGraph, LandmarkFactor, Pose2, RelPoseFactor


def random_assignment(rng, n, w=0, normalized=True):
    th = rng.uniform(-np.pi, np.pi, n)
    if normalized:
        cs = np.column_stack([np.cos(th), np.sin(th)])
    else:
        cs = rng.normal(size=(n, 2))
    poses = np.column_stack([cs, rng.normal(scale=2.0, size=(n, 2))])
    return Assignment(poses, rng.normal(scale=2.0, size=(w, 2)))


def random_graph(rng, n, w=0, extra=None):
    """Chain plus random extra edges and landmark observations, random weights."""
    pairs = [(i, i + 1) for i in range(n - 1)]
    extra = n // 2 if extra is None else extra
    for _ in range(extra):
        i, j = sorted(rng.choice(n, 2, replace=False))
        pairs.append((int(i), int(j)))
    edges = [
        RelPoseFactor(i, j, float(rng.uniform(-np.pi, np.pi)), *rng.normal(size=2), *rng.uniform(0.5, 3.0, 3))
        for i, j in pairs
    ]
    land = []
    for ell in range(w):
        for i in sorted(set(rng.choice(n, size=min(n, 2), replace=False))):
            land.append(LandmarkFactor(int(i), ell, *rng.normal(size=2), *rng.uniform(0.5, 3.0, 2)))
    return FactorGraph(n, w, edges, land)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
