"""Synthetic planar SLAM problems, prefixes and length scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .factor_graph import (
    Assignment,
    FactorGraph,
    LandmarkFactor,
    Pose2,
    RelPoseFactor,
    relative,
    wrap_angle,
)


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement noise; ``kappa_rot`` is the rotation concentration.

    Relative angles are perturbed by von Mises noise with concentration
    ``2 * kappa_rot`` and the rotation weight is ``kappa_rot / 2``; this pairs
    the chordal rotation residual with the planar Langevin density.  With
    ``disabled`` the measurements are exact but the weights are unchanged.
    """

    kappa_rot: float = 50.0
    sigma_x: float = 0.05
    sigma_y: float = 0.05
    sigma_lx: float = 0.05
    sigma_ly: float = 0.05
    seed: int = 0
    disabled: bool = False

    def __post_init__(self):
        for name in ("kappa_rot", "sigma_x", "sigma_y", "sigma_lx", "sigma_ly"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def w_rot2(self) -> float:
        return self.kappa_rot / 2.0

    @property
    def w_x2(self) -> float:
        return 1.0 / self.sigma_x**2

    @property
    def w_y2(self) -> float:
        return 1.0 / self.sigma_y**2


# ---------------------------------------------------------------- trajectories


def _manhattan_walk(n: int, rng: np.random.Generator, p_turn: float = 0.3) -> list[Pose2]:
    """Unit steps on a grid, confined to a square so the walk revisits places."""
    side = max(2, int(round(math.sqrt(n) / 2)))
    headings = [(1, 0), (0, 1), (-1, 0), (0, -1)]
    pos = np.array([0, 0])
    h = 0
    poses = [Pose2.identity()]
    for _ in range(n - 1):
        if rng.random() < p_turn:
            h = (h + (1 if rng.random() < 0.5 else 3)) % 4
        for _attempt in range(4):
            nxt = pos + headings[h]
            if 0 <= nxt[0] <= side and 0 <= nxt[1] <= side:
                break
            h = (h + (1 if rng.random() < 0.5 else 3)) % 4
        pos = pos + headings[h]
        poses.append(Pose2.from_angle(h * math.pi / 2, float(pos[0]), float(pos[1])))
    return poses


def _loop(n: int, rng: np.random.Generator, laps: float = 2.0) -> list[Pose2]:
    radius = max(1.0, n / (2 * math.pi * laps))
    poses = []
    for k in range(n):
        a = 2 * math.pi * laps * k / max(n, 1)
        x, y = radius * math.sin(a), radius * (1 - math.cos(a))
        poses.append(Pose2.from_angle(a + 0.02 * rng.standard_normal(), x, y))
    return poses


def _random_walk(n: int, rng: np.random.Generator, step: float = 1.0) -> list[Pose2]:
    theta = np.concatenate([[0.0], np.cumsum(rng.uniform(-1.0, 1.0, n - 1))])
    xy = np.concatenate([[[0.0, 0.0]], np.cumsum(rng.normal(scale=step, size=(n - 1, 2)), axis=0)])
    return [Pose2.from_angle(float(t), float(p[0]), float(p[1])) for t, p in zip(theta, xy)]


SHAPES = {"manhattan": _manhattan_walk, "loop": _loop, "random": _random_walk}


# ---------------------------------------------------------------- measurements


def _noisy_pose_factor(i: int, j: int, a: Pose2, b: Pose2, noise: NoiseSpec, rng: np.random.Generator) -> RelPoseFactor:
    rel = relative(a, b)
    theta, x, y = rel.theta, rel.x, rel.y
    if not noise.disabled:
        theta = float(wrap_angle(theta + rng.vonmises(0.0, 2.0 * noise.kappa_rot)))
        x += noise.sigma_x * rng.standard_normal()
        y += noise.sigma_y * rng.standard_normal()
    return RelPoseFactor(i, j, theta, x, y, noise.w_rot2, noise.w_x2, noise.w_y2)


def _noisy_landmark_factor(i: int, ell: int, pose: Pose2, lm: np.ndarray, noise: NoiseSpec, rng) -> LandmarkFactor:
    local = pose.rotation.T @ (lm - pose.translation)
    x, y = float(local[0]), float(local[1])
    if not noise.disabled:
        x += noise.sigma_lx * rng.standard_normal()
        y += noise.sigma_ly * rng.standard_normal()
    return LandmarkFactor(i, ell, x, y, 1.0 / noise.sigma_lx**2, 1.0 / noise.sigma_ly**2)


def synthesize(
    shape: str = "manhattan",
    n: int = 10,
    w: int = 0,
    noise: NoiseSpec = NoiseSpec(),
    *,
    closure_radius: float = 0.5,
    closure_prob: float = 0.6,
    closure_fraction: float | None = 0.3,
    landmark_range: float = 2.5,
    max_observations: int = 4,
) -> tuple[FactorGraph, Assignment]:
    """Ground-truth trajectory plus a noisy factor graph over it.

    Odometry edges ``i -> i+1`` are always present.  Loop closures join
    non-consecutive poses closer than ``closure_radius`` (each kept with
    probability ``closure_prob``), at most ``closure_fraction * n`` of them.
    Landmarks are scattered uniformly in the
    trajectory's bounding box and observed from poses within
    ``landmark_range``; every landmark is observed at least once.
    """
    if n < 2:
        raise ValueError("need at least two poses")
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; choose from {sorted(SHAPES)}")
    rng = np.random.default_rng(noise.seed)
    poses = SHAPES[shape](n, rng)
    pts = np.array([[p.x, p.y] for p in poses])

    edges = [_noisy_pose_factor(i, i + 1, poses[i], poses[i + 1], noise, rng) for i in range(n - 1)]
    closures = []
    for j in range(n):
        for i in range(j - 1):
            if np.hypot(*(pts[i] - pts[j])) < closure_radius and rng.random() < closure_prob:
                closures.append((i, j))
    max_closures = None if closure_fraction is None else int(round(closure_fraction * n))
    if max_closures is not None and len(closures) > max_closures:
        keep = np.sort(rng.choice(len(closures), size=max_closures, replace=False))
        closures = [closures[k] for k in keep]
    edges += [_noisy_pose_factor(i, j, poses[i], poses[j], noise, rng) for i, j in closures]

    lo, hi = pts.min(axis=0) - 0.5, pts.max(axis=0) + 0.5
    landmarks = rng.uniform(lo, hi, size=(w, 2)) if w else np.zeros((0, 2))
    land_edges = []
    for ell, lm in enumerate(landmarks):
        d = np.hypot(*(pts - lm).T)
        seen = np.flatnonzero(d < landmark_range)
        if seen.size == 0:
            seen = np.array([int(np.argmin(d))])
        if seen.size > max_observations:
            seen = np.sort(rng.choice(seen, size=max_observations, replace=False))
        for i in seen:
            land_edges.append(_noisy_landmark_factor(int(i), ell, poses[i], lm, noise, rng))
    land_edges.sort(key=lambda f: (f.i, f.ell))
    graph = FactorGraph(n, w, edges, land_edges)
    truth = Assignment.from_poses(poses, [])
    truth = Assignment(truth.poses, landmarks)
    return graph, truth


def take_prefix(graph: FactorGraph, truth: Assignment | None, N: int) -> tuple[FactorGraph, Assignment | None]:
    """First ``N`` poses, the landmarks they observe, and the factors among them.

    Ids are renumbered densely; ``pose_ids`` / ``landmark_ids`` keep the
    originals.
    """
    if N < 1:
        raise ValueError("prefix length must be positive")
    N = min(N, graph.n)
    kept_land = sorted({f.ell for f in graph.land_edges if f.i < N})
    lmap = {ell: k for k, ell in enumerate(kept_land)}
    edges = [f for f in graph.edges if f.i < N and f.j < N]
    land = [replace(f, ell=lmap[f.ell]) for f in graph.land_edges if f.i < N]
    sub = FactorGraph(
        N,
        len(kept_land),
        edges,
        land,
        tuple(graph.pose_ids[:N]),
        tuple(graph.landmark_ids[ell] for ell in kept_land),
    )
    sub_truth = None
    if truth is not None:
        sub_truth = Assignment(truth.poses[:N], truth.landmarks[kept_land] if kept_land else np.zeros((0, 2)))
    return sub, sub_truth


# ---------------------------------------------------------------- scaling


@dataclass(frozen=True)
class ScaleTransform:
    """Divide all lengths by ``factor`` (and multiply translation weights by ``factor**2``)."""

    factor: float = 1.0

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError("scale factor must be positive")

    @classmethod
    def auto(cls, graph: FactorGraph) -> ScaleTransform:
        """Largest absolute translation or landmark measurement (1 if all zero)."""
        vals = [abs(v) for f in graph.edges for v in (f.x, f.y)]
        vals += [abs(v) for f in graph.land_edges for v in (f.x, f.y)]
        m = max(vals, default=0.0)
        return cls(m if m > 0 else 1.0)


def scale(graph: FactorGraph, t: ScaleTransform) -> FactorGraph:
    f = t.factor
    if f == 1.0:
        return graph
    f2 = f * f
    edges = [
        RelPoseFactor(e.i, e.j, e.theta, e.x / f, e.y / f, e.w_rot2, e.w_x2 * f2, e.w_y2 * f2) for e in graph.edges
    ]
    land = [LandmarkFactor(e.i, e.ell, e.x / f, e.y / f, e.w_x2 * f2, e.w_y2 * f2) for e in graph.land_edges]
    return FactorGraph(graph.n, graph.w, edges, land, graph.pose_ids, graph.landmark_ids)


def scale_assignment(a: Assignment, t: ScaleTransform) -> Assignment:
    p = np.array(a.poses)
    p[:, 2:] /= t.factor
    return Assignment(p, np.array(a.landmarks) / t.factor)


def unscale(a: Assignment, t: ScaleTransform) -> Assignment:
    if t.factor == 1.0:
        return a
    p = np.array(a.poses)
    p[:, 2:] *= t.factor
    return Assignment(p, np.array(a.landmarks) * t.factor)
