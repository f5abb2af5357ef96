"""Planar poses, landmarks, measurement factors and the exact MLE cost.

Rotations are carried as ``(c, s) = (cos theta, sin theta)`` so that the
values line up one-to-one with the polynomial variables used by the
relaxation.  The cost functions here are the reference objective that every
other module is checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class Pose2:
    """Rigid planar transform ``[R(c, s) | (x, y)]``."""

    c: float
    s: float
    x: float
    y: float

    @classmethod
    def identity(cls) -> Pose2:
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_angle(cls, theta: float, x: float = 0.0, y: float = 0.0) -> Pose2:
        return cls(math.cos(theta), math.sin(theta), float(x), float(y))

    @property
    def theta(self) -> float:
        return math.atan2(self.s, self.c)

    @property
    def rotation(self) -> np.ndarray:
        return np.array([[self.c, -self.s], [self.s, self.c]])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def is_normalized(self, tol: float = UNIT_TOL) -> bool:
        return abs(self.c * self.c + self.s * self.s - 1.0) <= tol

    def normalized(self) -> Pose2:
        r = math.hypot(self.c, self.s)
        if r == 0.0:
            raise ValueError("cannot normalize a pose with zero rotation part")
        return Pose2(self.c / r, self.s / r, self.x, self.y)

    def inverse(self) -> Pose2:
        return inverse(self)

    def __matmul__(self, other: Pose2) -> Pose2:
        return compose(self, other)


def compose(a: Pose2, b: Pose2) -> Pose2:
    """Return ``a * b``, re-normalizing the rotation part."""
    c = a.c * b.c - a.s * b.s
    s = a.s * b.c + a.c * b.s
    x = a.x + a.c * b.x - a.s * b.y
    y = a.y + a.s * b.x + a.c * b.y
    return Pose2(c, s, x, y).normalized()


def inverse(a: Pose2) -> Pose2:
    return Pose2(a.c, -a.s, -(a.c * a.x + a.s * a.y), a.s * a.x - a.c * a.y).normalized()


def relative(a: Pose2, b: Pose2) -> Pose2:
    """Noise-free measurement of ``b`` in the frame of ``a``: ``a^-1 * b``."""
    return compose(inverse(a), b)


@dataclass(frozen=True)
class Landmark2:
    lx: float
    ly: float

    def __post_init__(self):
        if not (math.isfinite(self.lx) and math.isfinite(self.ly)):
            raise ValueError("landmark coordinates must be finite")


def _check_weights(*weights: float) -> None:
    for w in weights:
        if not (w > 0.0 and math.isfinite(w)):
            raise ValueError(f"measurement weights must be positive and finite, got {w!r}")


@dataclass(frozen=True)
class RelPoseFactor:
    """Relative pose measurement between poses ``i`` and ``j``.

    The measured rotation is stored as its angle ``theta`` so that text
    serialization is value-exact; ``c`` and ``s`` are derived from it.
    Weights are the rotation concentration ``w_rot2`` and the diagonal of the
    translation information matrix.
    """

    i: int
    j: int
    theta: float
    x: float
    y: float
    w_rot2: float = 1.0
    w_x2: float = 1.0
    w_y2: float = 1.0
    c: float = field(init=False, repr=False, compare=False)
    s: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("relative pose factor must connect two distinct poses")
        _check_weights(self.w_rot2, self.w_x2, self.w_y2)
        object.__setattr__(self, "c", math.cos(self.theta))
        object.__setattr__(self, "s", math.sin(self.theta))

    @classmethod
    def from_pose(cls, i: int, j: int, meas: Pose2, w_rot2=1.0, w_x2=1.0, w_y2=1.0):
        return cls(i, j, meas.theta, meas.x, meas.y, w_rot2, w_x2, w_y2)

    @property
    def measurement(self) -> Pose2:
        return Pose2(self.c, self.s, self.x, self.y)


@dataclass(frozen=True)
class LandmarkFactor:
    """Position of landmark ``ell`` observed in the frame of pose ``i``."""

    i: int
    ell: int
    x: float
    y: float
    w_x2: float = 1.0
    w_y2: float = 1.0

    def __post_init__(self):
        _check_weights(self.w_x2, self.w_y2)


class _DisjointSet:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass(frozen=True)
class FactorGraph:
    """Poses ``0..n-1``, landmarks ``0..w-1`` and the factors between them.

    ``pose_ids`` / ``landmark_ids`` map dense indices back to the ids used in
    the source file.  Disconnected graphs are rejected: the MLE would be
    unbounded along the gauge of every extra component.
    """

    n: int
    w: int = 0
    edges: tuple[RelPoseFactor, ...] = ()
    land_edges: tuple[LandmarkFactor, ...] = ()
    pose_ids: tuple[int, ...] | None = None
    landmark_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "land_edges", tuple(self.land_edges))
        if self.pose_ids is None:
            object.__setattr__(self, "pose_ids", tuple(range(self.n)))
        if self.landmark_ids is None:
            object.__setattr__(self, "landmark_ids", tuple(range(self.n, self.n + self.w)))
        if len(self.pose_ids) != self.n or len(self.landmark_ids) != self.w:
            raise ValueError("id remap tables do not match the pose/landmark counts")
        for f in self.edges:
            if not (0 <= f.i < self.n and 0 <= f.j < self.n):
                raise ValueError(f"pose factor ({f.i}, {f.j}) references a pose out of range")
        for f in self.land_edges:
            if not (0 <= f.i < self.n and 0 <= f.ell < self.w):
                raise ValueError(f"landmark factor ({f.i}, {f.ell}) references an id out of range")
        if not self.is_connected():
            raise ValueError("factor graph is disconnected")

    def is_connected(self) -> bool:
        total = self.n + self.w
        if total <= 1:
            return True
        dsu = _DisjointSet(total)
        for f in self.edges:
            dsu.union(f.i, f.j)
        for f in self.land_edges:
            dsu.union(f.i, self.n + f.ell)
        return len({dsu.find(k) for k in range(total)}) == 1

    @property
    def index(self) -> VariableIndex:
        return VariableIndex(self.n, self.w)

    def __len__(self) -> int:
        return len(self.edges) + len(self.land_edges)


@dataclass(frozen=True)
class VariableIndex:
    """Dense variable numbering: ``c, s, x, y`` per pose, then ``lx, ly``."""

    n: int
    w: int = 0

    @property
    def size(self) -> int:
        return 4 * self.n + 2 * self.w

    def pose(self, i: int) -> tuple[int, int, int, int]:
        if not 0 <= i < self.n:
            raise KeyError(f"pose {i} not in index")
        return (4 * i, 4 * i + 1, 4 * i + 2, 4 * i + 3)

    def landmark(self, ell: int) -> tuple[int, int]:
        if not 0 <= ell < self.w:
            raise KeyError(f"landmark {ell} not in index")
        base = 4 * self.n + 2 * ell
        return (base, base + 1)

    def name(self, var: int) -> str:
        if var < 4 * self.n:
            return f"{'csxy'[var % 4]}{var // 4}"
        k = var - 4 * self.n
        return f"l{'xy'[k % 2]}{k // 2}"


@dataclass(frozen=True, eq=False)
class Assignment:
    """Values for every pose ``(c, s, x, y)`` and landmark ``(lx, ly)``."""

    poses: np.ndarray
    landmarks: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        poses = np.array(self.poses, dtype=float).reshape(-1, 4)
        landmarks = np.array(self.landmarks, dtype=float).reshape(-1, 2)
        poses.setflags(write=False)
        landmarks.setflags(write=False)
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "landmarks", landmarks)

    @classmethod
    def from_poses(cls, poses: Iterable[Pose2], landmarks: Iterable[Landmark2] = ()) -> Assignment:
        p = [(q.c, q.s, q.x, q.y) for q in poses]
        l = [(m.lx, m.ly) for m in landmarks]
        return cls(np.array(p).reshape(-1, 4), np.array(l).reshape(-1, 2))

    @classmethod
    def from_vector(cls, v: Sequence[float], n: int, w: int = 0) -> Assignment:
        v = np.asarray(v, dtype=float)
        if v.size != 4 * n + 2 * w:
            raise ValueError("vector length does not match the variable index")
        return cls(v[: 4 * n].reshape(n, 4), v[4 * n :].reshape(w, 2))

    @property
    def n(self) -> int:
        return self.poses.shape[0]

    @property
    def w(self) -> int:
        return self.landmarks.shape[0]

    def pose(self, i: int) -> Pose2:
        return Pose2(*map(float, self.poses[i]))

    def landmark(self, ell: int) -> Landmark2:
        return Landmark2(*map(float, self.landmarks[ell]))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.poses.ravel(), self.landmarks.ravel()])

    def is_normalized(self, tol: float = UNIT_TOL) -> bool:
        r = self.poses[:, 0] ** 2 + self.poses[:, 1] ** 2
        return bool(np.all(np.abs(r - 1.0) <= tol))

    def transformed(self, g: Pose2) -> Assignment:
        """Apply a global rigid transform ``g`` to every pose and landmark."""
        poses = [compose(g, self.pose(i)) for i in range(self.n)]
        lm = self.landmarks @ g.rotation.T + g.translation
        return Assignment.from_poses(poses, [Landmark2(*p) for p in lm])

    def anchored(self, i: int = 0) -> Assignment:
        """Re-express everything in the frame of pose ``i`` (pose ``i`` becomes identity)."""
        if self.n == 0:
            return self
        return self.transformed(inverse(self.pose(i)))

    def __eq__(self, other):
        if not isinstance(other, Assignment):
            return NotImplemented
        return np.array_equal(self.poses, other.poses) and np.array_equal(self.landmarks, other.landmarks)


def _pose_values(a: Assignment, i: int) -> np.ndarray:
    if not 0 <= i < a.n:
        raise KeyError(f"assignment has no value for pose {i}")
    return a.poses[i]


def factor_cost_pose(f: RelPoseFactor, a: Assignment) -> float:
    """Rotation plus translation cost of one relative-pose factor."""
    ci, si, xi, yi = _pose_values(a, f.i)
    cj, sj, xj, yj = _pose_values(a, f.j)
    cm, sm = f.c, f.s
    rot = (
        (cj - ci * cm + si * sm) ** 2
        + (-sj + ci * sm + si * cm) ** 2
        + (sj - si * cm - ci * sm) ** 2
        + (cj + si * sm - ci * cm) ** 2
    )
    ex = xj - ci * f.x + si * f.y - xi
    ey = yj - si * f.x - ci * f.y - yi
    return float(f.w_rot2 * rot + f.w_x2 * ex * ex + f.w_y2 * ey * ey)


def factor_cost_landmark(f: LandmarkFactor, a: Assignment) -> float:
    ci, si, xi, yi = _pose_values(a, f.i)
    if not 0 <= f.ell < a.w:
        raise KeyError(f"assignment has no value for landmark {f.ell}")
    lx, ly = a.landmarks[f.ell]
    ex = lx - ci * f.x + si * f.y - xi
    ey = ly - si * f.x - ci * f.y - yi
    return float(f.w_x2 * ex * ex + f.w_y2 * ey * ey)


def total_cost(g: FactorGraph, a: Assignment) -> float:
    return sum(factor_cost_pose(f, a) for f in g.edges) + sum(
        factor_cost_landmark(f, a) for f in g.land_edges
    )


def wrap_angle(theta):
    """Wrap to ``(-pi, pi]``."""
    out = np.mod(np.asarray(theta, dtype=float) + np.pi, 2 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return float(out) if np.ndim(out) == 0 else out
