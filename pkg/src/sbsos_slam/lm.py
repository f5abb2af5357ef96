"""Levenberg-Marquardt on the same cost, with poses parameterized by angle."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .factor_graph import Assignment, FactorGraph, Pose2, compose, wrap_angle


@dataclass(frozen=True, eq=False)
class ThetaAssignment:
    """Per-pose ``(theta, x, y)`` and per-landmark ``(lx, ly)``."""

    poses: np.ndarray
    landmarks: np.ndarray

    def __post_init__(self):
        p = np.array(self.poses, dtype=float).reshape(-1, 3)
        p[:, 0] = wrap_angle(p[:, 0])
        lm = np.array(self.landmarks, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "poses", p)
        object.__setattr__(self, "landmarks", lm)

    @property
    def n(self) -> int:
        return self.poses.shape[0]

    @property
    def w(self) -> int:
        return self.landmarks.shape[0]

    @classmethod
    def from_assignment(cls, a: Assignment) -> ThetaAssignment:
        th = np.arctan2(a.poses[:, 1], a.poses[:, 0])
        return cls(np.column_stack([th, a.poses[:, 2:]]), a.landmarks)

    def to_assignment(self) -> Assignment:
        th = self.poses[:, 0]
        p = np.column_stack([np.cos(th), np.sin(th), self.poses[:, 1:]])
        return Assignment(p, self.landmarks)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.poses.ravel(), self.landmarks.ravel()])

    @classmethod
    def from_vector(cls, v: np.ndarray, n: int, w: int) -> ThetaAssignment:
        return cls(v[: 3 * n].reshape(n, 3), v[3 * n :].reshape(w, 2))


def n_residuals(graph: FactorGraph) -> int:
    return 6 * len(graph.edges) + 2 * len(graph.land_edges)


def _split(graph: FactorGraph, v: np.ndarray):
    n = graph.n
    p = v[: 3 * n].reshape(n, 3)
    return p[:, 0], p[:, 1], p[:, 2], v[3 * n :].reshape(graph.w, 2)


def _factor_arrays(graph: FactorGraph):
    E = graph.edges
    L = graph.land_edges
    pe = np.array([(f.i, f.j, f.theta, f.x, f.y, f.w_rot2, f.w_x2, f.w_y2) for f in E]).reshape(-1, 8)
    le = np.array([(f.i, f.ell, f.x, f.y, f.w_x2, f.w_y2) for f in L]).reshape(-1, 6)
    return pe, le


def residual_vector(graph: FactorGraph, a: ThetaAssignment) -> np.ndarray:
    """Stacked weighted residuals.

    Per pose factor (in edge order): the four rotation residuals, each times
    ``sqrt(w_rot2)``, then the x and y translation residuals times
    ``sqrt(w_x2)`` and ``sqrt(w_y2)``.  Landmark factors follow, two each.
    """
    return _residuals(graph, a.to_vector())


def _residuals(graph: FactorGraph, v: np.ndarray) -> np.ndarray:
    th, X, Y, lm = _split(graph, v)
    pe, le = _factor_arrays(graph)
    out = np.empty(n_residuals(graph))
    if len(pe):
        i, j = pe[:, 0].astype(int), pe[:, 1].astype(int)
        ci, si, cj, sj = np.cos(th[i]), np.sin(th[i]), np.cos(th[j]), np.sin(th[j])
        cm, sm, mx, my = np.cos(pe[:, 2]), np.sin(pe[:, 2]), pe[:, 3], pe[:, 4]
        wr, wx, wy = np.sqrt(pe[:, 5]), np.sqrt(pe[:, 6]), np.sqrt(pe[:, 7])
        r = out[: 6 * len(pe)].reshape(-1, 6)
        r[:, 0] = wr * (cj - ci * cm + si * sm)
        r[:, 1] = wr * (-sj + ci * sm + si * cm)
        r[:, 2] = wr * (sj - si * cm - ci * sm)
        r[:, 3] = wr * (cj + si * sm - ci * cm)
        r[:, 4] = wx * (X[j] - ci * mx + si * my - X[i])
        r[:, 5] = wy * (Y[j] - si * mx - ci * my - Y[i])
    if len(le):
        i, ell = le[:, 0].astype(int), le[:, 1].astype(int)
        ci, si = np.cos(th[i]), np.sin(th[i])
        mx, my = le[:, 2], le[:, 3]
        r = out[6 * len(pe) :].reshape(-1, 2)
        r[:, 0] = np.sqrt(le[:, 4]) * (lm[ell, 0] - ci * mx + si * my - X[i])
        r[:, 1] = np.sqrt(le[:, 5]) * (lm[ell, 1] - si * mx - ci * my - Y[i])
    return out


def jacobian(graph: FactorGraph, a: ThetaAssignment) -> sp.csr_matrix:
    """Analytic Jacobian of :func:`residual_vector` w.r.t. ``a.to_vector()``."""
    return _jacobian(graph, a.to_vector())


def _jacobian(graph: FactorGraph, v: np.ndarray) -> sp.csr_matrix:
    th, X, Y, lm = _split(graph, v)
    pe, le = _factor_arrays(graph)
    n = graph.n
    rows, cols, vals = [], [], []

    def put(r, c, val):
        rows.append(np.asarray(r))
        cols.append(np.asarray(c))
        vals.append(np.asarray(val))

    if len(pe):
        k = np.arange(len(pe))
        i, j = pe[:, 0].astype(int), pe[:, 1].astype(int)
        ci, si, cj, sj = np.cos(th[i]), np.sin(th[i]), np.cos(th[j]), np.sin(th[j])
        cm, sm, mx, my = np.cos(pe[:, 2]), np.sin(pe[:, 2]), pe[:, 3], pe[:, 4]
        wr, wx, wy = np.sqrt(pe[:, 5]), np.sqrt(pe[:, 6]), np.sqrt(pe[:, 7])
        sa = si * cm + ci * sm  # sin(theta_i + theta_ij)
        ca = ci * cm - si * sm  # cos(theta_i + theta_ij)
        base = 6 * k
        ti, tj = 3 * i, 3 * j
        for off, d_i, d_j in ((0, sa, -sj), (1, ca, -cj), (2, -ca, cj), (3, sa, -sj)):
            put(base + off, ti, wr * d_i)
            put(base + off, tj, wr * d_j)
        put(base + 4, ti, wx * (si * mx + ci * my))
        put(base + 4, ti + 1, -wx)
        put(base + 4, tj + 1, wx)
        put(base + 5, ti, wy * (-ci * mx + si * my))
        put(base + 5, ti + 2, -wy)
        put(base + 5, tj + 2, wy)
    if len(le):
        k = np.arange(len(le))
        i, ell = le[:, 0].astype(int), le[:, 1].astype(int)
        ci, si = np.cos(th[i]), np.sin(th[i])
        mx, my = le[:, 2], le[:, 3]
        wx, wy = np.sqrt(le[:, 4]), np.sqrt(le[:, 5])
        base = 6 * len(pe) + 2 * k
        ti, tl = 3 * i, 3 * n + 2 * ell
        put(base, ti, wx * (si * mx + ci * my))
        put(base, ti + 1, -wx)
        put(base, tl, wx)
        put(base + 1, ti, wy * (-ci * mx + si * my))
        put(base + 1, ti + 2, -wy)
        put(base + 1, tl + 1, wy)
    shape = (n_residuals(graph), 3 * n + 2 * graph.w)
    if not rows:
        return sp.csr_matrix(shape)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape)


@dataclass(frozen=True)
class LMConfig:
    max_iter: int = 200
    grad_tol: float = 1e-9
    step_tol: float = 1e-12
    lambda0: float = 1e-3
    anchor: int = 0


@dataclass
class LMResult:
    estimate: ThetaAssignment
    cost: float
    iterations: int
    reason: str

    @property
    def assignment(self) -> Assignment:
        return self.estimate.to_assignment()


def _anchored_init(graph: FactorGraph, v: np.ndarray, anchor: int) -> np.ndarray:
    """Move the whole estimate rigidly so the anchor pose is the identity."""
    a = ThetaAssignment.from_vector(v, graph.n, graph.w).to_assignment().anchored(anchor)
    return ThetaAssignment.from_assignment(a).to_vector()


def lm_solve(graph: FactorGraph, init: ThetaAssignment, config: LMConfig = LMConfig()) -> LMResult:
    """Damped Gauss-Newton with multiplicative damping updates.

    The anchor pose is moved to the identity (the cost is invariant) and held
    fixed.  A step is taken only when it lowers the cost, so the returned
    cost never exceeds the initial one.
    """
    n, w = graph.n, graph.w
    v = _anchored_init(graph, init.to_vector(), config.anchor)
    free = np.ones(v.size, dtype=bool)
    free[3 * config.anchor : 3 * config.anchor + 3] = False
    r = _residuals(graph, v)
    cost = float(r @ r)
    lam = None
    nu = 2.0
    reason = "max-iter"
    it = 0
    for it in range(1, config.max_iter + 1):
        J = _jacobian(graph, v)[:, free].tocsc()
        g = J.T @ r
        if np.max(np.abs(g), initial=0.0) < config.grad_tol:
            reason = "gradient"
            it -= 1
            break
        H = (J.T @ J).tocsc()
        if lam is None:
            lam = config.lambda0 * max(H.diagonal().max(initial=0.0), 1e-12)
        step_small = False
        while True:
            try:
                delta = spla.spsolve(H + lam * sp.identity(H.shape[0], format="csc"), -g)
            except RuntimeError:
                delta = np.full(H.shape[0], np.nan)
            if np.all(np.isfinite(delta)) and np.linalg.norm(delta) < config.step_tol * (np.linalg.norm(v) + config.step_tol):
                step_small = True
                break
            cand = v.copy()
            if np.all(np.isfinite(delta)):
                cand[free] += delta
                r_new = _residuals(graph, cand)
                cost_new = float(r_new @ r_new)
            else:
                cost_new = np.inf
            predicted = float(delta @ (lam * delta - g)) if np.all(np.isfinite(delta)) else 0.0
            if cost_new < cost:
                rho = (cost - cost_new) / predicted if predicted > 0 else 1.0
                lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
                v, r, cost = cand, r_new, cost_new
                break
            lam *= nu
            nu *= 2.0
            if not np.isfinite(lam) or lam > 1e30:
                step_small = True
                break
        if step_small:
            reason = "step"
            break
    v[: 3 * n : 3] = wrap_angle(v[: 3 * n : 3])
    return LMResult(ThetaAssignment.from_vector(v, n, w), cost, it, reason)


def dead_reckoning(graph: FactorGraph) -> list[Pose2]:
    """Chain measurements outward from pose 0, odometry edges first."""
    n = graph.n
    adj: list[list[tuple[int, Pose2]]] = [[] for _ in range(n)]
    order = sorted(graph.edges, key=lambda f: (abs(f.j - f.i) != 1, f.i, f.j))
    for f in order:
        m = Pose2.from_angle(f.theta, f.x, f.y)
        adj[f.i].append((f.j, m))
        adj[f.j].append((f.i, m.inverse()))
    poses: list[Pose2 | None] = [None] * n
    poses[0] = Pose2.identity()
    queue = deque([0])
    while queue:
        a = queue.popleft()
        for b, m in adj[a]:
            if poses[b] is None:
                poses[b] = compose(poses[a], m)
                queue.append(b)
    return [p if p is not None else Pose2.identity() for p in poses]


def random_init(graph: FactorGraph, seed: int) -> ThetaAssignment:
    """Angles uniform on the circle; positions uniform in the dead-reckoned box, inflated 2x."""
    rng = np.random.default_rng(seed)
    dr = dead_reckoning(graph)
    pts = np.array([[p.x, p.y] for p in dr]).reshape(-1, 2)
    center = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    half = 0.5 * (pts.max(axis=0) - pts.min(axis=0))
    half = np.where(half > 0, half, 0.5)
    lo, hi = center - 2 * half, center + 2 * half
    th = -rng.uniform(-np.pi, np.pi, graph.n)  # (-pi, pi]
    xy = rng.uniform(lo, hi, size=(graph.n, 2))
    lm = rng.uniform(lo, hi, size=(graph.w, 2))
    return ThetaAssignment(np.column_stack([th, xy]), lm)


def best_of_restarts(graph: FactorGraph, restarts: int, seed: int = 0, config: LMConfig = LMConfig()) -> tuple[LMResult, list[LMResult]]:
    """Run ``restarts`` random inits with seeds derived from ``seed``; return the best and all."""
    seeds = np.random.SeedSequence(seed).generate_state(restarts)
    runs = [lm_solve(graph, random_init(graph, int(s)), config) for s in seeds]
    return min(runs, key=lambda r: r.cost), runs
