"""Read the minimizer off the moment matrices and certify it against the bound."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .factor_graph import Assignment, FactorGraph, VariableIndex, total_cost
from .poly import ONE, quadratic_from_terms
from .relaxation import Relaxation
from .sdp.problem import ConicSolution

EPS_CERT = 1e-4
RANK_TOL = 1e-3


class ExtractionError(ValueError):
    pass


@dataclass
class MomentBlock:
    """Moment matrix of one block over the basis ``[1; x_I]``, leading entry 1."""

    variables: tuple[int, ...]
    matrix: np.ndarray
    scale: float = 1.0
    min_eig: float = 0.0
    psd_violation: bool = False

    @property
    def first_order(self) -> np.ndarray:
        return self.matrix[0, 1:]

    @property
    def rank_ratio(self) -> float:
        ev = np.sort(np.abs(np.linalg.eigvalsh(self.matrix)))[::-1]
        if ev.size < 2 or ev[0] == 0:
            return 0.0
        return float(ev[1] / ev[0])


def moment_block(matrix: np.ndarray, variables, tol: float = 1e-7) -> MomentBlock:
    """Symmetrize, check PSD and normalize the leading entry."""
    M = 0.5 * (np.asarray(matrix, dtype=float) + np.asarray(matrix, dtype=float).T)
    lead = M[0, 0]
    if not lead > tol:
        raise ExtractionError(f"moment matrix leading entry {lead:.3g} is not positive")
    M = M / lead
    min_eig = float(np.linalg.eigvalsh(M)[0])
    return MomentBlock(tuple(variables), M, float(lead), min_eig, min_eig < -max(tol, 1e-6) * max(1.0, np.abs(M).max()))


def extract_moments(solution: ConicSolution, relaxation: Relaxation, tol: float = 1e-7) -> list[MomentBlock]:
    """Moment matrix of every block from the equality duals of its rows."""
    blocks = []
    for k, block in enumerate(relaxation.decomposition.blocks):
        R = relaxation.moment_rows(k)
        blocks.append(moment_block(solution.y[R], block.variables, tol))
    return blocks


@dataclass
class Recovered:
    assignment: Assignment
    spread: float
    flags: list[str] = field(default_factory=list)


def recover_assignment(
    blocks: list[MomentBlock],
    index: VariableIndex,
    fixed: dict[int, float] | None = None,
    anchor: int | None = None,
    center: dict[int, float] | None = None,
) -> Recovered:
    """Average first-order moments over blocks, project rotations onto the circle.

    ``fixed`` holds gauge-fixed variable values (the anchor pose); they and the
    anchor pose are restored exactly.  ``center`` holds offsets the relaxation
    was written in; they are added back.  ``spread`` is the largest
    disagreement between blocks about any variable.
    """
    fixed = dict(fixed or {})
    sums = np.zeros(index.size)
    counts = np.zeros(index.size)
    lo = np.full(index.size, np.inf)
    hi = np.full(index.size, -np.inf)
    for b in blocks:
        v = np.asarray(b.variables, dtype=int)
        vals = b.first_order
        np.add.at(sums, v, vals)
        np.add.at(counts, v, 1)
        np.minimum.at(lo, v, vals)
        np.maximum.at(hi, v, vals)
    flags = []
    x = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    for var, val in (center or {}).items():
        x[var] += val
    for var, val in fixed.items():
        x[var] = val
    missing = [index.name(v) for v in range(index.size) if counts[v] == 0 and v not in fixed]
    if missing:
        flags.append("unobserved variables set to 0: " + ", ".join(missing))
    seen = counts > 0
    spread = float(np.max(hi[seen] - lo[seen])) if np.any(seen) else 0.0
    poses = x[: 4 * index.n].reshape(index.n, 4).copy()
    for i in range(index.n):
        r = np.hypot(poses[i, 0], poses[i, 1])
        if r < 1e-6:
            poses[i, :2] = (1.0, 0.0)
            flags.append(f"pose {i}: rotation moments vanish, set to identity")
        else:
            poses[i, :2] /= r
    if anchor is not None:
        poses[anchor] = (1.0, 0.0, 0.0, 0.0)
    lm = x[4 * index.n :].reshape(index.w, 2)
    return Recovered(Assignment(poses, lm), spread, flags)


@dataclass
class Certificate:
    lower_bound: float
    achieved_cost: float
    relative_gap: float
    rank_ratios: list[float]
    verdict: str
    eps_cert: float = EPS_CERT
    rank_tol: float = RANK_TOL

    @property
    def certified(self) -> bool:
        return self.verdict == "certified-optimal"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> Certificate:
        return cls(**d)


def relative_gap(cost: float, bound: float) -> float:
    return (cost - bound) / max(1.0, abs(bound))


def certify(
    graph: FactorGraph,
    assignment: Assignment,
    lower_bound: float,
    rank_ratios=(),
    eps_cert: float = EPS_CERT,
    rank_tol: float = RANK_TOL,
) -> Certificate:
    """Gap of ``assignment`` against ``lower_bound``; sound whatever the extraction did."""
    cost = total_cost(graph, assignment)
    gap = relative_gap(cost, lower_bound)
    ratios = [float(r) for r in rank_ratios]
    ok = np.isfinite(gap) and gap <= eps_cert and all(r <= rank_tol for r in ratios)
    return Certificate(
        float(lower_bound), float(cost), float(gap), ratios, "certified-optimal" if ok else "uncertified", eps_cert, rank_tol
    )


def lower_bound(solution: ConicSolution) -> float:
    """Smaller of the two objective values, as reported by the solver."""
    return float(min(solution.primal_objective, solution.dual_objective))


@dataclass
class SafeBound:
    """Lower bound that survives an inexact solver point.

    ``bound = t + correction``; ``correction <= 0`` covers the mismatch
    polynomial left after projecting the Gram blocks and multipliers onto
    their cones.
    """

    bound: float
    t: float
    correction: float
    mismatch: float
    radius: float


def safe_lower_bound(solution: ConicSolution, relaxation: Relaxation, upper: float) -> SafeBound:
    """Bound the minimum of the relaxed problem from the solver's primal point.

    With PSD Gram blocks and nonnegative multipliers the cost splits as
    ``f = t + sum(sigma + h) + rho``, where the free block polynomials absorb
    every block row exactly and ``rho`` is the quadratic left on the global
    rows.  ``sigma`` and ``h`` are nonnegative on the feasible set, so
    ``f* >= t + min rho`` over any region holding a minimizer.  The cost is a
    convex quadratic, so every point with cost at most ``upper`` (a feasible
    cost) lies in an ellipsoid, and ``rho`` is bounded below on it.
    """
    P = relaxation.problem
    mats, lam, free = P.split(np.asarray(solution.z, dtype=float))
    for k, M in enumerate(mats):
        w, V = np.linalg.eigh(0.5 * (M + M.T))
        mats[k] = (V * np.maximum(w, 0.0)) @ V.T
    cone = P.join(mats, np.maximum(lam, 0.0), np.zeros_like(free))
    t = float(free[relaxation.t_col - P.n_psd_cols - P.n_nonneg])
    if not np.all(np.isfinite(cone)) or not np.isfinite(t):
        return SafeBound(-np.inf, t, -np.inf, np.inf, np.inf)
    s = P.A @ cone
    f_terms, rho_terms = {}, {}
    for m, r in relaxation.global_rows.items():
        f_terms[m] = P.b[r]
        rho = P.b[r] - (t if m == ONE else 0.0)
        for rows in relaxation.block_rows:
            if m in rows:
                rho -= s[rows[m]]
        rho_terms[m] = rho
    variables = relaxation.variables
    F2, F1, F0 = quadratic_from_terms(f_terms, variables)
    R2, R1, R0 = quadratic_from_terms(rho_terms, variables)
    mismatch = float(max(np.abs(R2).max(initial=0.0), np.abs(R1).max(initial=0.0), abs(R0)))
    if relaxation.center:
        upper = min(upper, F0)
    w, V = np.linalg.eigh(F2)
    if w.size == 0:
        return SafeBound(t + min(0.0, R0), t, min(0.0, R0), mismatch, 0.0)
    if not w[0] > 1e-12 * max(1.0, w[-1]):
        return SafeBound(-np.inf, t, -np.inf, mismatch, np.inf)
    center = -0.5 * (V @ ((V.T @ F1) / w))
    fmin = F0 + 0.5 * F1 @ center
    radius = float(np.sqrt(max(upper - fmin, 0.0)))
    W = (V / np.sqrt(w)) @ V.T
    # rho(center + W e) over |e| <= radius
    r0 = R0 + R1 @ center + center @ R2 @ center
    r1 = W @ (R1 + 2.0 * R2 @ center)
    curv = float(np.linalg.eigvalsh(W @ R2 @ W)[0])
    low = r0 - np.linalg.norm(r1) * radius + min(curv, 0.0) * radius * radius
    correction = float(min(0.0, low))
    return SafeBound(t + correction, t, correction, mismatch, radius)
