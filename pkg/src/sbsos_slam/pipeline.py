"""Graph in, certified estimate out.

Order of work: scale, gauge-anchor, decompose, assemble, solve, extract,
certify, unscale.  The certificate is always computed on the original graph.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .certify import (
    Certificate,
    ExtractionError,
    MomentBlock,
    SafeBound,
    certify,
    extract_moments,
    lower_bound,
    recover_assignment,
    relative_gap,
    safe_lower_bound,
)
from .datasets import ScaleTransform, scale, unscale
from .factor_graph import Assignment, FactorGraph, total_cost, wrap_angle
from .lm import LMConfig, ThetaAssignment, dead_reckoning, lm_solve
from .relaxation import Relaxation, RelaxationParams, build_relaxation
from .sdp import ConicSolution, SolverConfig, solve

log = logging.getLogger(__name__)


@dataclass
class PipelineOptions:
    """``scale`` is ``"auto"``, a positive factor, or ``None`` for no scaling.

    ``center`` picks the point the relaxation is written around: ``"lm"``
    (LM started from dead reckoning), ``"odometry"`` (dead reckoning) or
    ``None``.  It is an exact change of variables and only affects
    conditioning.  ``tol`` overrides the solver tolerance; by default it is
    ``1e-7``, loosened to ``1e-6`` from ``large_n`` poses up.

    With ``polish`` the extracted estimate is refined by LM; this can only
    lower its cost, so the certificate stays sound.

    The certified bound is :func:`safe_lower_bound`, which pays for the
    solver's residual.  When that price exceeds ``refine_share * eps_cert``
    on an otherwise certifiable estimate, the relaxation is solved again
    at a tighter tolerance (at most ``refine`` times, never below
    ``min_tol``).
    """

    params: RelaxationParams = field(default_factory=RelaxationParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    scale: str | float | None = "auto"
    dense: bool = False
    center: str | None = "lm"
    tol: float | None = None
    large_n: int = 100
    polish: bool = False
    eps_cert: float = 1e-4
    rank_tol: float = 1e-3
    refine: int = 2
    refine_share: float = 0.1
    min_tol: float = 1e-10


@dataclass
class SbsosResult:
    estimate: Assignment | None
    certificate: Certificate | None
    solution: ConicSolution
    relaxation: Relaxation
    moments: list[MomentBlock]
    scale: ScaleTransform
    status: str
    spread: float = float("nan")
    flags: list[str] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    bound: SafeBound | None = None
    tol: float = float("nan")

    @property
    def cost(self) -> float:
        return self.certificate.achieved_cost if self.certificate else float("nan")

    @property
    def lower_bound(self) -> float:
        """Certified lower bound on the cost (``-inf`` when none is available)."""
        return self.bound.bound if self.bound is not None else -np.inf

    @property
    def certified(self) -> bool:
        return bool(self.certificate and self.certificate.certified)


def _scale_for(graph: FactorGraph, opt) -> ScaleTransform:
    if opt is None:
        return ScaleTransform(1.0)
    if opt == "auto":
        return ScaleTransform.auto(graph)
    return ScaleTransform(float(opt))


def _center_for(graph: FactorGraph, how: str | None, anchor: int) -> Assignment | None:
    if how is None:
        return None
    if how not in ("lm", "odometry"):
        raise ValueError(f"unknown centering {how!r}")
    dr = Assignment.from_poses(dead_reckoning(graph))
    dr = Assignment(dr.poses, _landmark_guess(graph, dr))
    if how == "lm":
        dr = lm_solve(graph, ThetaAssignment.from_assignment(dr), LMConfig(anchor=anchor)).assignment
    return dr.anchored(anchor)


def _landmark_guess(graph: FactorGraph, a: Assignment) -> np.ndarray:
    """Each landmark at the mean of its observations mapped to the world frame."""
    acc = np.zeros((graph.w, 2))
    cnt = np.zeros(graph.w)
    for f in graph.land_edges:
        p = a.pose(f.i)
        acc[f.ell] += p.rotation @ np.array([f.x, f.y]) + p.translation
        cnt[f.ell] += 1
    return acc / np.maximum(cnt, 1)[:, None]


def solve_graph(graph: FactorGraph, options: PipelineOptions | None = None) -> SbsosResult:
    options = options or PipelineOptions()
    timings = {"solve": 0.0, "extract": 0.0}
    t0 = time.perf_counter()
    tf = _scale_for(graph, options.scale)
    sg = scale(graph, tf)
    center = _center_for(sg, options.center, options.params.gauge_anchor)
    timings["center"] = time.perf_counter() - t0
    rel = build_relaxation(sg, options.params, dense=options.dense, center=center)
    timings["assemble"] = time.perf_counter() - t0 - timings["center"]
    tol = options.tol if options.tol is not None else (1e-6 if graph.n >= options.large_n else 1e-7)
    for attempt in range(options.refine + 1):
        t1 = time.perf_counter()
        sol = solve(rel.problem, replace(options.solver, tol=tol))
        timings["solve"] += time.perf_counter() - t1
        t2 = time.perf_counter()
        out = _finish(graph, sg, tf, rel, sol, options)
        timings["extract"] += time.perf_counter() - t2
        new_tol = _refined_tol(out, tol, options)
        if attempt == options.refine or new_tol is None:
            break
        log.info("safe bound correction %.2e; solving again at tol %.1e", -out["bound"].correction, new_tol)
        tol = new_tol
    timings["total"] = time.perf_counter() - t0
    if out["status"] == "numerical-failure":
        log.warning("relaxation solve failed: %s", sol.info)
    return SbsosResult(
        out["estimate"], out["cert"], sol, rel, out["moments"], tf, out["status"], out["spread"], out["flags"],
        timings, out["bound"], tol,
    )


def _finish(graph, sg, tf, rel, sol, options) -> dict:
    """Extract, bound and certify one solver result."""
    flags = []
    moments: list[MomentBlock] = []
    estimate = cert = None
    spread = float("nan")
    status = sol.status
    upper = np.inf
    if sol.status in ("optimal", "near-optimal", "max-iter"):
        try:
            moments = extract_moments(sol, rel)
        except ExtractionError as e:
            flags.append(str(e))
            status = "extraction-failure"
        else:
            if any(m.psd_violation for m in moments):
                flags.append("moment matrix not PSD beyond tolerance")
            rec = recover_assignment(moments, sg.index, rel.fixed, rel.anchor, rel.center)
            flags += rec.flags
            spread = rec.spread
            est = rec.assignment
            if options.polish:
                res = lm_solve(sg, ThetaAssignment.from_assignment(est), LMConfig(anchor=rel.anchor or 0))
                if res.cost <= total_cost(sg, est):
                    est = res.assignment
            upper = total_cost(sg, est)
            estimate = unscale(est, tf)
    bound = safe_lower_bound(sol, rel, upper) if sol.z is not None and len(sol.z) else None
    if estimate is not None:
        ratios = [m.rank_ratio for m in moments]
        t_star = bound.bound if bound is not None else -np.inf
        cert = certify(graph, estimate, t_star, ratios, options.eps_cert, options.rank_tol)
        if not sol.ok:
            cert.verdict = "uncertified"
    return dict(status=status, moments=moments, estimate=estimate, cert=cert, spread=spread, flags=flags, bound=bound,
                solution=sol)


def _refined_tol(out: dict, tol: float, options: PipelineOptions) -> float | None:
    """Tighter tolerance when the residual price takes a large share of the certificate's gap, else ``None``."""
    cert, bound, sol = out["cert"], out["bound"], out["solution"]
    if cert is None or bound is None or not sol.ok or tol <= options.min_tol:
        return None
    if not np.isfinite(bound.correction) or any(r > options.rank_tol for r in cert.rank_ratios):
        return None
    if relative_gap(cert.achieved_cost, lower_bound(sol)) > options.eps_cert:
        return None
    price = -bound.correction / max(1.0, abs(cert.achieved_cost))
    target = options.refine_share * options.eps_cert
    if price <= target:
        return None
    return max(options.min_tol, min(tol / 10, tol * target / (2 * price)))


def bound_for(graph: FactorGraph, options: PipelineOptions | None = None) -> tuple[float, ConicSolution, list[MomentBlock]]:
    """Lower bound ``t*`` of ``graph`` (no extraction needed by the caller)."""
    res = solve_graph(graph, options)
    return res.lower_bound, res.solution, res.moments


# ---------------------------------------------------------------- error metrics


def translational_rmse(estimate: Assignment, truth: Assignment, anchor: int = 0) -> float:
    """RMSE of pose positions after anchoring both trajectories at ``anchor``."""
    a = estimate.anchored(anchor)
    b = truth.anchored(anchor)
    d = a.poses[:, 2:] - b.poses[:, 2:]
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def rotational_mae(estimate: Assignment, truth: Assignment, anchor: int = 0) -> float:
    """Mean absolute wrapped heading error (radians) after anchoring."""
    a = estimate.anchored(anchor)
    b = truth.anchored(anchor)
    ta = np.arctan2(a.poses[:, 1], a.poses[:, 0])
    tb = np.arctan2(b.poses[:, 1], b.poses[:, 0])
    return float(np.mean(np.abs(wrap_angle(ta - tb))))
