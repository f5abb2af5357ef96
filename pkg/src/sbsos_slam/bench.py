"""Run reports and the SBSOS-versus-LM comparison."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass

import numpy as np

from .factor_graph import Assignment, FactorGraph, total_cost
from .lm import LMConfig, ThetaAssignment, lm_solve, random_init
from .pipeline import PipelineOptions, SbsosResult, rotational_mae, solve_graph, translational_rmse

SCHEMA = "sbsos-slam-report/1"


@dataclass
class RunReport:
    """One solve.  Errors against ``truth`` are taken after anchoring pose 0 of both."""

    dataset: str
    n: int
    w: int
    n_edges: int
    n_landmark_edges: int
    method: str
    cost: float
    certificate: dict | None
    translational_rmse: float | None
    rotational_mae: float | None
    wall_time: float
    status: str
    trial: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _errors(estimate: Assignment | None, truth: Assignment | None):
    if estimate is None or truth is None:
        return None, None
    return translational_rmse(estimate, truth), rotational_mae(estimate, truth)


def sbsos_report(dataset: str, graph: FactorGraph, result: SbsosResult, truth: Assignment | None) -> RunReport:
    rmse, mae = _errors(result.estimate, truth)
    cert = result.certificate
    return RunReport(
        dataset,
        graph.n,
        graph.w,
        len(graph.edges),
        len(graph.land_edges),
        "sbsos",
        float(cert.achieved_cost) if cert else float("nan"),
        cert.to_dict() if cert else None,
        rmse,
        mae,
        result.timings.get("total", 0.0),
        result.status,
    )


def lm_report(dataset: str, graph: FactorGraph, init: ThetaAssignment, truth, method: str, trial=None) -> tuple[RunReport, Assignment]:
    t0 = time.perf_counter()
    res = lm_solve(graph, init, LMConfig())
    est = res.assignment
    rmse, mae = _errors(est, truth)
    rep = RunReport(
        dataset, graph.n, graph.w, len(graph.edges), len(graph.land_edges), method,
        total_cost(graph, est), None, rmse, mae, time.perf_counter() - t0, res.reason, trial,
    )
    return rep, est


def trial_seeds(seed: int, trials: int) -> list[int]:
    """Per-trial seeds derived deterministically from the master seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(trials)] if trials else []


def compare(
    dataset: str,
    graph: FactorGraph,
    trials: int,
    seed: int = 0,
    truth: Assignment | None = None,
    options: PipelineOptions | None = None,
) -> dict:
    """SBSOS once, LM from ``trials`` random inits (and from truth when given)."""
    result = solve_graph(graph, options)
    runs = [sbsos_report(dataset, graph, result, truth)]
    for k, s in enumerate(trial_seeds(seed, trials)):
        runs.append(lm_report(dataset, graph, random_init(graph, s), truth, "lm-random", k)[0])
    if truth is not None:
        runs.append(lm_report(dataset, graph, ThetaAssignment.from_assignment(truth), truth, "lm-truth-init")[0])
    return {"schema": SCHEMA, "runs": [r.to_dict() for r in runs], "summary": summarize(runs)}


def summarize(runs: list[RunReport]) -> dict:
    out = {}
    for method in sorted({r.method for r in runs}):
        rs = [r for r in runs if r.method == method]

        def med(key):
            vals = [getattr(r, key) for r in rs if getattr(r, key) is not None]
            return float(np.median(vals)) if vals else None

        out[method] = {
            "count": len(rs),
            "median_cost": med("cost"),
            "median_translational_rmse": med("translational_rmse"),
            "median_rotational_mae": med("rotational_mae"),
            "median_wall_time": med("wall_time"),
        }
    sb = next((r for r in runs if r.method == "sbsos"), None)
    lm = [r for r in runs if r.method == "lm-random"]
    if sb is not None and lm and np.isfinite(sb.cost):
        out["lm_random_above_1.1x_sbsos"] = float(np.mean([r.cost > 1.1 * sb.cost for r in lm]))
    return out


CSV_FIELDS = [
    "dataset", "method", "trial", "n", "w", "n_edges", "n_landmark_edges", "cost",
    "translational_rmse", "rotational_mae", "wall_time", "status", "certified", "relative_gap", "lower_bound",
]


def runs_to_csv(runs: list[dict]) -> str:
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    wr.writeheader()
    for r in runs:
        cert = r.get("certificate") or {}
        row = {k: r.get(k) for k in CSV_FIELDS if k in r}
        row["certified"] = cert.get("verdict") == "certified-optimal" if cert else ""
        row["relative_gap"] = cert.get("relative_gap", "")
        row["lower_bound"] = cert.get("lower_bound", "")
        wr.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return buf.getvalue()
