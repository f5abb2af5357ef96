"""Backend dispatch: presolve, solve, map back."""

from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .admm import solve_admm
from .ipm import solve_ipm
from .presolve import presolve
from .problem import ConicSolution, SdpProblem, read_solution, residuals, write_sdp

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    """Solver settings.

    ``backend`` is ``"admm"`` (first-order, default), ``"ipm"`` (interior
    point, more accurate and used as the cross-check) or ``"external"``, in
    which case
    ``external_command`` is run with ``{problem}`` and ``{solution}``
    substituted by paths to files in the text formats of
    :mod:`sbsos_slam.sdp.problem`.
    """

    tol: float = 1e-7
    max_iter: int = 50000
    scaling: bool = True
    seed: int = 0
    backend: str = "admm"
    verbose: bool = False
    check_every: int = 10
    admm_mu: float = 1.0
    admm_balance: float = 5.0
    admm_mu_factor: float = 1.5
    admm_relax: float = 1.6
    ipm_max_iter: int = 100
    ipm_refine: int = 2
    external_command: str | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; choose from {sorted(BACKENDS)}")


def _solve_external(problem: SdpProblem, config: SolverConfig) -> ConicSolution:
    if not config.external_command:
        raise ValueError("external backend needs external_command")
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        prob_path = Path(tmp, "problem.sdp")
        sol_path = Path(tmp, "solution.sol")
        with open(prob_path, "w") as fh:
            write_sdp(problem, fh)
        cmd = [a.format(problem=prob_path, solution=sol_path) for a in shlex.split(config.external_command)]
        proc = subprocess.run(cmd, capture_output=True, text=True)

        def failed(reason):
            log.error("external solver failed: %s", reason)
            return ConicSolution(np.zeros(problem.n_cols), np.zeros(problem.n_rows), "numerical-failure", np.inf, np.inf,
                                 np.inf, np.nan, np.nan, 0, time.perf_counter() - t0, "external",
                                 {"reason": reason, "stderr": proc.stderr})

        if proc.returncode != 0 or not sol_path.exists():
            return failed(f"exit code {proc.returncode}: {proc.stderr.strip()}")
        try:
            with open(sol_path) as fh:
                sol = read_solution(fh)
        except (ValueError, IndexError) as e:
            return failed(f"unreadable solution: {e}")
        if sol.z.size != problem.n_cols or sol.y.size != problem.n_rows:
            return failed(f"solution has {sol.z.size} columns and {sol.y.size} rows")
    rp, rd, gap = residuals(problem, sol.z, sol.y)
    po, do = float(problem.c @ sol.z), float(problem.b @ sol.y)
    return ConicSolution(sol.z, sol.y, sol.status, rp, rd, gap, po, do, 0, time.perf_counter() - t0, "external")


BACKENDS: dict[str, Callable[[SdpProblem, SolverConfig], ConicSolution]] = {
    "admm": solve_admm,
    "ipm": solve_ipm,
    "external": _solve_external,
}


def solve(problem: SdpProblem, config: SolverConfig | None = None) -> ConicSolution:
    """Solve ``max c'z, Az = b, z in K`` and return primal and dual values.

    The result is expressed for the original problem: ``y`` has one entry per
    original row and residuals are recomputed against the original data.
    """
    config = config or SolverConfig()
    reduced, pmap = presolve(problem, eliminate_free=True, scale_rows=config.scaling)
    if pmap.infeasible:
        z = np.zeros(problem.n_cols)
        y = np.zeros(problem.n_rows)
        rp, rd, gap = residuals(problem, z, y)
        return ConicSolution(z, y, "infeasible-detected", rp, rd, gap, 0.0, 0.0, 0, 0.0, config.backend,
                             {"reason": "inconsistent equality rows"})
    log.debug(
        "presolve: %d rows -> %d (free cols %d, zero %d, duplicate %d)",
        problem.n_rows, reduced.n_rows, pmap.removed_free_cols, pmap.removed_zero_rows, pmap.removed_duplicate_rows,
    )
    raw = BACKENDS[config.backend](reduced, config)
    sol = pmap.recover(raw)
    sol.info.update(
        presolved_rows=reduced.n_rows,
        presolved_cols=reduced.n_cols,
        removed_free_cols=pmap.removed_free_cols,
        removed_zero_rows=pmap.removed_zero_rows,
        removed_duplicate_rows=pmap.removed_duplicate_rows,
        merged_cols=pmap.merged_cols,
    )
    if sol.status == "numerical-failure":
        log.warning(
            "solver %s failed after %d iterations; worst residual %.3g",
            raw.backend, raw.iterations, max(raw.primal_residual, raw.dual_residual, raw.gap),
        )
    return sol
