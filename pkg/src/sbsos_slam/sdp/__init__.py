"""Standard-form conic programs over PSD x nonneg x free cones."""

from .presolve import PresolveMap, presolve
from .problem import (
    ConicSolution,
    SdpProblem,
    read_sdp,
    read_solution,
    residuals,
    tri_index,
    tri_size,
    write_sdp,
    write_solution,
)
from .solve import BACKENDS, SolverConfig, solve

__all__ = [
    "BACKENDS",
    "ConicSolution",
    "PresolveMap",
    "SdpProblem",
    "SolverConfig",
    "presolve",
    "read_sdp",
    "read_solution",
    "residuals",
    "solve",
    "tri_index",
    "tri_size",
    "write_sdp",
    "write_solution",
]
