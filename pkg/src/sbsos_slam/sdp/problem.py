"""Standard-form conic programs and their solutions.

Problem form (all solvers in this package use it)::

    maximize    c' z
    subject to  A z = b
                z = (X_1, ..., X_p, lam, u),  X_k PSD,  lam >= 0,  u free

Columns of ``A`` are laid out block by block.  A PSD block of size ``n``
contributes ``n (n + 1) / 2`` columns, one per upper-triangular entry
``X[r, c]`` (``r <= c``) in row-major order; the coefficient multiplies the
entry value itself, so an off-diagonal term of ``<B, X>`` appears with
coefficient ``2 * B[r, c]``.  Nonnegative scalars follow, then free scalars.

The dual is ``minimize b'y  s.t.  A'y - c in K*``; for PSD blocks the dual
slack matrix ``S`` has ``S[r, r] = (A'y - c)[r, r]`` and
``S[r, c] = (A'y - c)[r, c] / 2`` off the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence, TextIO

import numpy as np
import scipy.sparse as sp

FORMAT_MAGIC = "SBSOS-SDP"
FORMAT_VERSION = 1


def tri_size(n: int) -> int:
    return n * (n + 1) // 2


def tri_index(n: int, r: int, c: int) -> int:
    """Position of entry ``(r, c)`` (``r <= c``) in the row-major upper triangle."""
    if r > c:
        r, c = c, r
    return r * n - r * (r - 1) // 2 + (c - r)


def tri_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.triu_indices(n)
    return rows, cols


def tri_to_matrix(v: np.ndarray, n: int) -> np.ndarray:
    rows, cols = np.triu_indices(n)
    M = np.zeros((n, n))
    M[rows, cols] = v
    M[cols, rows] = v
    return M


def matrix_to_tri(M: np.ndarray) -> np.ndarray:
    rows, cols = np.triu_indices(M.shape[0])
    return M[rows, cols].copy()


@dataclass
class SdpProblem:
    block_sizes: tuple[int, ...]
    n_nonneg: int
    n_free: int
    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    row_labels: list[Any] | None = None
    col_labels: list[Any] | None = None

    def __post_init__(self):
        self.block_sizes = tuple(int(n) for n in self.block_sizes)
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.c = np.asarray(self.c, dtype=float).ravel()
        if self.A.shape != (self.b.size, self.n_cols):
            raise ValueError(f"A has shape {self.A.shape}, expected ({self.b.size}, {self.n_cols})")
        if self.c.size != self.n_cols:
            raise ValueError("objective length does not match the column count")

    @property
    def n_psd_cols(self) -> int:
        return sum(tri_size(n) for n in self.block_sizes)

    @property
    def n_cols(self) -> int:
        return self.n_psd_cols + self.n_nonneg + self.n_free

    @property
    def n_rows(self) -> int:
        return self.b.size

    def block_offsets(self) -> list[int]:
        out, k = [], 0
        for n in self.block_sizes:
            out.append(k)
            k += tri_size(n)
        return out

    def psd_col(self, block: int, r: int, c: int) -> int:
        return self.block_offsets()[block] + tri_index(self.block_sizes[block], r, c)

    def nonneg_col(self, k: int) -> int:
        return self.n_psd_cols + k

    def free_col(self, k: int) -> int:
        return self.n_psd_cols + self.n_nonneg + k

    def split(self, z: np.ndarray) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
        """Split a column vector into PSD matrices, nonneg part and free part."""
        mats = []
        for off, n in zip(self.block_offsets(), self.block_sizes):
            mats.append(tri_to_matrix(z[off : off + tri_size(n)], n))
        p = self.n_psd_cols
        return mats, z[p : p + self.n_nonneg].copy(), z[p + self.n_nonneg :].copy()

    def join(self, mats: Sequence[np.ndarray], lam: np.ndarray, u: np.ndarray) -> np.ndarray:
        parts = [matrix_to_tri(M) for M in mats]
        return np.concatenate(parts + [np.asarray(lam, float), np.asarray(u, float)])

    def dual_slack(self, y: np.ndarray) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
        """Dual slack ``A'y - c`` as (PSD matrices, nonneg part, free residual)."""
        s = self.A.T @ y - self.c
        mats, lam, u = self.split(s)
        for M in mats:
            off = ~np.eye(M.shape[0], dtype=bool)
            M[off] *= 0.5
        return mats, lam, u

    def same_structure(self, other: SdpProblem) -> bool:
        return (
            self.block_sizes == other.block_sizes
            and self.n_nonneg == other.n_nonneg
            and self.n_free == other.n_free
            and self.A.shape == other.A.shape
        )


STATUSES = ("optimal", "near-optimal", "max-iter", "infeasible-detected", "numerical-failure")


@dataclass
class ConicSolution:
    """Primal point ``z``, equality duals ``y`` and solver diagnostics.

    ``primal_objective`` is ``c'z`` (the lower bound for the relaxation) and
    ``dual_objective`` is ``b'y``.
    """

    z: np.ndarray
    y: np.ndarray
    status: str
    primal_residual: float
    dual_residual: float
    gap: float
    primal_objective: float
    dual_objective: float
    iterations: int
    solve_time: float = 0.0
    backend: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near-optimal")


def residuals(problem: SdpProblem, z: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Relative primal infeasibility, dual infeasibility and duality gap."""
    rp = np.linalg.norm(problem.A @ z - problem.b) / (1.0 + np.linalg.norm(problem.b))
    mats, lam, u = problem.dual_slack(y)
    viol = []
    for M in mats:
        if M.size:
            viol.append(max(0.0, -np.linalg.eigvalsh(M)[0]) * np.sqrt(M.shape[0]))
    viol.append(np.linalg.norm(np.minimum(lam, 0.0)))
    viol.append(np.linalg.norm(u))
    rd = float(np.linalg.norm(viol)) / (1.0 + np.linalg.norm(problem.c))
    po, do = float(problem.c @ z), float(problem.b @ y)
    gap = abs(po - do) / (1.0 + abs(po) + abs(do))
    return float(rp), rd, gap


# ---------------------------------------------------------------- text format
#
#   SBSOS-SDP 1
#   BLOCKS <p> <n_1> ... <n_p>
#   NONNEG <k>
#   FREE <k>
#   ROWS <m>
#   C psd <block> <r> <c> <value>      objective (maximize), entry-valued
#   C nonneg <k> <value>
#   C free <k> <value>
#   A <row> psd <block> <r> <c> <value>
#   A <row> nonneg <k> <value>
#   A <row> free <k> <value>
#   B <row> <value>
#   END
#
# Indices are zero-based, floats use 17 significant digits.


def _col_descr(problem: SdpProblem, col: int) -> str:
    p = problem.n_psd_cols
    if col < p:
        offsets = problem.block_offsets()
        blk = int(np.searchsorted(offsets, col, side="right") - 1)
        n = problem.block_sizes[blk]
        rows, cols = np.triu_indices(n)
        k = col - offsets[blk]
        return f"psd {blk} {rows[k]} {cols[k]}"
    if col < p + problem.n_nonneg:
        return f"nonneg {col - p}"
    return f"free {col - p - problem.n_nonneg}"


def write_sdp(problem: SdpProblem, out: TextIO) -> None:
    out.write(f"{FORMAT_MAGIC} {FORMAT_VERSION}\n")
    out.write("BLOCKS " + " ".join(str(v) for v in (len(problem.block_sizes),) + problem.block_sizes) + "\n")
    out.write(f"NONNEG {problem.n_nonneg}\nFREE {problem.n_free}\nROWS {problem.n_rows}\n")
    for col in np.flatnonzero(problem.c):
        out.write(f"C {_col_descr(problem, col)} {problem.c[col]:.17g}\n")
    A = problem.A.tocoo()
    order = np.lexsort((A.col, A.row))
    for k in order:
        out.write(f"A {A.row[k]} {_col_descr(problem, A.col[k])} {A.data[k]:.17g}\n")
    for r in np.flatnonzero(problem.b):
        out.write(f"B {r} {problem.b[r]:.17g}\n")
    out.write("END\n")


def read_sdp(stream: TextIO) -> SdpProblem:
    header = stream.readline().split()
    if len(header) != 2 or header[0] != FORMAT_MAGIC or int(header[1]) != FORMAT_VERSION:
        raise ValueError("not an SBSOS-SDP v1 file")
    sizes: tuple[int, ...] = ()
    n_nonneg = n_free = m = None
    c_entries, a_entries, b_entries = [], [], []
    for lineno, line in enumerate(stream, start=2):
        tok = line.split()
        if not tok:
            continue
        key = tok[0]
        try:
            if key == "BLOCKS":
                p = int(tok[1])
                sizes = tuple(int(v) for v in tok[2 : 2 + p])
            elif key == "NONNEG":
                n_nonneg = int(tok[1])
            elif key == "FREE":
                n_free = int(tok[1])
            elif key == "ROWS":
                m = int(tok[1])
            elif key == "C":
                c_entries.append((tok[1:-1], float(tok[-1])))
            elif key == "A":
                a_entries.append((int(tok[1]), tok[2:-1], float(tok[-1])))
            elif key == "B":
                b_entries.append((int(tok[1]), float(tok[2])))
            elif key == "END":
                break
            else:
                raise ValueError(f"unknown record {key!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    if n_nonneg is None or n_free is None or m is None:
        raise ValueError("missing NONNEG/FREE/ROWS header")
    shell = SdpProblem(sizes, n_nonneg, n_free, sp.csr_matrix((m, sum(tri_size(n) for n in sizes) + n_nonneg + n_free)), np.zeros(m), np.zeros(sum(tri_size(n) for n in sizes) + n_nonneg + n_free))

    def col_of(desc):
        if desc[0] == "psd":
            return shell.psd_col(int(desc[1]), int(desc[2]), int(desc[3]))
        if desc[0] == "nonneg":
            return shell.nonneg_col(int(desc[1]))
        if desc[0] == "free":
            return shell.free_col(int(desc[1]))
        raise ValueError(f"bad column kind {desc[0]!r}")

    c = np.zeros(shell.n_cols)
    for desc, v in c_entries:
        c[col_of(desc)] += v
    rows = [r for r, _, _ in a_entries]
    cols = [col_of(d) for _, d, _ in a_entries]
    vals = [v for _, _, v in a_entries]
    A = sp.csr_matrix((vals, (rows, cols)), shape=(m, shell.n_cols))
    b = np.zeros(m)
    for r, v in b_entries:
        b[r] = v
    return SdpProblem(sizes, n_nonneg, n_free, A, b, c)


def write_solution(solution: ConicSolution, out: TextIO) -> None:
    out.write(f"SBSOS-SOL {FORMAT_VERSION}\nSTATUS {solution.status}\n")
    out.write(f"COLS {solution.z.size}\nROWS {solution.y.size}\n")
    for k, v in enumerate(solution.z):
        out.write(f"Z {k} {v:.17g}\n")
    for k, v in enumerate(solution.y):
        out.write(f"Y {k} {v:.17g}\n")
    out.write("END\n")


def read_solution(stream: TextIO, problem: SdpProblem | None = None) -> ConicSolution:
    header = stream.readline().split()
    if not header or header[0] != "SBSOS-SOL":
        raise ValueError("not an SBSOS-SOL file")
    status, z, y = "numerical-failure", None, None
    for line in stream:
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "STATUS":
            status = tok[1]
        elif tok[0] == "COLS":
            z = np.zeros(int(tok[1]))
        elif tok[0] == "ROWS":
            y = np.zeros(int(tok[1]))
        elif tok[0] == "Z":
            z[int(tok[1])] = float(tok[2])
        elif tok[0] == "Y":
            y[int(tok[1])] = float(tok[2])
        elif tok[0] == "END":
            break
    if z is None or y is None:
        raise ValueError("solution file lacks COLS/ROWS")
    if problem is not None:
        rp, rd, gap = residuals(problem, z, y)
        po, do = float(problem.c @ z), float(problem.b @ y)
    else:
        rp = rd = gap = float("nan")
        po = do = float("nan")
    return ConicSolution(z, y, status, rp, rd, gap, po, do, iterations=0, backend="external")
