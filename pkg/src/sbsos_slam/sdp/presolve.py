"""Equality-row clean-up before solving.

Steps, in order:

1. free columns with no objective coefficient that touch one or two rows
   are eliminated (a singleton drops its row; a doubleton folds one row into
   the other);
2. zero rows are dropped (an inconsistent zero row marks the problem
   infeasible);
3. nonnegative columns with no objective coefficient that are parallel are
   merged: same-direction copies collapse into one column, and a pair
   pointing in opposite directions becomes a single free column (the pair
   spans a line, so only their difference matters);
4. duplicate rows (equal up to a nonzero factor) are dropped;
5. remaining rows are scaled to unit Euclidean norm.

:class:`PresolveMap` undoes all of it for a solution of the reduced problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .problem import ConicSolution, SdpProblem, residuals

ZERO_TOL = 1e-13


@dataclass
class _Elimination:
    col: int
    pivot_row: int
    other_row: int | None
    ratio: float  # other_row coefficient / pivot coefficient
    pivot_coef: float
    pivot_entries: dict[int, float]
    pivot_rhs: float


@dataclass
class _ColumnMerge:
    reduced_col: int
    members: list[tuple[int, float]]  # (original column, factor vs. representative)
    free: bool

    def assign(self, u: float, z: np.ndarray) -> None:
        if u >= 0 or not self.free:
            k, a = next((k, a) for k, a in self.members if a > 0)
        else:
            k, a = next((k, a) for k, a in self.members if a < 0)
        z[k] = u / a


@dataclass
class PresolveMap:
    original: SdpProblem
    kept_rows: np.ndarray
    row_scale: np.ndarray
    kept_cols: np.ndarray
    eliminations: list[_Elimination] = field(default_factory=list)
    merges: list[_ColumnMerge] = field(default_factory=list)
    removed_zero_rows: int = 0
    removed_duplicate_rows: int = 0
    infeasible: bool = False

    @property
    def removed_free_cols(self) -> int:
        return len(self.eliminations)

    @property
    def merged_cols(self) -> int:
        return sum(len(m.members) - 1 for m in self.merges)

    def recover(self, reduced: ConicSolution) -> ConicSolution:
        """Map a solution of the reduced problem back to the original rows/columns."""
        P = self.original
        y = np.zeros(P.n_rows)
        y[self.kept_rows] = reduced.y / self.row_scale
        z = np.zeros(P.n_cols)
        plain = self.kept_cols >= 0
        z[self.kept_cols[plain]] = reduced.z[plain]
        for m in self.merges:
            m.assign(float(reduced.z[m.reduced_col]), z)
        for e in reversed(self.eliminations):
            if e.pivot_row >= 0:
                y[e.pivot_row] = -e.ratio * y[e.other_row] if e.other_row is not None else 0.0
            rest = sum(v * z[k] for k, v in e.pivot_entries.items() if k != e.col)
            z[e.col] = (e.pivot_rhs - rest) / e.pivot_coef
        rp, rd, gap = residuals(P, z, y)
        return ConicSolution(
            z,
            y,
            reduced.status,
            rp,
            rd,
            gap,
            float(P.c @ z),
            float(P.b @ y),
            reduced.iterations,
            reduced.solve_time,
            reduced.backend,
            dict(reduced.info, reduced_primal_residual=reduced.primal_residual, reduced_dual_residual=reduced.dual_residual),
        )


def _rows_of(A: sp.csr_matrix) -> list[dict[int, float]]:
    A = A.tocsr()
    out = []
    for r in range(A.shape[0]):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        out.append({int(k): float(v) for k, v in zip(A.indices[lo:hi], A.data[lo:hi]) if v != 0.0})
    return out


def _eliminate_free(problem: SdpProblem, rows: list[dict[int, float]], b: np.ndarray, alive: np.ndarray):
    n_fixed = problem.n_psd_cols + problem.n_nonneg
    col_rows: dict[int, set[int]] = {}
    for r, row in enumerate(rows):
        for k in row:
            if k >= n_fixed:
                col_rows.setdefault(k, set()).add(r)
    candidates = sorted(k for k in range(n_fixed, problem.n_cols) if problem.c[k] == 0.0)
    eliminated: list[_Elimination] = []
    removed_cols = set()
    queue = list(candidates)
    while queue:
        k = queue.pop(0)
        if k in removed_cols:
            continue
        rs = sorted(col_rows.get(k, ()))
        if len(rs) == 0:
            removed_cols.add(k)  # unconstrained free column with zero cost
            eliminated.append(_Elimination(k, -1, None, 0.0, 1.0, {}, 0.0))
            continue
        if len(rs) > 2:
            continue
        if len(rs) == 1:
            pivot, other = rs[0], None
        else:
            r1, r2 = rs
            # fold the sparser row into the denser one
            pivot, other = (r1, r2) if (len(rows[r1]), -r1) <= (len(rows[r2]), -r2) else (r2, r1)
        a1 = rows[pivot][k]
        snapshot = dict(rows[pivot])
        ratio = 0.0
        if other is not None:
            ratio = rows[other][k] / a1
            target = rows[other]
            for j, v in snapshot.items():
                nv = target.get(j, 0.0) - ratio * v
                if abs(nv) <= ZERO_TOL * max(1.0, abs(v)):
                    target.pop(j, None)
                    if j >= n_fixed:
                        col_rows[j].discard(other)
                else:
                    target[j] = nv
                    if j >= n_fixed:
                        col_rows.setdefault(j, set()).add(other)
            target.pop(k, None)
            b[other] -= ratio * b[pivot]
        for j in snapshot:
            if j >= n_fixed:
                col_rows[j].discard(pivot)
        eliminated.append(_Elimination(k, pivot, other, ratio, a1, snapshot, float(b[pivot])))
        rows[pivot] = {}
        b[pivot] = 0.0
        alive[pivot] = False
        removed_cols.add(k)
        for j in snapshot:
            if j >= n_fixed and j not in removed_cols and problem.c[j] == 0.0:
                queue.append(j)
    return eliminated, removed_cols


def _merge_lookup(kept_cols: np.ndarray, merges: list[_ColumnMerge]) -> list[_ColumnMerge | None]:
    by_col = {m.reduced_col: m for m in merges}
    return [by_col.get(j) for j in range(kept_cols.size)]


def _merge_parallel(problem: SdpProblem, rows: list[dict[int, float]], alive: np.ndarray, removed: set[int]):
    """Group zero-cost nonneg columns by direction; returns ``{rep: [(col, factor)]}``."""
    lo, hi = problem.n_psd_cols, problem.n_psd_cols + problem.n_nonneg
    cols: dict[int, list[tuple[int, float]]] = {}
    for r, row in enumerate(rows):
        if not alive[r]:
            continue
        for k, v in row.items():
            if lo <= k < hi and problem.c[k] == 0.0:
                cols.setdefault(k, []).append((r, v))
    groups: dict[tuple, list[tuple[int, float]]] = {}
    for k in sorted(cols):
        entries = cols[k]
        norm = np.sqrt(sum(v * v for _, v in entries))
        sign = 1.0 if entries[0][1] > 0 else -1.0
        key = tuple((r, round(sign * v / norm, 12)) for r, v in entries)
        groups.setdefault(key, []).append((k, sign * norm))
    out = {}
    for members in groups.values():
        if len(members) < 2:
            continue
        rep, base = members[0]
        out[rep] = [(k, scale / base) for k, scale in members]
        for k, _ in members[1:]:
            removed.add(k)
            for r, _ in cols[k]:
                rows[r].pop(k, None)
    return out


def presolve(problem: SdpProblem, *, eliminate_free: bool = True, scale_rows: bool = True) -> tuple[SdpProblem, PresolveMap]:
    rows = _rows_of(problem.A)
    b = problem.b.copy()
    alive = np.ones(problem.n_rows, dtype=bool)
    eliminations, removed_cols = [], set()
    if eliminate_free:
        eliminations, removed_cols = _eliminate_free(problem, rows, b, alive)
    merged_away: set[int] = set()
    groups = _merge_parallel(problem, rows, alive, merged_away)

    infeasible = False
    n_zero = 0
    for r, row in enumerate(rows):
        if alive[r] and not row:
            alive[r] = False
            n_zero += 1
            if abs(b[r]) > 1e-12:
                infeasible = True

    norms = np.array([np.sqrt(sum(v * v for v in row.values())) if alive[r] else 1.0 for r, row in enumerate(rows)])
    seen: dict[tuple, int] = {}
    n_dup = 0
    for r, row in enumerate(rows):
        if not alive[r]:
            continue
        items = sorted(row.items())
        sign = 1.0 if items[0][1] > 0 else -1.0
        key = tuple((k, round(sign * v / norms[r], 12)) for k, v in items)
        if key in seen:
            r0 = seen[key]
            s0 = 1.0 if min(rows[r0].items())[1] > 0 else -1.0
            if abs(sign * b[r] / norms[r] - s0 * b[r0] / norms[r0]) > 1e-10 * (1 + abs(b[r0])):
                infeasible = True
            alive[r] = False
            n_dup += 1
        else:
            seen[key] = r

    kept_rows = np.flatnonzero(alive)
    # reduced column order: PSD, nonneg (incl. same-sign groups), free, new free
    to_free = [rep for rep, mem in groups.items() if any(a < 0 for _, a in mem)]
    gone = removed_cols | merged_away | set(to_free)
    kept_cols = [k for k in range(problem.n_cols) if k not in gone] + to_free
    n_nonneg_red = sum(1 for k in kept_cols if problem.n_psd_cols <= k < problem.n_psd_cols + problem.n_nonneg
                       and k not in to_free)
    col_pos = np.full(problem.n_cols, -1)
    col_pos[kept_cols] = np.arange(len(kept_cols))
    merges = [_ColumnMerge(int(col_pos[rep]), mem, rep in to_free) for rep, mem in groups.items()]
    kept_cols = np.array(kept_cols, dtype=int)
    for m in merges:
        kept_cols[m.reduced_col] = -1
    scale = norms[kept_rows] if scale_rows else np.ones(kept_rows.size)
    data, ri, ci = [], [], []
    for new_r, r in enumerate(kept_rows):
        for k, v in rows[r].items():
            data.append(v / scale[new_r])
            ri.append(new_r)
            ci.append(col_pos[k])
    A = sp.csr_matrix((data, (ri, ci)), shape=(kept_rows.size, kept_cols.size))
    reduced = SdpProblem(
        problem.block_sizes,
        n_nonneg_red,
        problem.n_free - len(removed_cols) + len(to_free),
        A,
        b[kept_rows] / scale,
        np.where(kept_cols >= 0, problem.c[np.maximum(kept_cols, 0)], 0.0),
        [problem.row_labels[r] for r in kept_rows] if problem.row_labels else None,
        [problem.col_labels[m.members[0][0]] if k < 0 else problem.col_labels[k] for k, m in
         zip(kept_cols, _merge_lookup(kept_cols, merges))] if problem.col_labels else None,
    )
    pmap = PresolveMap(problem, kept_rows, scale, kept_cols, eliminations, merges, n_zero, n_dup, infeasible)
    return reduced, pmap
