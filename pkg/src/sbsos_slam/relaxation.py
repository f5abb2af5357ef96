"""Sparse bounded-degree SOS relaxation of the SLAM cost as a standard-form SDP.

For blocks ``(I_l, J_l)`` the program is::

    maximize t
    s.t.  f - t = sum_l f_l,                    f_l supported on I_l, deg <= 2
          f_l - h_l(lambda_l) = sigma_l,        sigma_l = b_l' Q_l b_l,  Q_l PSD
          lambda_l >= 0

with ``b_l = [1; x_{I_l}]`` and ``h_l`` the box-multiplier polynomial over the
constraints ``0 <= g_j <= 1``, ``j in J_l``.  Coefficient matching gives one
block row per (block, monomial) and one global row per monomial; the free
coefficients of ``f_l`` link them.  The signs are chosen so that the
equality duals of the block rows are the entries of the moment matrices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .factor_graph import Assignment, FactorGraph
from .poly import (
    ONE,
    ConstraintPoly,
    Monomial,
    Polynomial,
    build_constraints,
    build_costs,
    mono_degree,
    mono_mul,
    monomials_up_to_degree_two,
    poly_sum,
)
from .rip import Decomposition, decompose, rip_violations
from .sdp.problem import SdpProblem, tri_index, tri_size


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class RelaxationParams:
    k: int = 1
    d: int = 1
    gauge_anchor: int = 0

    def __post_init__(self):
        if self.k != 1:
            raise ValueError("only k = 1 (quadratic Gram bases) is supported")
        if self.d < 1:
            raise ValueError("d must be at least 1")


@dataclass
class GaugedProblem:
    """Costs and constraints after fixing the anchor pose to the identity."""

    costs: list[Polynomial]
    constraints: list[ConstraintPoly]
    variables: tuple[int, ...]
    anchor: int
    fixed: dict[int, float]


def apply_gauge(graph: FactorGraph, costs: Sequence[Polynomial], constraints: Sequence[ConstraintPoly], anchor: int = 0) -> GaugedProblem:
    """Substitute ``c=1, s=0, x=0, y=0`` for pose ``anchor`` and drop its constraints."""
    if not 0 <= anchor < graph.n:
        raise ValueError(f"anchor pose {anchor} is not in the graph")
    c, s, x, y = graph.index.pose(anchor)
    fixed = {c: 1.0, s: 0.0, x: 0.0, y: 0.0}
    reduced = [p.substitute(fixed) for p in costs]
    kept = [g for g in constraints if g.pose != anchor]
    variables = tuple(v for v in range(graph.index.size) if v not in fixed)
    return GaugedProblem(reduced, kept, variables, anchor, fixed)


def center_problem(gauged: GaugedProblem, center: Assignment) -> tuple[GaugedProblem, dict[int, float]]:
    """Rewrite in the offsets ``x - center`` of the free variables.

    An exact change of variables: the relaxation and its bound are the same,
    but the moment and Gram entries stay small when ``center`` is close to the
    minimizer, which keeps the cancellation in the constant row mild.
    """
    vec = center.to_vector()
    offsets = {v: float(vec[v]) for v in gauged.variables if vec[v] != 0.0}
    costs = [p.shift(offsets) for p in gauged.costs]
    cons = [ConstraintPoly(g.g.shift(offsets), g.pose, g.offset) for g in gauged.constraints]
    return GaugedProblem(costs, cons, gauged.variables, gauged.anchor, gauged.fixed), offsets


# ---------------------------------------------------------------- multipliers


@dataclass(frozen=True)
class MultiplierTerm:
    """``prod_j g_j^alpha_j (1 - g_j)^beta_j`` for constraint ids in ``alpha``/``beta``."""

    alpha: tuple[tuple[int, int], ...]
    beta: tuple[tuple[int, int], ...]
    poly: Polynomial

    @property
    def label(self) -> str:
        parts = [f"g{j}^{e}" if e > 1 else f"g{j}" for j, e in self.alpha]
        parts += [f"(1-g{j})^{e}" if e > 1 else f"(1-g{j})" for j, e in self.beta]
        return "*".join(parts) or "1"


def _g(con) -> Polynomial:
    return con.g if isinstance(con, ConstraintPoly) else con


def multiplier_index(constraint_ids: Sequence[int], d: int) -> list[tuple[tuple[tuple[int, int], ...], tuple[tuple[int, int], ...]]]:
    """All ``(alpha, beta)`` with support in ``constraint_ids`` and total degree ``<= d``.

    Ordered by total degree, then lexicographically; at ``d = 1`` this is
    ``(0,0)``, then ``e_j`` and ``ebar_j`` interleaved per constraint.
    """
    ids = sorted(constraint_ids)
    # one "slot" per (j, which) where which 0 -> g_j, 1 -> 1 - g_j
    slots = [(j, w) for j in ids for w in (0, 1)]
    out = []
    for deg in range(d + 1):
        for combo in itertools.combinations_with_replacement(range(len(slots)), deg):
            a: dict[int, int] = {}
            b: dict[int, int] = {}
            for k in combo:
                j, w = slots[k]
                tgt = a if w == 0 else b
                tgt[j] = tgt.get(j, 0) + 1
            out.append((tuple(sorted(a.items())), tuple(sorted(b.items()))))
    return out


def build_multiplier_poly(constraints: Sequence, constraint_ids: Sequence[int], d: int = 1) -> list[MultiplierTerm]:
    """Terms of ``h = sum lambda_ab prod g^a (1-g)^b``; one nonnegative ``lambda`` each.

    ``constraints`` is the full constraint list and ``constraint_ids`` the
    block's ``J``.  At ``d = 1`` there are ``2 |J| + 1`` terms.
    """
    terms = []
    for alpha, beta in multiplier_index(constraint_ids, d):
        p = Polynomial.constant(1.0)
        for j, e in alpha:
            p = p * _g(constraints[j]) ** e
        for j, e in beta:
            p = p * (1.0 - _g(constraints[j])) ** e
        terms.append(MultiplierTerm(alpha, beta, p))
    return terms


def monomial_basis(variables: Iterable[int]) -> list[Monomial]:
    """Gram basis ``[1, x_i1, x_i2, ...]`` in increasing variable order."""
    vs = sorted(set(variables))
    if not vs:
        raise AssemblyError("a block needs at least one variable")
    return [ONE] + [((v, 1),) for v in vs]


# ---------------------------------------------------------------- assembly


@dataclass
class Relaxation:
    """An assembled SDP plus the bookkeeping needed to read it back."""

    problem: SdpProblem
    decomposition: Decomposition
    params: RelaxationParams
    bases: list[list[Monomial]]
    block_rows: list[dict[Monomial, int]]
    global_rows: dict[Monomial, int]
    lambda_cols: list[list[tuple[MultiplierTerm, int]]]
    t_col: int
    variables: tuple[int, ...]
    anchor: int | None = None
    fixed: dict[int, float] = field(default_factory=dict)
    dense: bool = False
    constraints: list = field(default_factory=list)
    center: dict[int, float] = field(default_factory=dict)

    @property
    def num_blocks(self) -> int:
        return len(self.bases)

    def moment_rows(self, block: int) -> np.ndarray:
        """Equality-row index for every entry of block ``block``'s moment matrix."""
        basis = self.bases[block]
        rows = self.block_rows[block]
        n = len(basis)
        R = np.empty((n, n), dtype=int)
        for a in range(n):
            for b in range(a, n):
                R[a, b] = R[b, a] = rows[mono_mul(basis[a], basis[b])]
        return R

    def summary(self) -> dict:
        P = self.problem
        return {
            "blocks": self.num_blocks,
            "block_sizes": list(P.block_sizes),
            "rows": P.n_rows,
            "psd_columns": P.n_psd_cols,
            "nonneg": P.n_nonneg,
            "free": P.n_free,
            "nnz": int(P.A.nnz),
            "dense": self.dense,
        }


class _Builder:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []
        self.n_rows = 0
        self.row_labels = []

    def new_row(self, label) -> int:
        self.row_labels.append(label)
        self.n_rows += 1
        return self.n_rows - 1

    def add(self, r: int, c: int, v: float):
        self.rows.append(r)
        self.cols.append(c)
        self.vals.append(v)


def _check_degree(p: Polynomial, what: str):
    if p.degree > 2:
        raise AssemblyError(f"{what} has degree {p.degree}; k = 1 only represents degree <= 2")


def _block_layout(decomposition: Decomposition):
    sizes = [b.size + 1 for b in decomposition.blocks]
    psd_off = np.cumsum([0] + [tri_size(n) for n in sizes])
    return sizes, psd_off


def assemble(
    costs: Sequence[Polynomial],
    constraints: Sequence,
    decomposition: Decomposition,
    params: RelaxationParams = RelaxationParams(),
) -> Relaxation:
    """Assemble the sparse relaxation for blocks ``decomposition``.

    ``costs[t]`` must be quadratic and its support covered by the block that
    lists ``t`` among its terms; ``constraints[j]`` is a polynomial or a
    :class:`ConstraintPoly`.
    """
    problems = rip_violations(decomposition)
    if problems:
        raise AssemblyError("decomposition fails the running intersection check: " + "; ".join(problems))
    for t, p in enumerate(costs):
        _check_degree(p, f"cost term {t}")
    blocks = decomposition.blocks
    if not blocks:
        raise AssemblyError("no blocks to assemble")

    bases = [monomial_basis(b.variables) for b in blocks]
    mults = []
    for k, b in enumerate(blocks):
        terms = build_multiplier_poly(constraints, b.constraints, params.d)
        for m in terms:
            _check_degree(m.poly, f"multiplier {m.label} of block {k}")
        mults.append(terms)
    sizes, psd_off = _block_layout(decomposition)
    n_psd = int(psd_off[-1])
    n_lambda = sum(len(m) for m in mults)
    block_monos = [monomials_up_to_degree_two(b.variables) for b in blocks]
    n_free = 1 + sum(len(ms) for ms in block_monos)
    lam_base = n_psd
    t_col = n_psd + n_lambda

    B = _Builder()
    block_rows: list[dict[Monomial, int]] = []
    lambda_cols: list[list[tuple[MultiplierTerm, int]]] = []
    f_cols: dict[Monomial, list[int]] = {}
    lam_next = lam_base
    free_next = t_col + 1
    col_labels: list = [None] * (n_psd + n_lambda + n_free)
    for k, (b, basis, monos) in enumerate(zip(blocks, bases, block_monos)):
        rows = {m: B.new_row(("block", k, m)) for m in monos}
        block_rows.append(rows)
        n = len(basis)
        # <B_m, Q_k>, entry-valued upper triangle: off-diagonals count twice
        for a in range(n):
            for c in range(a, n):
                col = int(psd_off[k]) + tri_index(n, a, c)
                col_labels[col] = ("Q", k, a, c)
                B.add(rows[mono_mul(basis[a], basis[c])], col, 1.0 if a == c else 2.0)
        cols_k = []
        for term in mults[k]:
            col_labels[lam_next] = ("lambda", k, term.label)
            for m, v in term.poly.terms.items():
                B.add(rows[m], lam_next, v)
            cols_k.append((term, lam_next))
            lam_next += 1
        lambda_cols.append(cols_k)
        for m in monos:
            col_labels[free_next] = ("f", k, m)
            B.add(rows[m], free_next, -1.0)
            f_cols.setdefault(m, []).append(free_next)
            free_next += 1

    f_total = poly_sum(costs)
    for m in f_total.terms:
        if m not in f_cols:
            raise AssemblyError(f"monomial {m} of the cost is not covered by any block")
    global_rows: dict[Monomial, int] = {}
    glob_monos = sorted(f_cols, key=lambda m: (mono_degree(m), m))
    b_entries = []
    for m in glob_monos:
        r = B.new_row(("global", m))
        global_rows[m] = r
        for col in f_cols[m]:
            B.add(r, col, 1.0)
        if m == ONE:
            B.add(r, t_col, 1.0)
        b_entries.append((r, f_total.coefficient(m)))
    col_labels[t_col] = ("t",)
    b_vec = np.zeros(B.n_rows)
    for r, v in b_entries:
        b_vec[r] = v
    c_vec = np.zeros(n_psd + n_lambda + n_free)
    c_vec[t_col] = 1.0
    A = sp.csr_matrix((B.vals, (B.rows, B.cols)), shape=(B.n_rows, c_vec.size))
    A.sum_duplicates()
    problem = SdpProblem(tuple(sizes), n_lambda, n_free, A, b_vec, c_vec, B.row_labels, col_labels)
    variables = tuple(sorted(decomposition.variables)) if decomposition.variables is not None else tuple(
        sorted({v for b in blocks for v in b.variables})
    )
    return Relaxation(problem, decomposition, params, bases, block_rows, global_rows, lambda_cols, t_col, variables)


def assemble_dense(
    costs: Sequence[Polynomial],
    constraints: Sequence,
    variables: Iterable[int],
    params: RelaxationParams = RelaxationParams(),
) -> Relaxation:
    """Single-block relaxation ``f - t - h(lambda) = sigma`` over all variables."""
    variables = tuple(sorted(set(variables)))
    for t, p in enumerate(costs):
        _check_degree(p, f"cost term {t}")
    dec = Decomposition.from_sets([variables])
    blk = dec.blocks[0]
    dec = Decomposition(
        (type(blk)(blk.variables, tuple(range(len(constraints))), tuple(range(len(costs)))),),
        frozenset(variables),
        tuple(frozenset(p.support) for p in costs),
        tuple(frozenset(_g(g).support) for g in constraints),
    )
    basis = monomial_basis(variables)
    mults = build_multiplier_poly(constraints, range(len(constraints)), params.d)
    for m in mults:
        _check_degree(m.poly, f"multiplier {m.label}")
    n = len(basis)
    n_psd = tri_size(n)
    n_lambda = len(mults)
    t_col = n_psd + n_lambda
    monos = monomials_up_to_degree_two(variables)
    B = _Builder()
    rows = {m: B.new_row(("block", 0, m)) for m in monos}
    col_labels: list = [None] * (t_col + 1)
    for a in range(n):
        for c in range(a, n):
            col = tri_index(n, a, c)
            col_labels[col] = ("Q", 0, a, c)
            B.add(rows[mono_mul(basis[a], basis[c])], col, 1.0 if a == c else 2.0)
    cols = []
    for k, term in enumerate(mults):
        col_labels[n_psd + k] = ("lambda", 0, term.label)
        for m, v in term.poly.terms.items():
            B.add(rows[m], n_psd + k, v)
        cols.append((term, n_psd + k))
    B.add(rows[ONE], t_col, 1.0)
    col_labels[t_col] = ("t",)
    f_total = poly_sum(costs)
    b_vec = np.zeros(B.n_rows)
    for m, v in f_total.terms.items():
        if m not in rows:
            raise AssemblyError(f"monomial {m} of the cost lies outside the variable set")
        b_vec[rows[m]] = v
    c_vec = np.zeros(t_col + 1)
    c_vec[t_col] = 1.0
    A = sp.csr_matrix((B.vals, (B.rows, B.cols)), shape=(B.n_rows, c_vec.size))
    A.sum_duplicates()
    problem = SdpProblem((n,), n_lambda, 1, A, b_vec, c_vec, B.row_labels, col_labels)
    return Relaxation(problem, dec, params, [basis], [rows], dict(rows), [cols], t_col, variables, dense=True)


# ---------------------------------------------------------------- from a graph


def build_relaxation(
    graph: FactorGraph,
    params: RelaxationParams = RelaxationParams(),
    *,
    dense: bool = False,
    coalesce: bool = False,
    max_block_size: int | None = None,
    center: Assignment | None = None,
) -> Relaxation:
    """Gauge-fix, decompose and assemble the relaxation of ``graph``.

    With ``center`` the program is written in offsets from that assignment
    (see :func:`center_problem`); ``Relaxation.center`` records the offsets.
    """
    costs = build_costs(graph)
    constraints = build_constraints(graph.n, graph.index)
    gauged = apply_gauge(graph, costs, constraints, params.gauge_anchor)
    offsets: dict[int, float] = {}
    if center is not None:
        if center.n != graph.n or center.w != graph.w:
            raise ValueError("center assignment does not match the graph")
        gauged, offsets = center_problem(gauged, center)
    if dense:
        rel = assemble_dense(gauged.costs, gauged.constraints, gauged.variables, params)
    else:
        dec = decompose(
            [p.support for p in gauged.costs],
            [g.support for g in gauged.constraints],
            gauged.variables,
            coalesce=coalesce,
            max_block_size=max_block_size,
        )
        rel = assemble(gauged.costs, gauged.constraints, dec, params)
    rel.anchor = gauged.anchor
    rel.fixed = gauged.fixed
    rel.constraints = gauged.constraints
    rel.center = offsets
    return rel
