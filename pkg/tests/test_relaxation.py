import numpy as np
import pytest

from sbsos_slam.datasets import NoiseSpec, synthesize
from sbsos_slam.factor_graph import Assignment, FactorGraph, Pose2, RelPoseFactor, total_cost
from sbsos_slam.poly import ONE, ConstraintPoly, Polynomial, build_constraints, build_costs, monomial
from sbsos_slam.relaxation import (
    AssemblyError,
    RelaxationParams,
    apply_gauge,
    assemble,
    assemble_dense,
    build_multiplier_poly,
    build_relaxation,
    monomial_basis,
)
from sbsos_slam.rip import Block, Decomposition
from sbsos_slam.sdp import SolverConfig, presolve, solve

X = Polynomial.variable
IPM = SolverConfig(backend="ipm", tol=1e-9)


def one_edge():
    return FactorGraph(2, 0, [RelPoseFactor(0, 1, 0.3, 1.0, 0.5)])


def test_gauge_single_edge():
    g = one_edge()
    gp = apply_gauge(g, build_costs(g), build_constraints(g.n, g.index), 0)
    assert gp.variables == (4, 5, 6, 7)
    assert len(gp.constraints) == 2
    assert all(p.support <= {4, 5, 6, 7} for p in gp.costs)


def test_gauge_substitution_preserves_cost(rng):
    g, _ = synthesize("manhattan", 5, 1, NoiseSpec(seed=3))
    gp = apply_gauge(g, build_costs(g), build_constraints(g.n, g.index), 0)
    th = rng.uniform(-3, 3, 5)
    a = Assignment(np.column_stack([np.cos(th), np.sin(th), rng.normal(size=(5, 2))]), rng.normal(size=(1, 2))).anchored(0)
    v = a.to_vector()
    assert sum(p.eval(v) for p in gp.costs) == pytest.approx(total_cost(g, a), rel=1e-12)


def test_gauge_bad_anchor():
    g = one_edge()
    with pytest.raises(ValueError):
        apply_gauge(g, build_costs(g), build_constraints(g.n, g.index), 5)


def test_multiplier_poly():
    assert [t.poly for t in build_multiplier_poly([], [], 1)] == [Polynomial.constant(1.0)]
    g = 1.0 - X(0) * X(0) - X(1) * X(1)
    terms = build_multiplier_poly([g], [0], 1)
    assert [t.poly for t in terms] == [Polynomial.constant(1.0), g, X(0) * X(0) + X(1) * X(1)]
    cons = build_constraints(3)
    assert len(build_multiplier_poly(cons, range(6), 1)) == 2 * 6 + 1


def test_monomial_basis():
    assert len(monomial_basis(range(8))) == 9
    assert monomial_basis([3, 1]) == [ONE, ((1, 1),), ((3, 1),)]
    with pytest.raises(AssemblyError):
        monomial_basis([])


def _single_block(costs, cons, variables):
    dec = Decomposition(
        (Block(tuple(variables), tuple(range(len(cons))), tuple(range(len(costs)))),),
        frozenset(variables),
        tuple(p.support for p in costs),
        tuple(c.support for c in cons),
    )
    return assemble(costs, cons, dec)


def test_perfect_square_bound_is_zero():
    rel = _single_block([X(0) * X(0)], [], [0])
    s = solve(rel.problem, IPM)
    assert s.status == "optimal"
    assert s.primal_objective == pytest.approx(0.0, abs=1e-7)


def test_box_constrained_square():
    # f = (x - 1)^2 with 0 <= x <= 1; minimum 0 at x = 1
    x = X(0)
    rel = _single_block([(x - 1.0) * (x - 1.0)], [x], [0])
    s = solve(rel.problem, IPM)
    assert s.primal_objective == pytest.approx(0.0, abs=1e-6)


def test_box_constraint_is_active():
    # f = (x - 2)^2 on [0, 1]: minimum 1 at x = 1
    x = X(0)
    rel = _single_block([(x - 2.0) * (x - 2.0)], [x], [0])
    s = solve(rel.problem, IPM)
    assert s.primal_objective == pytest.approx(1.0, abs=1e-6)


def test_degree_check():
    with pytest.raises(AssemblyError):
        _single_block([X(0) ** 3], [], [0])


def test_rip_check_before_assembly():
    dec = Decomposition.from_sets([{1, 2}, {3, 4}, {1, 4}])
    with pytest.raises(AssemblyError):
        assemble([X(1) * X(2)], [], dec)


def test_single_block_matches_dense():
    g, _ = synthesize("manhattan", 2, 0, NoiseSpec(seed=1))
    sparse = build_relaxation(g)
    dense = build_relaxation(g, dense=True)
    assert sparse.num_blocks == 1
    rs, _ = presolve(sparse.problem)
    rd, _ = presolve(dense.problem)
    assert rs.block_sizes == rd.block_sizes
    assert (rs.n_rows, rs.n_cols, rs.n_nonneg, rs.n_free) == (rd.n_rows, rd.n_cols, rd.n_nonneg, rd.n_free)
    assert np.allclose(np.sort(np.abs(rs.A.data)), np.sort(np.abs(rd.A.data)))
    a = solve(sparse.problem, IPM).primal_objective
    b = solve(dense.problem, IPM).primal_objective
    assert a == pytest.approx(b, rel=1e-7)


def test_monomial_closure():
    g, _ = synthesize("manhattan", 6, 1, NoiseSpec(seed=2))
    rel = build_relaxation(g)
    labels = rel.problem.row_labels
    assert len(labels) == len(set(labels))
    for k, basis in enumerate(rel.bases):
        R = rel.moment_rows(k)
        assert R[0, 0] == rel.block_rows[k][ONE]


def test_weak_duality_against_truth():
    for seed in range(3):
        g, truth = synthesize("manhattan", 6, 1, NoiseSpec(seed=seed))
        s = solve(build_relaxation(g).problem, IPM)
        assert s.primal_objective <= total_cost(g, truth) + 1e-6


def test_centering_is_exact():
    g, truth = synthesize("manhattan", 5, 1, NoiseSpec(seed=4))
    plain = solve(build_relaxation(g).problem, IPM).primal_objective
    shifted = build_relaxation(g, center=truth.anchored(0))
    assert solve(shifted.problem, IPM).primal_objective == pytest.approx(plain, rel=1e-6, abs=1e-7)
    assert set(shifted.center) <= set(shifted.variables)


def test_dense_flag_single_block():
    g, _ = synthesize("manhattan", 4, 0, NoiseSpec(seed=5))
    rel = build_relaxation(g, dense=True)
    assert rel.dense and rel.num_blocks == 1
    assert rel.problem.block_sizes == (len(rel.variables) + 1,)
