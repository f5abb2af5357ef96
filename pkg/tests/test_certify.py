from dataclasses import replace

import numpy as np
import pytest

from sbsos_slam.certify import (
    Certificate,
    ExtractionError,
    MomentBlock,
    certify,
    moment_block,
    recover_assignment,
    relative_gap,
    safe_lower_bound,
)
from sbsos_slam.datasets import NoiseSpec, synthesize
from sbsos_slam.factor_graph import Assignment, FactorGraph, RelPoseFactor, VariableIndex, total_cost
from sbsos_slam.lm import lm_solve, random_init
from sbsos_slam.pipeline import PipelineOptions, solve_graph
from sbsos_slam.sdp import SolverConfig


def test_rank_one_readoff():
    v = np.array([1.0, 0.6, 0.8])
    b = moment_block(np.outer(v, v), (0, 1))
    assert np.allclose(b.first_order, [0.6, 0.8])
    assert b.rank_ratio < 1e-12 and not b.psd_violation


def test_leading_entry_normalized():
    v = np.array([1.0, 0.6, 0.8])
    b = moment_block(2 * np.outer(v, v), (0, 1))
    assert b.matrix[0, 0] == 1.0 and b.scale == 2.0
    assert np.allclose(b.first_order, [0.6, 0.8])


def test_psd_violation_flagged():
    M = np.diag([1.0, 1.0, -0.1])
    assert moment_block(M, (0, 1)).psd_violation


def test_degenerate_lead_fails():
    with pytest.raises(ExtractionError):
        moment_block(np.zeros((3, 3)), (0, 1))


def _block(variables, values):
    v = np.concatenate([[1.0], values])
    return MomentBlock(tuple(variables), np.outer(v, v))


def test_projection_onto_circle():
    index = VariableIndex(1, 0)
    rec = recover_assignment([_block((0, 1, 2, 3), [0.3, 0.4, 2.0, -1.0])], index)
    assert np.allclose(rec.assignment.poses[0], [0.6, 0.8, 2.0, -1.0])
    c, s = rec.assignment.poses[0, :2]
    assert abs(c * c + s * s - 1) < 1e-15


def test_vanishing_rotation_flagged():
    index = VariableIndex(1, 0)
    rec = recover_assignment([_block((0, 1, 2, 3), [0.0, 0.0, 1.0, 1.0])], index)
    assert np.allclose(rec.assignment.poses[0, :2], [1.0, 0.0])
    assert any("vanish" in f for f in rec.flags)


def test_averaging_and_spread():
    index = VariableIndex(1, 1)
    rec = recover_assignment([_block((4, 5), [0.9, 0.0]), _block((4, 5), [1.1, 0.0]), _block((0, 1, 2, 3), [1, 0, 0, 0])], index)
    assert rec.assignment.landmarks[0, 0] == pytest.approx(1.0)
    assert rec.spread == pytest.approx(0.2)


def test_anchor_and_center_restored():
    index = VariableIndex(2, 0)
    rec = recover_assignment([_block((4, 5, 6, 7), [0.0, 0.5, 0.1, 0.2])], index, anchor=0, center={4: 1.0, 6: 3.0})
    assert np.allclose(rec.assignment.poses[0], [1, 0, 0, 0])
    assert np.allclose(rec.assignment.poses[1], [1.0 / np.hypot(1, 0.5), 0.5 / np.hypot(1, 0.5), 3.1, 0.2])


def test_unobserved_flagged():
    rec = recover_assignment([_block((0, 1, 2, 3), [1, 0, 0, 0])], VariableIndex(1, 1))
    assert any("unobserved" in f for f in rec.flags)


def test_zero_noise_certified():
    g, truth = synthesize("manhattan", 6, 1, NoiseSpec(seed=2, disabled=True))
    assert total_cost(g, truth) == pytest.approx(0.0, abs=1e-20)
    res = solve_graph(g)
    assert res.certified
    assert res.cost == pytest.approx(0.0, abs=1e-6)
    assert res.certificate.relative_gap == pytest.approx(0.0, abs=1e-6)


def test_perturbed_uncertified_and_gap_recomputed():
    g, truth = synthesize("manhattan", 6, 1, NoiseSpec(seed=3))
    res = solve_graph(g)
    assert res.certified
    bad = Assignment(res.estimate.poses + np.array([0, 0, 0.3, -0.2]), res.estimate.landmarks)
    cert = certify(g, bad, res.lower_bound)
    assert not cert.certified and cert.relative_gap > 1e-4
    assert cert.relative_gap == (total_cost(g, bad) - res.lower_bound) / max(1.0, abs(res.lower_bound))


def test_rank_ratio_blocks_certificate():
    g = FactorGraph(2, 0, [RelPoseFactor(0, 1, 0.0, 1.0, 0.0)])
    a = Assignment(np.array([[1.0, 0, 0, 0], [1.0, 0, 1, 0]]))
    assert certify(g, a, 0.0, [0.0]).certified
    assert not certify(g, a, 0.0, [0.01]).certified


def test_relative_gap_formula():
    assert relative_gap(3.0, 1.0) == 2.0
    assert relative_gap(201.0, 200.0) == 1.0 / 200.0
    assert relative_gap(0.5, 0.25) == 0.25


def test_certificate_json_roundtrip():
    import json

    c = Certificate(1.0, 1.00001, 1e-5, [1e-6, 2e-6], "certified-optimal")
    back = Certificate.from_dict(json.loads(c.to_json()))
    assert back == c


# ---------------------------------------------------------------- safe bound


@pytest.fixture(scope="module")
def loop_graph():
    return synthesize("loop", 8, 1, NoiseSpec(seed=500), closure_radius=1.5)[0]


@pytest.fixture(scope="module")
def ipm_reference(loop_graph):
    return solve_graph(loop_graph, PipelineOptions(solver=SolverConfig(backend="ipm")))


def _best_lm(graph, trials=10):
    return min(lm_solve(graph, random_init(graph, s)).cost for s in range(trials))


def test_safe_bound_tight_on_accurate_point(ipm_reference):
    b = ipm_reference.bound
    assert b.correction <= 0
    assert -b.correction < 1e-6 * max(1.0, abs(b.t))
    assert ipm_reference.certified


@pytest.mark.parametrize("dense", [False, True])
def test_safe_bound_sound_on_loose_admm(loop_graph, ipm_reference, dense):
    res = solve_graph(loop_graph, PipelineOptions(tol=1e-5, refine=0, dense=dense))
    assert res.bound.bound <= ipm_reference.cost
    assert res.bound.bound <= _best_lm(loop_graph)


def test_safe_bound_absorbs_inflated_t(ipm_reference):
    # raising t and shaking the Gram blocks makes c'z a false bound; the safe one must not follow
    rel = ipm_reference.relaxation
    sol = ipm_reference.solution
    P = rel.problem
    mats, lam, free = P.split(sol.z)
    rng = np.random.default_rng(3)
    mats = [M + 1e-4 * (E + E.T) for M, E in ((M, rng.standard_normal(M.shape)) for M in mats)]
    free[rel.t_col - P.n_psd_cols - P.n_nonneg] += 0.01
    bad = replace(sol, z=P.join(mats, lam, free), primal_objective=sol.primal_objective + 0.01)
    b = safe_lower_bound(bad, rel, ipm_reference.cost)
    assert b.t > ipm_reference.cost + 0.009
    assert b.bound <= ipm_reference.cost


def test_zero_noise_bound_below_zero():
    g, _ = synthesize("loop", 6, 1, NoiseSpec(seed=2, disabled=True), closure_radius=1.5)
    res = solve_graph(g)
    assert res.lower_bound <= 1e-12
    assert res.certified


def test_refinement_tightens_tolerance(loop_graph, ipm_reference):
    res = solve_graph(loop_graph, PipelineOptions(tol=1e-5))
    assert res.tol < 1e-5
    assert res.certified
    assert res.lower_bound <= min(ipm_reference.cost, _best_lm(loop_graph))


def test_no_refinement_when_uncertifiable():
    g, _ = synthesize("manhattan", 30, 0, NoiseSpec(kappa_rot=0.5, seed=1))
    res = solve_graph(g, PipelineOptions(tol=1e-6))
    if res.certified:
        pytest.skip("instance happened to be tight")
    assert res.tol == 1e-6
