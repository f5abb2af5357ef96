import io
import sys

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.stats import ortho_group

from sbsos_slam.sdp import SdpProblem, SolverConfig, presolve, read_sdp, read_solution, residuals, solve, write_sdp, write_solution
from sbsos_slam.sdp.problem import matrix_to_tri, tri_index, tri_size, tri_to_matrix

BACKENDS = ("ipm", "admm")


def cfg(backend, tol=1e-9):
    return SolverConfig(backend=backend, tol=tol)


def complementary_problem(rng, sizes=(3, 4), nn=3, nf=2, m=12):
    """Random SDP with a planted strictly complementary primal-dual pair.

    Returns the problem and its optimal value ``c'z0 = b'y0``.
    """
    mats_x, mats_s = [], []
    for n in sizes:
        Q = ortho_group.rvs(n, random_state=rng)
        r = rng.integers(1, n)
        mats_x.append(Q[:, :r] @ np.diag(rng.uniform(1, 2, r)) @ Q[:, :r].T)
        mats_s.append(Q[:, r:] @ np.diag(rng.uniform(1, 2, n - r)) @ Q[:, r:].T)
    on = rng.random(nn) < 0.5
    lam_x = np.where(on, rng.uniform(1, 2, nn), 0.0)
    lam_s = np.where(on, 0.0, rng.uniform(1, 2, nn))
    z0 = np.concatenate([matrix_to_tri(X) for X in mats_x] + [lam_x, rng.normal(size=nf)])
    # slack in column form: off-diagonal entries carry twice the matrix value
    s0 = np.concatenate([matrix_to_tri(S * (2 - np.eye(S.shape[0]))) for S in mats_s] + [lam_s, np.zeros(nf)])
    ncol = z0.size
    A = rng.normal(size=(m, ncol))
    y0 = rng.normal(size=m)
    P = SdpProblem(sizes, nn, nf, sp.csr_matrix(A), A @ z0, A.T @ y0 - s0)
    return P, float(P.c @ z0)


def test_tri_layout():
    assert tri_size(3) == 6
    assert [tri_index(3, r, c) for r, c in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]] == list(range(6))
    M = np.array([[1.0, 2, 3], [2, 4, 5], [3, 5, 6]])
    assert np.array_equal(tri_to_matrix(matrix_to_tri(M), 3), M)


def small_psd_problem():
    # maximize -t  s.t. [[t, 1], [1, t]] PSD; optimum t = 1
    cols = 3 + 1
    A = np.zeros((3, cols))
    A[0, 0], A[0, 3] = 1, -1
    A[1, 2], A[1, 3] = 1, -1
    A[2, 1] = 1
    c = np.zeros(cols)
    c[3] = -1
    return SdpProblem((2,), 0, 1, sp.csr_matrix(A), np.array([0.0, 0.0, 1.0]), c)


@pytest.mark.parametrize("backend", BACKENDS)
def test_two_by_two(backend):
    s = solve(small_psd_problem(), cfg(backend))
    assert s.status == "optimal"
    assert s.primal_objective == pytest.approx(-1.0, abs=1e-6)
    assert s.z[3] == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("backend", BACKENDS)
def test_lp(backend):
    # minimize x s.t. x - s = 3, x, s >= 0
    P = SdpProblem((), 2, 0, sp.csr_matrix([[1.0, -1.0]]), np.array([3.0]), np.array([-1.0, 0.0]))
    s = solve(P, cfg(backend))
    assert s.z[0] == pytest.approx(3.0, abs=1e-6)
    assert s.dual_objective == pytest.approx(-3.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(8))
def test_backends_agree_with_planted_optimum(seed):
    rng = np.random.default_rng(seed)
    P, opt = complementary_problem(rng)
    vals = {}
    for backend in BACKENDS:
        s = solve(P, cfg(backend))
        assert s.ok, (backend, s.status)
        rp, rd, gap = residuals(P, s.z, s.y)
        assert max(rp, rd) < 1e-6
        vals[backend] = s.primal_objective
        assert s.primal_objective == pytest.approx(opt, rel=1e-6, abs=1e-6)
    assert abs(vals["ipm"] - vals["admm"]) <= 1e-6 * max(1.0, abs(opt))


def test_solution_in_cone():
    P, _ = complementary_problem(np.random.default_rng(3))
    s = solve(P, cfg("ipm"))
    mats, lam, _ = P.split(s.z)
    assert all(np.linalg.eigvalsh(M)[0] > -1e-7 for M in mats)
    assert np.all(lam > -1e-7)
    smats, slam, sfree = P.dual_slack(s.y)
    assert all(np.linalg.eigvalsh(M)[0] > -1e-6 for M in smats)
    assert np.all(slam > -1e-6) and np.abs(sfree).max() < 1e-6


def test_presolve_identity_on_clean_problem():
    P, _ = complementary_problem(np.random.default_rng(1))
    R, pmap = presolve(P, eliminate_free=False, scale_rows=False)
    assert R.same_structure(P)
    assert pmap.removed_zero_rows == pmap.removed_duplicate_rows == pmap.merged_cols == 0
    assert np.allclose(R.A.toarray(), P.A.toarray()) and np.allclose(R.b, P.b) and np.allclose(R.c, P.c)


def test_presolve_duplicates_and_zero_rows():
    P, opt = complementary_problem(np.random.default_rng(2))
    A = P.A.toarray()
    A2 = np.vstack([A, 2.5 * A[0], -A[3], np.zeros(A.shape[1])])
    b2 = np.concatenate([P.b, [2.5 * P.b[0], -P.b[3], 0.0]])
    Q = SdpProblem(P.block_sizes, P.n_nonneg, P.n_free, sp.csr_matrix(A2), b2, P.c)
    R, pmap = presolve(Q)
    assert pmap.removed_duplicate_rows == 2 and pmap.removed_zero_rows == 1
    assert R.n_rows == P.n_rows
    s = solve(Q, cfg("ipm"))
    assert s.primal_objective == pytest.approx(opt, rel=1e-6)
    assert residuals(Q, s.z, s.y)[0] < 1e-7


def test_presolve_idempotent():
    P, _ = complementary_problem(np.random.default_rng(4))
    R1, _ = presolve(P)
    R2, pmap = presolve(R1)
    assert R2.same_structure(R1)
    assert pmap.removed_duplicate_rows == pmap.removed_zero_rows == pmap.removed_free_cols == 0
    assert np.allclose(R2.A.toarray(), R1.A.toarray())


def test_presolve_free_singleton():
    # free column in one row with zero cost: the row disappears
    A = np.array([[1.0, -1.0, 1.0], [1.0, 1.0, 0.0]])
    P = SdpProblem((), 2, 1, sp.csr_matrix(A), np.array([5.0, 4.0]), np.array([-1.0, -2.0, 0.0]))
    R, pmap = presolve(P)
    assert pmap.removed_free_cols == 1 and R.n_rows == 1
    s = solve(P, cfg("ipm"))
    assert s.primal_objective == pytest.approx(-4.0, abs=1e-6)
    assert residuals(P, s.z, s.y)[0] < 1e-7


def test_presolve_opposite_columns_become_free():
    # lam1 - lam2 appears only as a difference: merged into a free column
    A = np.array([[1.0, -1.0, 1.0]])
    P = SdpProblem((), 3, 0, sp.csr_matrix(A), np.array([2.0]), np.array([0.0, 0.0, -1.0]))
    R, pmap = presolve(P)
    assert pmap.merged_cols == 1 and R.n_free == 1
    s = solve(P, cfg("ipm"))
    assert s.primal_objective == pytest.approx(0.0, abs=1e-6)
    assert np.all(s.z > -1e-9)
    assert residuals(P, s.z, s.y)[0] < 1e-7


def test_infeasible_detected():
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    P = SdpProblem((), 2, 0, sp.csr_matrix(A), np.array([1.0, 3.0]), np.zeros(2))
    assert solve(P, cfg("ipm")).status == "infeasible-detected"


def test_write_read_roundtrip():
    P, _ = complementary_problem(np.random.default_rng(5))
    buf = io.StringIO()
    write_sdp(P, buf)
    Q = read_sdp(io.StringIO(buf.getvalue()))
    assert Q.same_structure(P)
    assert np.array_equal(Q.A.toarray(), P.A.toarray()) and np.array_equal(Q.b, P.b) and np.array_equal(Q.c, P.c)
    s = solve(P, cfg("ipm"))
    out = io.StringIO()
    write_solution(s, out)
    t = read_solution(io.StringIO(out.getvalue()), P)
    assert np.array_equal(t.z, s.z) and np.array_equal(t.y, s.y) and t.status == s.status


def test_read_rejects_garbage():
    with pytest.raises(ValueError):
        read_sdp(io.StringIO("hello\n"))
    with pytest.raises(ValueError):
        read_sdp(io.StringIO("SBSOS-SDP 1\nNONNEG 1\nFREE 0\nROWS 1\nQ 1\nEND\n"))


@pytest.mark.parametrize("backend", BACKENDS)
def test_deterministic(backend):
    P, _ = complementary_problem(np.random.default_rng(6))
    a, b = solve(P, cfg(backend)), solve(P, cfg(backend))
    assert np.array_equal(a.z, b.z) and np.array_equal(a.y, b.y)


def test_max_iter_status():
    P, _ = complementary_problem(np.random.default_rng(7))
    s = solve(P, SolverConfig(backend="admm", tol=1e-12, max_iter=20, check_every=5))
    assert s.status == "max-iter" and not s.ok


def test_external_backend(tmp_path):
    script = tmp_path / "ext.py"
    script.write_text(
        "import sys\n"
        "from sbsos_slam.sdp import SolverConfig, read_sdp, solve, write_solution\n"
        "P = read_sdp(open(sys.argv[1]))\n"
        "write_solution(solve(P, SolverConfig(backend='ipm', tol=1e-9)), open(sys.argv[2], 'w'))\n"
    )
    command = f"{sys.executable} {script} {{problem}} {{solution}}"
    s = solve(small_psd_problem(), SolverConfig(backend="external", external_command=command))
    assert s.primal_objective == pytest.approx(-1.0, abs=1e-6)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(backend="nope")
    with pytest.raises(ValueError):
        SolverConfig(tol=0)
