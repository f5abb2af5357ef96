"""Primal-dual interior-point method (HKM direction, Mehrotra corrector).

Intended as an accurate reference.  The Schur complement is assembled block
by block on the rows each PSD block touches, so it stays sparse for chordal
relaxations; it is factored densely when small and with a sparse LU
otherwise.  Free variables are handled exactly through the saddle-point form
of the Schur system, and each Newton solve gets iterative refinement.
"""

from __future__ import annotations

import time

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import ConeLayout
from .problem import ConicSolution, SdpProblem

DENSE_LIMIT = 3000


def _sym(M):
    return 0.5 * (M + M.T)


def skron(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Matrix of ``W -> sym(P W Q)`` in orthonormal ``svec`` coordinates (``P``, ``Q`` symmetric)."""
    n = P.shape[0]
    i, j = np.triu_indices(n)
    f = np.where(i == j, 0.5, 1.0 / np.sqrt(2.0))
    K = (
        P[np.ix_(i, i)] * Q[np.ix_(j, j)]
        + P[np.ix_(j, i)] * Q[np.ix_(i, j)]
        + P[np.ix_(i, j)] * Q[np.ix_(j, i)]
        + P[np.ix_(j, j)] * Q[np.ix_(i, i)]
    )
    return K * np.outer(f, f)


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    """Largest ``a`` with ``X + a dX`` PSD (``X`` positive definite)."""
    if X.size == 0:
        return np.inf
    L = np.linalg.cholesky(X)
    Li = sla.solve_triangular(L, np.eye(X.shape[0]), lower=True)
    lam = np.linalg.eigvalsh(_sym(Li @ dX @ Li.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_vec(x, dx):
    neg = dx < 0
    return float(np.min(-x[neg] / dx[neg])) if np.any(neg) else np.inf


class _Schur:
    """Row supports of every block, and assembly/factorization of the KKT matrix."""

    def __init__(self, A: sp.csr_matrix, cones: ConeLayout):
        Ac = A.tocsc()
        self.m = A.shape[0]
        self.blocks = []
        for k in range(len(cones.block_sizes)):
            Ak = Ac[:, cones.offsets[k] : cones.offsets[k + 1]].tocsr()
            rows = np.unique(Ak.tocoo().row)
            self.blocks.append((rows, Ak[rows].tocsr()))
        self.A_nn = Ac[:, cones.nonneg].tocsr()
        self.A_free = Ac[:, cones.free].tocsc()
        self.nf = cones.n_free
        self.dense = self.m + self.nf <= DENSE_LIMIT

    def _pieces(self, X, Zi):
        for (rows, Ak), Xk, Zik in zip(self.blocks, X, Zi):
            if rows.size:
                AK = Ak @ skron(Xk, Zik)
                yield rows, (Ak @ AK.T).T

    def factor(self, X, Zi, wl):
        m, nf = self.m, self.nf
        if self.dense:
            M = np.zeros((m, m))
            for rows, Mk in self._pieces(X, Zi):
                M[np.ix_(rows, rows)] += Mk
            if wl.size:
                M += (self.A_nn @ sp.diags(wl) @ self.A_nn.T).toarray()
            M[np.diag_indices(m)] += 1e-14 * max(np.trace(M) / max(m, 1), 1e-300)
            KKT = np.zeros((m + nf, m + nf))
            KKT[:m, :m] = M
            if nf:
                Af = self.A_free.toarray()
                KKT[:m, m:] = Af
                KKT[m:, :m] = Af.T
            lu = sla.lu_factor(KKT)
            return lambda r: sla.lu_solve(lu, r)
        rr, cc, vv = [], [], []
        for rows, Mk in self._pieces(X, Zi):
            r, c = np.meshgrid(rows, rows, indexing="ij")
            rr.append(r.ravel())
            cc.append(c.ravel())
            vv.append(Mk.ravel())
        M = sp.coo_matrix((np.concatenate(vv), (np.concatenate(rr), np.concatenate(cc))), shape=(m, m)).tocsc()
        if wl.size:
            M = M + (self.A_nn @ sp.diags(wl) @ self.A_nn.T).tocsc()
        M = M + 1e-14 * max(M.diagonal().mean(), 1e-300) * sp.identity(m, format="csc")
        KKT = sp.bmat([[M, self.A_free], [self.A_free.T, None]], format="csc") if nf else M
        lu = spla.splu(KKT, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
        return lu.solve


def solve_ipm(problem: SdpProblem, config) -> ConicSolution:
    t0 = time.perf_counter()
    cones = ConeLayout.of(problem)
    D = cones.scale
    A = (problem.A @ sp.diags(1.0 / D)).tocsr()
    b0 = problem.b
    C0 = -problem.c / D
    # iterate on data normalized to unit norm, report in original units
    nb = max(1.0, np.linalg.norm(b0))
    nc = max(1.0, np.linalg.norm(C0))
    b = b0 / nb
    C = C0 / nc
    m = A.shape[0]
    sizes = cones.block_sizes
    nblk = len(sizes)
    nn, nf = cones.n_nonneg, cones.n_free
    nu = max(cones.degree, 1)
    schur = _Schur(A, cones)
    A_free_T = schur.A_free.T.tocsr()

    row_norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
    norm_A = max(1.0, np.max(np.abs(A.data)) if A.nnz else 1.0)
    xi = max(10.0, np.sqrt(cones.n), float(np.max((1 + np.abs(b)) / (1 + row_norms))) if m else 1.0)
    eta = max(10.0, np.sqrt(cones.n), norm_A, np.linalg.norm(C))
    X = [xi * np.eye(n) for n in sizes]
    Z = [eta * np.eye(n) for n in sizes]
    xl = xi * np.ones(nn)
    sl = eta * np.ones(nn)
    u = np.zeros(nf)
    y = np.zeros(m)

    def pack(Xs, xl_, u_):
        return np.concatenate([cones.from_mats(Xs) if nblk else np.zeros(0), xl_, u_])

    def Aop(Xs, xl_, u_):
        return A @ pack(Xs, xl_, u_)

    def Atop(v):
        s = A.T @ v
        return (cones.mats(s) if nblk else []), s[cones.nonneg], s[cones.free]

    Cm = cones.mats(C) if nblk else []
    Cl = C[cones.nonneg]
    Cf = C[cones.free]
    nrm_b0 = 1.0 + np.linalg.norm(b0)
    nrm_C0 = 1.0 + np.linalg.norm(C0)
    status = "max-iter"
    it = 0
    pinf = dinf = gap = np.inf
    best = (np.inf, None)
    stall = 0
    for it in range(1, config.ipm_max_iter + 1):
        AtyM, Atyl, Atyf = Atop(y)
        rp = b - Aop(X, xl, u)
        Rd = [Cm[k] - AtyM[k] - Z[k] for k in range(nblk)]
        rdl = Cl - Atyl - sl
        rdf = Cf - Atyf
        pobj = (sum(np.sum(Cm[k] * X[k]) for k in range(nblk)) + Cl @ xl + Cf @ u) * nb * nc
        dobj = (b @ y) * nb * nc
        pinf = np.linalg.norm(rp) * nb / nrm_b0
        dinf = np.sqrt(sum(np.sum(R * R) for R in Rd) + rdl @ rdl + rdf @ rdf) * nc / nrm_C0
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        if config.verbose:
            print(f"ipm {it:3d}  pinf {pinf:.2e}  dinf {dinf:.2e}  gap {gap:.2e}  pobj {pobj:.10g}")
        if not np.all(np.isfinite([pinf, dinf, gap])):
            status = "numerical-failure"
            break
        worst = max(pinf, dinf, gap)
        if worst < best[0]:
            best = (worst, ([Xk.copy() for Xk in X], xl.copy(), u.copy(), y.copy(), (pinf, dinf, gap)))
            stall = 0
        else:
            stall += 1
        if worst <= config.tol:
            status = "optimal"
            break
        if stall >= 5:
            break
        if abs(dobj) > 1e12 * max(1.0, abs(pobj)) and pinf > 1e-3:
            status = "infeasible-detected"
            break
        mu = (sum(np.sum(X[k] * Z[k]) for k in range(nblk)) + xl @ sl) / nu

        try:
            Zi = [_sym(np.linalg.inv(Zk)) for Zk in Z]
            solve_kkt = schur.factor(X, Zi, xl / sl)
        except (np.linalg.LinAlgError, RuntimeError, ValueError):
            status = "numerical-failure"
            break

        def newton(rp_, Rd_, rdl_, rdf_, Rc, rcl):
            # dX = Rc - sym(X dZ Z^-1),  dZ = Rd - A* dy
            KRd = [_sym(X[k] @ Rd_[k] @ Zi[k]) for k in range(nblk)]
            rhs = rp_ - Aop([Rc[k] - KRd[k] for k in range(nblk)], rcl - (xl / sl) * rdl_, np.zeros(nf))
            sol = solve_kkt(np.concatenate([rhs, rdf_]))
            dy, du = sol[:m], sol[m:]
            AdyM, Adyl, _ = Atop(dy)
            dZ = [Rd_[k] - AdyM[k] for k in range(nblk)]
            dX = [Rc[k] - _sym(X[k] @ dZ[k] @ Zi[k]) for k in range(nblk)]
            dsl = rdl_ - Adyl
            dxl = rcl - (xl / sl) * dsl
            return dX, dxl, du, dy, dZ, dsl

        def direction(Rc, rcl):
            d = newton(rp, Rd, rdl, rdf, Rc, rcl)
            # iterative refinement of the primal equations A dx = rp, A_u' dy = rdf
            zeroM = [np.zeros_like(Xk) for Xk in X]
            for _ in range(config.ipm_refine):
                dX, dxl, du, dy, dZ, dsl = d
                r1 = rp - Aop(dX, dxl, du)
                r2 = rdf - A_free_T @ dy
                if np.linalg.norm(r1) + np.linalg.norm(r2) <= 1e-15 * (1 + np.linalg.norm(rp)):
                    break
                e = newton(r1, zeroM, np.zeros(nn), r2, zeroM, np.zeros(nn))
                d = tuple([a + c for a, c in zip(p_, q_)] if isinstance(p_, list) else p_ + q_ for p_, q_ in zip(d, e))
            return d

        def steps(dX, dxl, dZ, dsl):
            ap = min([1.0] + [_max_step(X[k], dX[k]) for k in range(nblk)] + [_max_step_vec(xl, dxl)])
            ad = min([1.0] + [_max_step(Z[k], dZ[k]) for k in range(nblk)] + [_max_step_vec(sl, dsl)])
            return ap, ad

        try:
            # predictor
            dX, dxl, du, dy, dZ, dsl = direction([-Xk for Xk in X], -xl)
            ap, ad = steps(dX, dxl, dZ, dsl)
            mu_aff = (
                sum(np.sum((X[k] + ap * dX[k]) * (Z[k] + ad * dZ[k])) for k in range(nblk))
                + (xl + ap * dxl) @ (sl + ad * dsl)
            ) / nu
            sigma = min(1.0, max(0.0, (mu_aff / max(mu, 1e-300)) ** 3))
            # corrector
            Rc = [sigma * mu * Zi[k] - X[k] - _sym(dX[k] @ dZ[k] @ Zi[k]) for k in range(nblk)]
            rcl = sigma * mu / sl - xl - dxl * dsl / sl
            dX, dxl, du, dy, dZ, dsl = direction(Rc, rcl)
            ap, ad = steps(dX, dxl, dZ, dsl)
        except (np.linalg.LinAlgError, RuntimeError):
            status = "numerical-failure"
            break
        gamma = 0.9 + 0.09 * min(ap, ad)
        ap = min(1.0, gamma * ap)
        ad = min(1.0, gamma * ad)
        X = [_sym(X[k] + ap * dX[k]) for k in range(nblk)]
        xl = xl + ap * dxl
        u = u + ap * du
        y = y + ad * dy
        Z = [_sym(Z[k] + ad * dZ[k]) for k in range(nblk)]
        sl = sl + ad * dsl

    if status != "optimal" and best[1] is not None:
        X, xl, u, y, (pinf, dinf, gap) = best[1]
        if status != "infeasible-detected":
            if best[0] <= 100 * config.tol:
                status = "near-optimal"
            elif stall >= 5:
                status = "numerical-failure"
    x = pack(X, xl, u)
    z = x * nb / D
    y_out = -y * nc
    return ConicSolution(
        z,
        y_out,
        status,
        float(pinf),
        float(dinf),
        float(gap),
        float(problem.c @ z),
        float(problem.b @ y_out),
        it,
        time.perf_counter() - t0,
        "ipm",
    )
