"""Alternating-direction augmented Lagrangian method for conic programs.

Works on the dual of ``min C'x, Ax = b, x in K``; each iteration is one
solve with the fixed matrix ``A A'`` (factored once), one batched
eigen-projection per PSD block size and a few sparse products.  The
penalty ``mu`` is adapted to keep primal and dual residuals balanced.

With ``config.scaling`` the data are first equilibrated (Ruiz): rows get
individual scales, nonneg and free columns individual scales and each PSD
block a single scale, so the cone is mapped onto itself.
"""

from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import ConeLayout
from .problem import ConicSolution, SdpProblem


def _factor(AAt: sp.spmatrix):
    AAt = sp.csc_matrix(AAt)
    try:
        lu = spla.splu(AAt, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError:
        # rank-deficient rows: regularize slightly
        lu = spla.splu(AAt + 1e-10 * sp.identity(AAt.shape[0], format="csc"), permc_spec="MMD_AT_PLUS_A")
    return lu.solve


def equilibrate(A: sp.csr_matrix, cones: ConeLayout, passes: int = 15) -> tuple[np.ndarray, np.ndarray]:
    """Ruiz-style scaling ``E A D`` that maps the cone onto itself.

    Nonneg and free columns get individual scales.  A PSD block gets a
    diagonal congruence ``X = diag(d) Xs diag(d)``, i.e. entry ``(a, b)`` is
    scaled by ``d_a d_b``, which keeps ``Xs`` PSD exactly when ``X`` is.
    """
    m, n = A.shape
    E = np.ones(m)
    D = np.ones(n)
    M = abs(A).tocsc()
    psd = []
    for k, nk in enumerate(cones.block_sizes):
        r, c = np.triu_indices(nk)
        psd.append((slice(cones.offsets[k], cones.offsets[k + 1]), r, c, np.ones(nk)))
    rest = slice(cones.n_psd, cones.n)
    for _ in range(passes):
        S = (sp.diags(E) @ M @ sp.diags(D)).tocsr()
        rmax = S.max(axis=1).toarray().ravel()
        cmax = S.max(axis=0).toarray().ravel()
        rmax[rmax == 0] = 1.0
        cmax[cmax == 0] = 1.0
        E /= np.sqrt(rmax)
        for sl, r, c, d in psd:
            cm = cmax[sl]
            # per index: worst column touching it, damped to a quarter power
            worst = np.zeros(d.size)
            np.maximum.at(worst, r, cm)
            np.maximum.at(worst, c, cm)
            worst[worst == 0] = 1.0
            d /= worst ** 0.25
            D[sl] = d[r] * d[c]
        D[rest] /= np.sqrt(cmax[rest])
        if np.max(np.abs(1 - rmax)) < 1e-2 and np.max(np.abs(1 - cmax)) < 1e-2:
            break
    return E, D


def solve_admm(problem: SdpProblem, config) -> ConicSolution:
    t0 = time.perf_counter()
    cones = ConeLayout.of(problem)
    Dsv = cones.scale
    A0 = (problem.A @ sp.diags(1.0 / Dsv)).tocsr()
    C0 = -problem.c / Dsv
    b0 = problem.b
    m = A0.shape[0]
    if m == 0:
        x = cones.project_primal(np.zeros(cones.n))
        return ConicSolution(x / Dsv, np.zeros(0), "optimal", 0.0, 0.0, 0.0, 0.0, 0.0, 0, time.perf_counter() - t0, "admm")

    if config.scaling:
        E, Dc = equilibrate(A0, cones)
    else:
        E, Dc = np.ones(m), np.ones(cones.n)
    A = (sp.diags(E) @ A0 @ sp.diags(Dc)).tocsr()
    b_s = E * b0
    C_s = Dc * C0
    nb = max(1.0, np.linalg.norm(b_s))
    nc = max(1.0, np.linalg.norm(C_s))
    b = b_s / nb
    C = C_s / nc
    At = A.T.tocsr()

    solve_AAt = _factor(A @ At)
    x = np.zeros(cones.n)
    S = np.zeros(cones.n)
    y = np.zeros(m)
    mu = config.admm_mu
    rho = config.admm_relax
    nrm_b0 = 1.0 + np.linalg.norm(b0)
    nrm_C0 = 1.0 + np.linalg.norm(C0)
    status = "max-iter"
    pinf = dinf = gap = np.inf
    history = []
    it = 0

    def metrics(x, y, S, Aty):
        # residuals of the unscaled problem
        xo = Dc * x * nb
        yo = E * y * nc
        rp = (A0 @ xo - b0)
        rd = (C_s - (At @ y) * nc - S * nc) / Dc
        po, do = C0 @ xo, b0 @ yo
        return (
            np.linalg.norm(rp) / nrm_b0,
            np.linalg.norm(rd) / nrm_C0,
            abs(po - do) / (1.0 + abs(po) + abs(do)),
        )

    for it in range(1, config.max_iter + 1):
        y = solve_AAt(mu * (b - A @ x) + A @ (C - S))
        Aty = At @ y
        V = C - Aty - mu * x
        S = cones.project_dual(V)
        x = x + rho * (S - V - mu * x) / mu

        if it % config.check_every == 0 or it == config.max_iter:
            pinf, dinf, gap = metrics(x, y, S, Aty)
            if config.verbose and it % (50 * config.check_every) == 0:
                print(f"admm {it:6d}  pinf {pinf:.2e}  dinf {dinf:.2e}  gap {gap:.2e}  mu {mu:.2e}")
            history.append((it, pinf, dinf, gap))
            if not (np.isfinite(pinf) and np.isfinite(dinf) and np.isfinite(gap)):
                status = "numerical-failure"
                break
            if np.linalg.norm(y) > 1e12:
                status = "infeasible-detected"
                break
            if max(pinf, dinf, gap) <= config.tol:
                status = "optimal"
                break
            ratio = pinf / max(dinf, 1e-300)
            if ratio > config.admm_balance:
                mu = min(mu * config.admm_mu_factor, 1e6)
            elif ratio < 1.0 / config.admm_balance:
                mu = max(mu / config.admm_mu_factor, 1e-6)

    if status == "max-iter" and max(pinf, dinf, gap) <= 100 * config.tol:
        status = "near-optimal"
    z = Dc * x * nb / Dsv
    y_out = -E * y * nc
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
        "admm",
        {"mu": mu, "history": history},
    )
