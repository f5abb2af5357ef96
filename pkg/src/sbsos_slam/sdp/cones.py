"""Cone bookkeeping in scaled (``svec``) coordinates.

Solvers work with ``x = D z`` where ``D`` multiplies off-diagonal PSD entries
by ``sqrt(2)``; then ``x1 . x2 = <X1, X2>`` and projections are Euclidean.
"""

from __future__ import annotations

import numpy as np

from .problem import SdpProblem, tri_size

SQRT2 = np.sqrt(2.0)


class ConeLayout:
    def __init__(self, block_sizes, n_nonneg: int, n_free: int):
        self.block_sizes = tuple(block_sizes)
        self.n_nonneg = n_nonneg
        self.n_free = n_free
        self.offsets = np.cumsum([0] + [tri_size(n) for n in self.block_sizes])
        self.n_psd = int(self.offsets[-1])
        self.n = self.n_psd + n_nonneg + n_free
        self.nonneg = slice(self.n_psd, self.n_psd + n_nonneg)
        self.free = slice(self.n_psd + n_nonneg, self.n)
        scale = np.ones(self.n)
        for off, n in zip(self.offsets[:-1], self.block_sizes):
            r, c = np.triu_indices(n)
            scale[off : off + r.size][r != c] = SQRT2
        self.scale = scale
        # equal-size blocks are projected together with one batched eigh
        groups: dict[int, list[int]] = {}
        for k, n in enumerate(self.block_sizes):
            groups.setdefault(n, []).append(k)
        self._groups = []
        for n, ks in groups.items():
            r, c = np.triu_indices(n)
            idx = np.stack([np.arange(self.offsets[k], self.offsets[k + 1]) for k in ks])
            w = np.where(r == c, 1.0, 1.0 / SQRT2)
            self._groups.append((n, ks, idx, r, c, w))

    @classmethod
    def of(cls, problem: SdpProblem) -> ConeLayout:
        return cls(problem.block_sizes, problem.n_nonneg, problem.n_free)

    @property
    def degree(self) -> int:
        """Barrier parameter: sum of block orders plus nonneg count."""
        return sum(self.block_sizes) + self.n_nonneg

    def mats(self, x: np.ndarray) -> list[np.ndarray]:
        """PSD blocks of a scaled vector as dense symmetric matrices."""
        out = [None] * len(self.block_sizes)
        for n, keys, idx, r, c, w in self._groups:
            batch = self._to_mats(x[idx], n, r, c, w)
            for slot, k in enumerate(keys):
                out[k] = batch[slot]
        return out

    @staticmethod
    def _to_mats(v, n, r, c, w):
        M = np.zeros((v.shape[0], n, n))
        vals = v * w
        M[:, r, c] = vals
        M[:, c, r] = vals
        return M

    @staticmethod
    def _from_mats(M, r, c, w):
        return M[:, r, c] / w

    def from_mats(self, mats) -> np.ndarray:
        out = np.zeros(self.n_psd)
        for n, keys, idx, r, c, w in self._groups:
            batch = np.stack([mats[k] for k in keys])
            out[idx] = self._from_mats(batch, r, c, w)
        return out

    def project_psd_part(self, x: np.ndarray, out: np.ndarray) -> None:
        for n, _, idx, r, c, w in self._groups:
            M = self._to_mats(x[idx], n, r, c, w)
            lam, V = np.linalg.eigh(M)
            np.maximum(lam, 0.0, out=lam)
            P = (V * lam[:, None, :]) @ V.transpose(0, 2, 1)
            out[idx] = self._from_mats(P, r, c, w)

    def project_primal(self, x: np.ndarray) -> np.ndarray:
        """Projection onto PSD x R+ x R^free."""
        out = np.empty_like(x)
        self.project_psd_part(x, out)
        out[self.nonneg] = np.maximum(x[self.nonneg], 0.0)
        out[self.free] = x[self.free]
        return out

    def project_dual(self, x: np.ndarray) -> np.ndarray:
        """Projection onto the dual cone PSD x R+ x {0}."""
        out = np.empty_like(x)
        self.project_psd_part(x, out)
        out[self.nonneg] = np.maximum(x[self.nonneg], 0.0)
        out[self.free] = 0.0
        return out

    def min_eigs(self, x: np.ndarray) -> list[float]:
        return [float(np.linalg.eigvalsh(M)[0]) if M.size else 0.0 for M in self.mats(x)]
